#include "dtr1/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dtr1/metrics.hpp"
#include "dtr1/twin.hpp"

namespace dtr1 {

using json = nlohmann::json;

namespace {

std::string lower_trim(std::string_view s) {
  std::string out;
  for (char c : s) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  const auto first = out.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = out.find_last_not_of(" \t\r\n");
  return out.substr(first, last - first + 1);
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

BinaryMask mask_from_json(const json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("width") || !j.contains("height") || !j.contains("runs") ||
      !j["width"].is_number_integer() || !j["height"].is_number_integer() || !j["runs"].is_array()) {
    throw SchemaError(path, "expected {width, height, runs}");
  }
  BinaryMask m;
  m.width = j["width"].get<int>();
  m.height = j["height"].get<int>();
  for (const auto& r : j["runs"]) {
    if (!r.is_number_unsigned()) throw SchemaError(path + ".runs", "expected non-negative integers");
    m.runs.push_back(r.get<std::uint32_t>());
  }
  try {
    (void)mask_decode(m);
  } catch (const std::invalid_argument& e) {
    throw SchemaError(path + ".runs", e.what());
  }
  return m;
}

json mask_to_json(const BinaryMask& m) { return json{{"width", m.width}, {"height", m.height}, {"runs", m.runs}}; }

BoundingBox box_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 4 ||
      !std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_number_integer(); })) {
    throw SchemaError(path, "expected four integers");
  }
  BoundingBox b{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
  if (!b.valid()) throw SchemaError(path, "empty or negative box");
  return b;
}

int frame_key(const std::string& key, const std::string& path) {
  int t = -1;
  try {
    std::size_t used = 0;
    t = std::stoi(key, &used);
    if (used != key.size()) t = -1;
  } catch (const std::exception&) {
  }
  if (t < 0) throw SchemaError(path + "." + key, "frame keys must be non-negative integers");
  return t;
}

// Grounding boxes from {"box", "frames": [first, last]} or {"boxes": {t: box}}.
std::map<int, BoundingBox> boxes_from_json(const json& j, const std::string& path) {
  std::map<int, BoundingBox> out;
  if (j.contains("boxes")) {
    if (!j["boxes"].is_object() || j["boxes"].empty()) throw SchemaError(path + "boxes", "expected non-empty object");
    for (const auto& [k, v] : j["boxes"].items()) out[frame_key(k, path + "boxes")] = box_from_json(v, path + "boxes." + k);
    return out;
  }
  if (!j.contains("box")) throw SchemaError(path + "box", "missing field");
  const auto box = box_from_json(j["box"], path + "box");
  int first = 0, last = 0;
  if (j.contains("frames")) {
    const auto& fr = j["frames"];
    if (!fr.is_array() || fr.size() != 2 || !fr[0].is_number_integer() || !fr[1].is_number_integer() ||
        fr[0].get<int>() < 0 || fr[1].get<int>() < fr[0].get<int>()) {
      throw SchemaError(path + "frames", "expected [first, last] with 0 <= first <= last");
    }
    first = fr[0].get<int>();
    last = fr[1].get<int>();
  }
  for (int t = first; t <= last; ++t) out[t] = box;
  return out;
}

std::string format_double(double d) {
  std::ostringstream os;
  os << d;
  return os.str();
}

}  // namespace

std::string_view task_type_name(TaskType t) {
  switch (t) {
    case TaskType::Segmentation: return "segmentation";
    case TaskType::Grounding: return "grounding";
    case TaskType::Summarization: return "summarization";
    case TaskType::Vqa: return "vqa";
  }
  return "vqa";
}

namespace {

// Labels written the way rollouts are expected to spell them; anything else
// that still normalizes earns a diagnostic.
bool canonical_task_label(const std::string& lowered, TaskType t) {
  std::string name(task_type_name(t));
  if (t == TaskType::Vqa && (lowered == "visual question answering" || lowered == "reasoning visual question answering")) {
    return true;
  }
  return lowered == name || lowered == "reasoning " + name;
}

}  // namespace

std::optional<TaskType> normalize_task(std::string_view label) {
  std::string s = lower_trim(label);
  // Drop the word "reasoning" and any punctuation, collapse whitespace.
  std::istringstream words(s);
  std::string word, joined;
  while (words >> word) {
    word.erase(std::remove_if(word.begin(), word.end(),
                              [](char c) { return !std::isalnum(static_cast<unsigned char>(c)) && c != '-'; }),
               word.end());
    if (word.empty() || word == "reasoning") continue;
    joined += (joined.empty() ? "" : " ") + word;
  }
  static const std::map<std::string, TaskType> names = {
      {"segmentation", TaskType::Segmentation},
      {"video segmentation", TaskType::Segmentation},
      {"grounding", TaskType::Grounding},
      {"video grounding", TaskType::Grounding},
      {"summarization", TaskType::Summarization},
      {"summarisation", TaskType::Summarization},
      {"summary", TaskType::Summarization},
      {"vqa", TaskType::Vqa},
      {"visual question answering", TaskType::Vqa},
      {"video question answering", TaskType::Vqa},
      {"question answering", TaskType::Vqa},
  };
  auto it = names.find(joined);
  if (it == names.end()) return std::nullopt;
  return it->second;
}

void RewardConfig::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(beta)) throw std::invalid_argument("reward weights must be finite");
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) throw std::invalid_argument("iou_threshold must lie in (0, 1)");
}

void GroundTruth::validate() const {
  const bool ok = (task_type == TaskType::Segmentation && std::holds_alternative<SegmentationTruth>(payload)) ||
                  (task_type == TaskType::Grounding && std::holds_alternative<GroundingTruth>(payload)) ||
                  ((task_type == TaskType::Summarization || task_type == TaskType::Vqa) &&
                   std::holds_alternative<TextTruth>(payload));
  if (!ok) throw std::invalid_argument("ground-truth payload does not match task type");
}

GroundTruth ground_truth_from_text(std::string_view text, const std::filesystem::path& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("ground truth is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("", "expected object");
  if (j.contains("schema") && j["schema"] != kGroundTruthSchema) throw SchemaError("schema", "expected dtr1-gt/1");
  if (!j.contains("task_type") || !j["task_type"].is_string()) throw SchemaError("task_type", "missing field");
  GroundTruth gt;
  const auto type_label = j["task_type"].get<std::string>();
  const auto type = normalize_task(type_label);
  if (!type) throw SchemaError("task_type", "unknown task type \"" + type_label + "\"");
  gt.task_type = *type;

  switch (gt.task_type) {
    case TaskType::Segmentation: {
      if (!j.contains("masks") || !j["masks"].is_object() || j["masks"].empty()) {
        throw SchemaError("masks", "expected non-empty object of frame -> mask");
      }
      SegmentationTruth seg;
      for (const auto& [k, v] : j["masks"].items()) {
        const auto t = frame_key(k, "masks");
        if (v.is_string()) {
          const auto p = base / v.get<std::string>();
          try {
            seg.frames[t] = read_mask_file(p);
          } catch (const std::exception& e) {
            throw GroundTruthFileError("cannot read ground-truth mask " + p.string() + ": " + e.what());
          }
        } else {
          seg.frames[t] = mask_from_json(v, "masks." + k);
        }
      }
      const auto& first = seg.frames.begin()->second;
      for (const auto& [t, m] : seg.frames) {
        if (m.width != first.width || m.height != first.height) {
          throw SchemaError("masks." + std::to_string(t), "frames differ in size");
        }
      }
      gt.payload = std::move(seg);
      break;
    }
    case TaskType::Grounding:
      gt.payload = GroundingTruth{boxes_from_json(j, "")};
      break;
    case TaskType::Summarization:
    case TaskType::Vqa: {
      if (!j.contains("reference") || !j["reference"].is_string()) throw SchemaError("reference", "missing field");
      TextTruth tt{j["reference"].get<std::string>(), ""};
      if (j.contains("rubric")) {
        if (!j["rubric"].is_string()) throw SchemaError("rubric", "expected string");
        tt.rubric = j["rubric"].get<std::string>();
      }
      gt.payload = std::move(tt);
      break;
    }
  }
  return gt;
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const auto manifest = fs::is_directory(path) ? path / "manifest.json" : path;
  std::ifstream in(manifest, std::ios::binary);
  if (!in) throw GroundTruthFileError("cannot open ground truth " + manifest.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return ground_truth_from_text(buf.str(), manifest.parent_path());
}

std::string ground_truth_to_text(const GroundTruth& gt) {
  json j;
  j["schema"] = kGroundTruthSchema;
  j["task_type"] = task_type_name(gt.task_type);
  if (const auto* seg = std::get_if<SegmentationTruth>(&gt.payload)) {
    json masks = json::object();
    for (const auto& [t, m] : seg->frames) masks[std::to_string(t)] = mask_to_json(m);
    j["masks"] = masks;
  } else if (const auto* g = std::get_if<GroundingTruth>(&gt.payload)) {
    json boxes = json::object();
    for (const auto& [t, b] : g->frames) boxes[std::to_string(t)] = {b.x_min, b.y_min, b.x_max, b.y_max};
    j["boxes"] = boxes;
  } else {
    const auto& tt = std::get<TextTruth>(gt.payload);
    j["reference"] = tt.reference;
    if (!tt.rubric.empty()) j["rubric"] = tt.rubric;
  }
  return j.dump();
}

// ---------------------------------------------------------------------------
// Sub-rewards
// ---------------------------------------------------------------------------

double score_token_format(std::string_view rollout_text) {
  auto parsed = parse_rollout(rollout_text, ParseMode::Strict);
  if (!parsed) return -1.0;
  return validate_order(*parsed).ok ? 1.0 : -1.0;
}

double score_dag(const DagVerdict& verdict) { return verdict.all_ok() ? 0.5 : -0.5; }

double score_exec(const std::vector<ExecOutcome>& outcomes, ExecPenaltyMode mode) {
  const auto failures = std::count_if(outcomes.begin(), outcomes.end(), [](const ExecOutcome& o) { return !o.success; });
  if (failures == 0) return 0.0;
  return mode == ExecPenaltyMode::AnyFailure ? -0.5 : -0.5 * static_cast<double>(failures);
}

double score_task(const RolloutSequence& seq, const GroundTruth& gt) {
  for (const auto& s : seq.segments) {
    if (s.kind != TagKind::Task) continue;
    const auto t = normalize_task(s.content);
    return t && *t == gt.task_type ? 0.25 : 0.0;
  }
  return 0.0;
}

namespace {

void note(std::vector<std::string>* d, std::string msg) {
  if (d) d->push_back(std::move(msg));
}

const Segment* first_segment(const RolloutSequence& seq, TagKind kind) {
  for (const auto& s : seq.segments) {
    if (s.kind == kind) return &s;
  }
  return nullptr;
}

bool correct_iou(const std::vector<double>& ious, const RewardConfig& cfg) {
  if (ious.empty()) return false;
  if (cfg.seg_aggregation == SegAggregation::PerFrame) {
    return std::all_of(ious.begin(), ious.end(), [&](double v) { return v > cfg.iou_threshold; });
  }
  double sum = 0.0;
  for (double v : ious) sum += v;
  return sum / static_cast<double>(ious.size()) > cfg.iou_threshold;
}

double score_segmentation(const json& answer, const SegmentationTruth& gt, const RewardConfig& cfg,
                          const MaskStore* masks, std::vector<std::string>* diag) {
  if (!answer.is_object() || !answer.contains("instances") || !answer["instances"].is_array()) {
    note(diag, "segmentation answer lacks an instance list");
    return -1.0;
  }
  const auto& shape = gt.frames.begin()->second;
  std::map<int, BinaryMask> predicted;
  for (const auto& inst : answer["instances"]) {
    if (!inst.is_object() || !inst.contains("mask")) {
      note(diag, "segmentation answer instance without a mask");
      return -1.0;
    }
    int t = 0;
    if (inst.contains("frame")) {
      if (!inst["frame"].is_number_integer() || inst["frame"].get<int>() < 0) {
        note(diag, "segmentation answer frame is not a non-negative integer");
        return -1.0;
      }
      t = inst["frame"].get<int>();
    }
    BinaryMask m;
    try {
      if (inst["mask"].is_string()) {
        if (!masks) throw std::runtime_error("no mask store configured");
        m = masks->load(inst["mask"].get<std::string>());
      } else {
        m = mask_from_json(inst["mask"], "mask");
      }
    } catch (const std::exception& e) {
      note(diag, std::string("unreadable answer mask: ") + e.what());
      return -1.0;
    }
    if (m.width != shape.width || m.height != shape.height) {
      note(diag, "answer mask size differs from the ground truth");
      return -1.0;
    }
    auto it = predicted.find(t);
    if (it == predicted.end()) predicted.emplace(t, std::move(m));
    else it->second = mask_union(it->second, m);
  }

  std::vector<double> ious;
  const BinaryMask empty{shape.width, shape.height, {static_cast<std::uint32_t>(shape.pixel_total())}};
  std::map<int, bool> frames;
  for (const auto& [t, _] : gt.frames) frames[t] = true;
  for (const auto& [t, _] : predicted) frames[t] = true;
  for (const auto& [t, _] : frames) {
    auto p = predicted.find(t);
    auto g = gt.frames.find(t);
    ious.push_back(mask_iou(p == predicted.end() ? empty : p->second, g == gt.frames.end() ? empty : g->second));
  }
  const bool ok = correct_iou(ious, cfg);
  if (!ok) {
    double sum = 0.0;
    for (double v : ious) sum += v;
    note(diag, "mean mask IoU " + format_double(sum / static_cast<double>(ious.size())) + " does not exceed " +
                   format_double(cfg.iou_threshold));
  }
  return ok ? 1.0 : -1.0;
}

double score_grounding(const json& answer, const GroundingTruth& gt, const RewardConfig& cfg,
                       std::vector<std::string>* diag) {
  std::map<int, BoundingBox> predicted;
  try {
    if (!answer.is_object()) throw SchemaError("", "expected object");
    predicted = boxes_from_json(answer, "");
  } catch (const SchemaError& e) {
    note(diag, std::string("grounding answer is malformed: ") + e.what());
    return -1.0;
  }
  std::vector<double> ious;
  for (const auto& [t, box] : gt.frames) {
    auto p = predicted.find(t);
    ious.push_back(p == predicted.end() ? 0.0 : bbox_iou(p->second, box));
  }
  RewardConfig mean_cfg = cfg;
  mean_cfg.seg_aggregation = SegAggregation::MeanThenThreshold;
  const bool ok = correct_iou(ious, mean_cfg);
  if (!ok) note(diag, "box IoU does not exceed " + format_double(cfg.iou_threshold));
  return ok ? 1.0 : -1.0;
}

}  // namespace

double score_result(const RolloutSequence& seq, const GroundTruth& gt, const JudgeClient& judge,
                    const RewardConfig& cfg, const MaskStore* answer_masks, std::vector<std::string>* diagnostics) {
  const auto* answer = first_segment(seq, TagKind::Answer);
  if (!answer) {
    note(diagnostics, "no answer segment");
    return -1.0;
  }
  if (const auto* text = std::get_if<TextTruth>(&gt.payload)) {
    const auto verdict = judge.judge({trim(answer->content), text->reference, text->rubric});
    if (!verdict.correct) note(diagnostics, "judge: " + verdict.rationale);
    return verdict.correct ? 1.0 : -1.0;
  }
  json payload;
  try {
    payload = json::parse(answer->content);
  } catch (const json::parse_error&) {
    note(diagnostics, std::string("answer is not a ") + std::string(task_type_name(gt.task_type)) + " payload");
    return -1.0;
  }
  if (const auto* seg = std::get_if<SegmentationTruth>(&gt.payload)) {
    return score_segmentation(payload, *seg, cfg, answer_masks, diagnostics);
  }
  return score_grounding(payload, std::get<GroundingTruth>(gt.payload), cfg, diagnostics);
}

namespace {

std::vector<ExecOutcome> outcomes_from_results(const RolloutSequence& seq, std::vector<std::string>& diag) {
  std::vector<ExecOutcome> out;
  for (std::size_t i = 0; i < seq.segments.size(); ++i) {
    if (seq.segments[i].kind != TagKind::Execute) continue;
    if (i + 1 >= seq.segments.size() || seq.segments[i + 1].kind != TagKind::Results) {
      diag.push_back("execute block " + std::to_string(out.size()) + " has no results; counted as failed");
      out.push_back(ExecOutcome::failure("missing results"));
      continue;
    }
    const auto content = trim(seq.segments[i + 1].content);
    if (content.rfind("ERR:", 0) == 0) {
      out.push_back(ExecOutcome::failure(trim(content.substr(4))));
    } else {
      if (content.rfind("OK:", 0) != 0) {
        diag.push_back("results block " + std::to_string(out.size()) + " has no OK:/ERR: sentinel; counted as success");
      }
      out.push_back(ExecOutcome::ok(content));
    }
  }
  return out;
}

std::vector<ExecOutcome> outcomes_from_executor(const RolloutSequence& seq, const ScoreDeps& deps,
                                                std::vector<std::string>& diag) {
  std::vector<ExecOutcome> out;
  std::shared_ptr<const DigitalTwin> twin;
  if (const auto* rep = first_segment(seq, TagKind::DtRep)) {
    try {
      twin = std::make_shared<const DigitalTwin>(dt_from_text(rep->content));
    } catch (const std::exception& e) {
      diag.push_back(std::string("digital twin unreadable: ") + e.what());
    }
  }
  for (const auto& s : seq.segments) {
    if (s.kind != TagKind::Execute) continue;
    if (!twin) {
      out.push_back(ExecOutcome::failure("no digital twin available"));
      continue;
    }
    out.push_back(execute({s.content, twin, deps.exec_timeout}, *deps.executor));
  }
  return out;
}

}  // namespace

RewardBreakdown score(std::string_view rollout_text, const GroundTruth& gt, const RewardConfig& cfg,
                      const ScoreDeps& deps) {
  cfg.validate();
  gt.validate();
  static const ModelRegistry default_registry = ModelRegistry::defaults();
  static const MockJudge default_judge;
  const auto& registry = deps.registry ? *deps.registry : default_registry;
  const auto& judge = deps.judge ? *deps.judge : static_cast<const JudgeClient&>(default_judge);

  RewardBreakdown b;
  b.r_token = score_token_format(rollout_text);
  if (b.r_token < 0) {
    auto strict = parse_rollout(rollout_text, ParseMode::Strict);
    b.diagnostics.push_back("format: " + (strict ? validate_order(*strict).first_violation->describe()
                                                 : strict.error().describe()));
  }

  auto scanned = scan_segments(rollout_text);
  if (!scanned) {
    b.diagnostics.push_back("segments unreadable: " + scanned.error().describe());
    if (deps.exec_replay && !deps.exec_replay->empty()) {
      throw SchemaError("exec_replay", "rollout has no readable execute blocks");
    }
    b.r_dag = -0.5;
    b.r_exec = 0.0;
    b.r_task = 0.0;
    b.r_result = -1.0;
  } else {
    const auto& seq = *scanned;
    if (const auto* plan = first_segment(seq, TagKind::DtPlan)) {
      const auto verdict = validate_plan_text(plan->content, registry);
      b.r_dag = score_dag(verdict);
      for (const auto& v : verdict.violations) b.diagnostics.push_back("plan: " + v);
    } else {
      b.r_dag = -0.5;
      b.diagnostics.push_back("plan: no dt_plan segment");
    }

    std::vector<ExecOutcome> outcomes;
    const auto n_exec = static_cast<std::size_t>(
        std::count_if(seq.segments.begin(), seq.segments.end(), [](const Segment& s) { return s.kind == TagKind::Execute; }));
    if (deps.exec_replay) {
      if (deps.exec_replay->size() != n_exec) {
        throw SchemaError("exec_replay", "has " + std::to_string(deps.exec_replay->size()) + " outcomes but the rollout has " +
                                             std::to_string(n_exec) + " execute blocks");
      }
      outcomes = *deps.exec_replay;
    } else if (deps.executor) {
      outcomes = outcomes_from_executor(seq, deps, b.diagnostics);
    } else {
      outcomes = outcomes_from_results(seq, b.diagnostics);
    }
    b.r_exec = score_exec(outcomes, cfg.exec_penalty_mode);
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      if (!outcomes[i].success) {
        b.diagnostics.push_back("execute block " + std::to_string(i) + " failed: " + outcomes[i].error_line.value_or(""));
      }
    }

    b.r_task = score_task(seq, gt);
    if (const auto* task = first_segment(seq, TagKind::Task)) {
      const auto t = normalize_task(task->content);
      if (t && !canonical_task_label(lower_trim(task->content), *t)) {
        b.diagnostics.push_back("task label \"" + trim(task->content) + "\" read as " + std::string(task_type_name(*t)));
      }
    }
    b.r_result = score_result(seq, gt, judge, cfg, deps.answer_masks.get(), &b.diagnostics);
  }

  b.r_format = b.r_token + b.r_dag;
  b.r_accuracy = b.r_exec + b.r_task + b.r_result;
  b.total = cfg.alpha * b.r_format + cfg.beta * b.r_accuracy;
  return b;
}

std::string breakdown_to_text(const RewardBreakdown& b) {
  json j = {{"schema", kRewardSchema}, {"r_token", b.r_token},       {"r_dag", b.r_dag},
            {"r_exec", b.r_exec},      {"r_task", b.r_task},         {"r_result", b.r_result},
            {"r_format", b.r_format},  {"r_accuracy", b.r_accuracy}, {"total", b.total},
            {"diagnostics", b.diagnostics}};
  return j.dump();
}

RewardBreakdown breakdown_from_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("reward record is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SchemaError("", "expected object");
  if (j.value("schema", std::string()) != kRewardSchema) throw SchemaError("schema", "expected dtr1-reward/1");
  RewardBreakdown b;
  auto num = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number()) throw SchemaError(key, "expected number");
    return j[key].get<double>();
  };
  b.r_token = num("r_token");
  b.r_dag = num("r_dag");
  b.r_exec = num("r_exec");
  b.r_task = num("r_task");
  b.r_result = num("r_result");
  b.r_format = num("r_format");
  b.r_accuracy = num("r_accuracy");
  b.total = num("total");
  if (j.contains("diagnostics")) {
    if (!j["diagnostics"].is_array()) throw SchemaError("diagnostics", "expected array of strings");
    for (const auto& d : j["diagnostics"]) {
      if (!d.is_string()) throw SchemaError("diagnostics", "expected array of strings");
      b.diagnostics.push_back(d.get<std::string>());
    }
  }
  return b;
}

}  // namespace dtr1
