#include "dtr1/wire.hpp"

#include <cmath>

#include "dtr1/twin.hpp"

namespace dtr1 {

namespace {

const json& field(const json& j, const char* key, json::value_t type, const std::string& path) {
  const auto at = path.empty() ? std::string(key) : path + "." + key;
  if (!j.is_object() || !j.contains(key)) throw SchemaError(at, "missing field");
  const auto& v = j.at(key);
  const bool ok = type == json::value_t::number_float     ? v.is_number()
                  : type == json::value_t::number_integer ? v.is_number_integer()
                                                          : v.type() == type;
  if (!ok) throw SchemaError(at, std::string("expected ") + json(type).type_name());
  return v;
}

std::string str(const json& j, const char* key, const std::string& path) {
  return field(j, key, json::value_t::string, path).get<std::string>();
}

void check_schema(const json& j, std::string_view schema) {
  if (!j.is_object()) throw SchemaError("", "expected object");
  if (j.contains("schema") && j["schema"] != schema) throw SchemaError("schema", "expected " + std::string(schema));
}

std::filesystem::path safe_relative(const std::string& ref, const std::filesystem::path& root, const std::string& path) {
  const std::filesystem::path p(ref);
  if (ref.empty() || p.is_absolute()) throw SchemaError(path, "must be a relative path");
  for (const auto& part : p) {
    if (part == "..") throw SchemaError(path, "must not leave the data root");
  }
  return root / p;
}

}  // namespace

json exec_request_to_json(const ExecRequest& req) {
  return {{"schema", kExecSchema},
          {"code", req.code},
          {"twin", req.twin ? json(dt_to_text(*req.twin)) : json(nullptr)},
          {"timeout_ms", req.timeout.count()}};
}

ExecRequest exec_request_from_json(const json& j) {
  check_schema(j, kExecSchema);
  ExecRequest req;
  req.code = str(j, "code", "");
  if (j.contains("twin") && !j["twin"].is_null()) {
    req.twin = std::make_shared<const DigitalTwin>(dt_from_text(str(j, "twin", "")));
  }
  const auto ms = field(j, "timeout_ms", json::value_t::number_integer, "").get<long long>();
  if (ms <= 0) throw SchemaError("timeout_ms", "must be positive");
  req.timeout = std::chrono::milliseconds(ms);
  return req;
}

json exec_outcome_to_json(const ExecOutcome& o) {
  return {{"schema", kExecSchema},
          {"success", o.success},
          {"output", o.output},
          {"error_line", o.error_line ? json(*o.error_line) : json(nullptr)}};
}

ExecOutcome exec_outcome_from_json(const json& j, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected object");
  ExecOutcome o;
  o.success = field(j, "success", json::value_t::boolean, path).get<bool>();
  if (j.contains("output")) o.output = str(j, "output", path);
  if (j.contains("error_line") && !j["error_line"].is_null()) {
    const auto line = str(j, "error_line", path);
    if (line.find_first_of("\r\n") != std::string::npos) {
      throw SchemaError(path.empty() ? "error_line" : path + ".error_line", "must be a single line");
    }
    o.error_line = line;
  }
  if (o.success && o.error_line) {
    throw SchemaError(path.empty() ? "error_line" : path + ".error_line", "must be absent on success");
  }
  if (!o.success && !o.error_line) o.error_line = "Error";
  return o;
}

json judge_request_to_json(const JudgeRequest& r) {
  return {{"schema", kJudgeSchema}, {"candidate", r.candidate}, {"reference", r.reference}, {"rubric", r.rubric}};
}

JudgeRequest judge_request_from_json(const json& j) {
  check_schema(j, kJudgeSchema);
  JudgeRequest r;
  r.candidate = str(j, "candidate", "");
  r.reference = str(j, "reference", "");
  if (j.contains("rubric")) r.rubric = str(j, "rubric", "");
  return r;
}

json judge_verdict_to_json(const JudgeVerdict& v) {
  return {{"schema", kJudgeSchema}, {"correct", v.correct}, {"rationale", v.rationale}};
}

JudgeVerdict judge_verdict_from_json(const json& j) {
  check_schema(j, kJudgeSchema);
  JudgeVerdict v;
  v.correct = field(j, "correct", json::value_t::boolean, "").get<bool>();
  if (j.contains("rationale")) v.rationale = str(j, "rationale", "");
  return v;
}

json dag_verdict_to_json(const DagVerdict& v) {
  return {{"schema", kApiSchema},
          {"valid_format", v.valid_format},
          {"acyclic", v.acyclic},
          {"valid_dependencies", v.valid_dependencies},
          {"violations", v.violations},
          {"notes", v.notes}};
}

json training_mask_to_json(const TrainingMask& m) {
  json spans = json::array();
  for (const auto& s : m.spans) spans.push_back({{"start", s.start}, {"end", s.end}, {"trainable", s.trainable}});
  return {{"spans", spans}};
}

TrainingMask training_mask_from_json(const json& j) {
  TrainingMask m;
  const auto& spans = field(j, "spans", json::value_t::array, "");
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto at = "spans[" + std::to_string(i) + "]";
    MaskSpan s;
    s.start = field(spans[i], "start", json::value_t::number_integer, at).get<std::size_t>();
    s.end = field(spans[i], "end", json::value_t::number_integer, at).get<std::size_t>();
    s.trainable = field(spans[i], "trainable", json::value_t::boolean, at).get<bool>();
    m.spans.push_back(s);
  }
  return m;
}

json breakdown_to_json(const RewardBreakdown& b) {
  return {{"schema", kRewardSchema}, {"r_token", b.r_token},   {"r_dag", b.r_dag},
          {"r_exec", b.r_exec},      {"r_task", b.r_task},     {"r_result", b.r_result},
          {"r_format", b.r_format},  {"r_accuracy", b.r_accuracy}, {"total", b.total}};
}

RewardConfig reward_config_from_json(const json& j, RewardConfig cfg, const std::string& path) {
  if (!j.is_object()) throw SchemaError(path, "expected object");
  for (const auto& [key, value] : j.items()) {
    const auto at = path + "." + key;
    if (key == "alpha" || key == "beta" || key == "iou_threshold") {
      if (!value.is_number()) throw SchemaError(at, "expected number");
      const double v = value.get<double>();
      (key == "alpha" ? cfg.alpha : key == "beta" ? cfg.beta : cfg.iou_threshold) = v;
    } else if (key == "exec_penalty_mode") {
      const auto v = value.is_string() ? value.get<std::string>() : "";
      if (v == "any_failure") cfg.exec_penalty_mode = ExecPenaltyMode::AnyFailure;
      else if (v == "per_block_sum") cfg.exec_penalty_mode = ExecPenaltyMode::PerBlockSum;
      else throw SchemaError(at, "expected \"any_failure\" or \"per_block_sum\"");
    } else if (key == "seg_aggregation") {
      const auto v = value.is_string() ? value.get<std::string>() : "";
      if (v == "mean") cfg.seg_aggregation = SegAggregation::MeanThenThreshold;
      else if (v == "per_frame") cfg.seg_aggregation = SegAggregation::PerFrame;
      else throw SchemaError(at, "expected \"mean\" or \"per_frame\"");
    } else {
      throw SchemaError(at, "unknown field");
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw SchemaError(path, e.what());
  }
  return cfg;
}

ScoreRequest score_request_from_json(const json& j, const std::filesystem::path& data_root,
                                     const RewardConfig& defaults) {
  check_schema(j, kApiSchema);
  ScoreRequest req;
  req.rollout_text = str(j, "rollout_text", "");
  if (!j.contains("ground_truth")) throw SchemaError("ground_truth", "missing field");
  const auto& gt = j["ground_truth"];
  try {
    if (gt.is_string()) {
      req.ground_truth = load_ground_truth(safe_relative(gt.get<std::string>(), data_root, "ground_truth"));
    } else if (gt.is_object()) {
      req.ground_truth = ground_truth_from_text(gt.dump(), data_root);
    } else {
      throw SchemaError("ground_truth", "expected object or relative path");
    }
  } catch (const SchemaError& e) {
    if (e.path().rfind("ground_truth", 0) == 0) throw;
    throw SchemaError(e.path().empty() ? "ground_truth" : "ground_truth." + e.path(), e.what());
  }
  req.config = j.contains("config") ? reward_config_from_json(j["config"], defaults) : defaults;
  if (j.contains("exec_replay") && !j["exec_replay"].is_null()) {
    const auto& r = j["exec_replay"];
    if (!r.is_array()) throw SchemaError("exec_replay", "expected array");
    std::vector<ExecOutcome> outcomes;
    for (std::size_t i = 0; i < r.size(); ++i) {
      outcomes.push_back(exec_outcome_from_json(r[i], "exec_replay[" + std::to_string(i) + "]"));
    }
    req.exec_replay = std::move(outcomes);
  }
  return req;
}

std::optional<TrainingMask> response_mask(std::string_view rollout_text) {
  if (auto seq = parse_rollout(rollout_text, ParseMode::NonStrict)) return training_mask(*seq);
  if (auto seq = scan_segments(rollout_text)) return training_mask(*seq);
  return std::nullopt;
}

std::string score_response_text(const RewardBreakdown& b, const std::optional<TrainingMask>& mask) {
  json j = {{"schema", kApiSchema},
            {"breakdown", breakdown_to_json(b)},
            {"mask", mask ? training_mask_to_json(*mask) : json(nullptr)},
            {"diagnostics", b.diagnostics}};
  return j.dump();
}

}  // namespace dtr1
