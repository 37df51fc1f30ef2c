#include "dtr1/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dtr1/exec.hpp"
#include "dtr1/rollout.hpp"

namespace dtr1 {

using json = nlohmann::json;

namespace {

constexpr int kWidth = 48;
constexpr int kHeight = 32;
constexpr int kCell = 16;
constexpr double kBackgroundDepth = 20.0;

const std::array<std::string_view, 12> kNouns = {"cup",  "bottle", "book", "chair", "lamp", "plant",
                                                 "box",  "ball",   "phone", "vase", "bowl", "clock"};
const std::array<std::string_view, 6> kColors = {"red", "blue", "green", "yellow", "white", "black"};

// Platform-independent draws on top of mt19937_64.
struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  int range(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(engine() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double unit() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(range(0, static_cast<int>(i) - 1))]);
  }
};

int frames_for(Difficulty d) {
  switch (d) {
    case Difficulty::L1:
    case Difficulty::L2: return 1;
    case Difficulty::L3: return 2;
    case Difficulty::L4: return 3;
  }
  return 1;
}

std::pair<int, int> instance_range(Difficulty d) {
  switch (d) {
    case Difficulty::L1: return {2, 2};
    case Difficulty::L2: return {3, 4};
    case Difficulty::L3: return {4, 5};
    case Difficulty::L4: return {5, 6};
  }
  return {2, 2};
}

// Smaller gaps make distractors harder to tell apart.
double depth_gap(Difficulty d) {
  switch (d) {
    case Difficulty::L1: return 3.0;
    case Difficulty::L2: return 1.5;
    case Difficulty::L3: return 0.8;
    case Difficulty::L4: return 0.4;
  }
  return 1.0;
}

std::string mask_ref(int t, int id) { return "masks/f" + std::to_string(t) + "_i" + std::to_string(id) + ".rle"; }

struct Layout {
  std::vector<BoundingBox> boxes;  // frame-0 boxes, index = instance id - 1
  std::vector<double> depths;
};

bool layout_unambiguous(const Layout& l) {
  std::vector<long long> areas;
  std::vector<int> xs;
  for (const auto& b : l.boxes) {
    areas.push_back(b.area());
    xs.push_back(b.x_min);
  }
  std::sort(areas.begin(), areas.end());
  std::sort(xs.begin(), xs.end());
  const bool largest_unique = areas.size() < 2 || areas[areas.size() - 1] != areas[areas.size() - 2];
  const bool leftmost_unique = xs.size() < 2 || xs[0] != xs[1];
  return largest_unique && leftmost_unique;
}

Layout make_layout(Rng& rng, int n, int frames, Difficulty d) {
  std::vector<int> cells(6);
  std::iota(cells.begin(), cells.end(), 0);
  for (int attempt = 0;; ++attempt) {
    Layout l;
    rng.shuffle(cells);
    for (int i = 0; i < n; ++i) {
      const int cx = (cells[static_cast<std::size_t>(i)] % 3) * kCell;
      const int cy = (cells[static_cast<std::size_t>(i)] / 3) * kCell;
      const int w = rng.range(3, 11 - (frames - 1));
      const int h = rng.range(3, 12);
      const int x = cx + rng.range(1, kCell - 1 - w - (frames - 1));
      const int y = cy + rng.range(1, kCell - 1 - h);
      l.boxes.push_back({x, y, x + w, y + h});
    }
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const double base = 1.0 + rng.unit();
    for (int i = 0; i < n; ++i) {
      l.depths.push_back(base + depth_gap(d) * order[static_cast<std::size_t>(i)] + 0.1 * rng.unit());
    }
    if (layout_unambiguous(l) || attempt > 200) return l;
  }
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? std::string(sep) : "") + parts[i];
  return out;
}

DigitalTwin generate_twin(Rng& rng, Difficulty d, MemoryMaskStore& store) {
  const int frames = frames_for(d);
  const auto [lo, hi] = instance_range(d);
  const int n = rng.range(lo, hi);
  const auto layout = make_layout(rng, n, frames, d);

  std::vector<std::string> labels;
  std::vector<std::size_t> nouns(kNouns.size());
  std::iota(nouns.begin(), nouns.end(), 0);
  rng.shuffle(nouns);
  for (int i = 0; i < n; ++i) {
    labels.push_back(std::string(kColors[static_cast<std::size_t>(rng.range(0, kColors.size() - 1))]) + " " +
                     std::string(kNouns[nouns[static_cast<std::size_t>(i)]]));
  }

  DigitalTwin dt;
  dt.frame_count = frames;
  dt.global_description = std::string(frames > 1 ? "a video" : "an image") + " with " + std::to_string(n) +
                          " objects: " + join(labels, ", ");
  for (int t = 0; t < frames; ++t) {
    DepthMap depth(kWidth, kHeight, kBackgroundDepth);
    FrameRecord fr;
    fr.t = t;
    std::vector<std::string> spatial;
    for (int i = 0; i < n; ++i) {
      auto box = layout.boxes[static_cast<std::size_t>(i)];
      box.x_min += t;
      box.x_max += t;
      const double z = layout.depths[static_cast<std::size_t>(i)] + 0.1 * t;
      for (int y = box.y_min; y < box.y_max; ++y) {
        for (int x = box.x_min; x < box.x_max; ++x) depth.at(x, y) = z + 0.05 * ((x + y) % 3);
      }
      const auto mask = box_mask(kWidth, kHeight, box);
      const int id = i + 1;
      store.put(mask_ref(t, id), mask);

      InstanceRecord rec;
      rec.instance_id = id;
      rec.label = labels[static_cast<std::size_t>(i)];
      rec.mask = mask_ref(t, id);
      rec.bbox = box;
      rec.depth = depth_stats(mask, depth);
      std::ostringstream desc;
      desc << rec.label << " covering " << box.area() << " pixels";
      rec.description = desc.str();
      fr.instances.push_back(std::move(rec));
      spatial.push_back(labels[static_cast<std::size_t>(i)] + " at x " + std::to_string(box.x_min));
    }
    fr.scene_description = "frame " + std::to_string(t) + " shows " + std::to_string(n) + " objects";
    fr.spatial_description = join(spatial, "; ");
    dt.frames.push_back(std::move(fr));
  }
  dt.source_refs.push_back("synthetic");
  return dt;
}

std::string frame_verb(TaskType type) { return type == TaskType::Segmentation ? "segment" : "locate"; }

std::string query_text(QueryKind kind, TaskType type, int frames) {
  const std::string scope = frames > 1 ? " in the video" : "";
  switch (kind) {
    case QueryKind::Nearest: return frame_verb(type) + " the nearest object" + scope;
    case QueryKind::Farthest: return frame_verb(type) + " the farthest object" + scope;
    case QueryKind::Largest: return frame_verb(type) + " the largest object" + scope;
    case QueryKind::Leftmost: return frame_verb(type) + " the leftmost object" + scope;
    case QueryKind::Count: return "how many objects are there?";
    case QueryKind::Summarize: return "summarize the scene";
  }
  return "";
}

std::vector<std::string> solution_steps(const DigitalTwin& twin, QueryKind kind, int target) {
  const auto& f0 = twin.frames.front();
  std::vector<std::string> lines;
  switch (kind) {
    case QueryKind::Nearest:
    case QueryKind::Farthest:
      for (const auto& r : f0.instances) lines.push_back("mean_depth(" + std::to_string(r.instance_id) + ", 0)");
      break;
    case QueryKind::Largest:
    case QueryKind::Leftmost:
      for (const auto& r : f0.instances) lines.push_back("bbox(" + std::to_string(r.instance_id) + ", 0)");
      break;
    case QueryKind::Count:
    case QueryKind::Summarize:
      lines.push_back("instance_count(frame=0)");
      break;
  }
  std::vector<std::string> steps{join(lines, "\n")};
  if (twin.frame_count > 1) {
    if (kind == QueryKind::Nearest || kind == QueryKind::Farthest) {
      const auto other = f0.instances.front().instance_id == target ? f0.instances.back().instance_id
                                                                     : f0.instances.front().instance_id;
      const std::string cmp = kind == QueryKind::Nearest ? " < " : " > ";
      steps.push_back("frames_where(mean_depth(" + std::to_string(target) + ")" + cmp + "mean_depth(" +
                      std::to_string(other) + "))");
    } else if (target > 0) {
      steps.push_back("frames_where(iou(mask(t, " + std::to_string(target) + "), bbox(" + std::to_string(target) +
                      ")) > 0.5)");
    } else {
      steps.push_back("frames_where(instance_count() > 0)");
    }
  }
  return steps;
}

std::string run_step(const std::string& code, const std::shared_ptr<const DigitalTwin>& twin,
                     const MockExecutor& exec) {
  const auto out = execute({code, twin, std::chrono::milliseconds(5000)}, exec);
  if (out.success) return "OK: " + out.output;
  return "ERR: " + out.error_line.value_or("Error");
}

json mask_answer_ref(const InstanceRecord& rec) {
  if (const auto* p = rec.mask_path()) return *p;
  const auto& m = *rec.inline_mask();
  return json{{"width", m.width}, {"height", m.height}, {"runs", m.runs}};
}

}  // namespace

std::string_view difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::L1: return "L1";
    case Difficulty::L2: return "L2";
    case Difficulty::L3: return "L3";
    case Difficulty::L4: return "L4";
  }
  return "L1";
}

std::optional<Difficulty> difficulty_from_name(std::string_view name) {
  for (auto d : {Difficulty::L1, Difficulty::L2, Difficulty::L3, Difficulty::L4}) {
    if (difficulty_name(d) == name) return d;
  }
  return std::nullopt;
}

DifficultyMix DifficultyMix::only(Difficulty d) {
  DifficultyMix m;
  m.weights.fill(0.0);
  m.weights[static_cast<std::size_t>(d)] = 1.0;
  return m;
}

DifficultyMix DifficultyMix::parse(std::string_view text) {
  if (text.empty() || text == "all") return {};
  DifficultyMix m;
  m.weights.fill(0.0);
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    const auto d = difficulty_from_name(text.substr(start, end - start));
    if (!d) throw std::invalid_argument("unknown difficulty \"" + std::string(text.substr(start, end - start)) + "\"");
    m.weights[static_cast<std::size_t>(*d)] = 1.0;
    start = end + 1;
  }
  return m;
}

std::string_view query_kind_name(QueryKind k) {
  switch (k) {
    case QueryKind::Nearest: return "nearest";
    case QueryKind::Farthest: return "farthest";
    case QueryKind::Largest: return "largest";
    case QueryKind::Leftmost: return "leftmost";
    case QueryKind::Count: return "count";
    case QueryKind::Summarize: return "summarize";
  }
  return "";
}

int select_target(const DigitalTwin& twin, QueryKind kind, int frame) {
  const auto* f = twin.frame(frame);
  if (!f || f->instances.empty()) throw std::invalid_argument("frame has no instances");
  if (kind == QueryKind::Count || kind == QueryKind::Summarize) {
    throw std::invalid_argument("query kind has no target instance");
  }
  const InstanceRecord* best = nullptr;
  auto key = [&](const InstanceRecord& r) -> double {
    switch (kind) {
      case QueryKind::Nearest:
      case QueryKind::Farthest:
        if (!r.depth) throw std::invalid_argument("instance without depth statistics");
        return kind == QueryKind::Nearest ? r.depth->mean : -r.depth->mean;
      case QueryKind::Largest:
        return -static_cast<double>(r.depth ? static_cast<long long>(r.depth->pixel_count) : r.bbox.area());
      default:
        return r.bbox.x_min;
    }
  };
  for (const auto& r : f->instances) {
    if (!best || key(r) < key(*best) || (key(r) == key(*best) && r.instance_id < best->instance_id)) best = &r;
  }
  return best->instance_id;
}

SyntheticTask build_task(std::string task_id, QueryKind kind, TaskType type, Difficulty difficulty, DigitalTwin twin,
                         std::shared_ptr<MemoryMaskStore> masks) {
  if (twin.frames.empty()) throw std::invalid_argument("twin has no frames");
  if (!masks) masks = std::make_shared<MemoryMaskStore>();
  SyntheticTask task;
  task.task_id = std::move(task_id);
  task.kind = kind;
  task.difficulty = difficulty;
  const bool geometric = kind != QueryKind::Count && kind != QueryKind::Summarize;
  if (geometric && type != TaskType::Segmentation && type != TaskType::Grounding) {
    throw std::invalid_argument("geometric queries need a segmentation or grounding task");
  }
  if (kind == QueryKind::Count) type = TaskType::Vqa;
  if (kind == QueryKind::Summarize) type = TaskType::Summarization;
  task.query = query_text(kind, type, twin.frame_count);
  task.ground_truth.task_type = type;

  const auto& f0 = twin.frames.front();
  auto load = [&](const InstanceRecord& r) {
    if (const auto* m = r.inline_mask()) return *m;
    return masks->load(*r.mask_path());
  };

  if (geometric) {
    task.target_instance = select_target(twin, kind, 0);
    if (type == TaskType::Segmentation) {
      SegmentationTruth seg;
      for (const auto& f : twin.frames) {
        if (const auto* r = f.find(task.target_instance)) seg.frames[f.t] = load(*r);
      }
      task.ground_truth.payload = std::move(seg);
    } else {
      GroundingTruth g;
      for (const auto& f : twin.frames) {
        if (const auto* r = f.find(task.target_instance)) g.frames[f.t] = r->bbox;
      }
      task.ground_truth.payload = std::move(g);
    }
    for (const auto& cand : f0.instances) {
      json answer;
      if (type == TaskType::Segmentation) {
        json list = json::array();
        for (const auto& f : twin.frames) {
          if (const auto* r = f.find(cand.instance_id)) {
            list.push_back({{"name", r->label}, {"frame", f.t}, {"mask", mask_answer_ref(*r)}});
          }
        }
        answer = {{"instances", list}};
      } else {
        answer["name"] = cand.label;
        if (twin.frames.size() == 1) {
          answer["box"] = {cand.bbox.x_min, cand.bbox.y_min, cand.bbox.x_max, cand.bbox.y_max};
        } else {
          json boxes = json::object();
          for (const auto& f : twin.frames) {
            if (const auto* r = f.find(cand.instance_id)) {
              boxes[std::to_string(f.t)] = {r->bbox.x_min, r->bbox.y_min, r->bbox.x_max, r->bbox.y_max};
            }
          }
          answer["boxes"] = boxes;
        }
      }
      if (cand.instance_id == task.target_instance) task.correct_answer = task.answer_candidates.size();
      task.answer_candidates.push_back(answer.dump());
    }
  } else if (kind == QueryKind::Count) {
    const auto n = f0.instances.size();
    task.ground_truth.payload = TextTruth{std::to_string(n), "the answer is an object count"};
    for (std::size_t k = 1; k <= std::max<std::size_t>(6, n); ++k) task.answer_candidates.push_back(std::to_string(k));
    task.correct_answer = n - 1;
  } else {
    task.ground_truth.payload = TextTruth{twin.global_description, "the answer lists the objects in view"};
    task.answer_candidates = {twin.global_description, "nothing is visible", "an empty room", "a blank wall"};
    task.correct_answer = 0;
  }

  const auto shared_twin = std::make_shared<const DigitalTwin>(twin);
  const MockExecutor exec(masks);
  task.solution_code = solution_steps(twin, kind, task.target_instance);
  for (const auto& code : task.solution_code) task.solution_results.push_back(run_step(code, shared_twin, exec));
  const int probe = geometric ? task.target_instance : f0.instances.front().instance_id;
  task.failing_code = "mean_depth(" + std::to_string(probe) + ", 0) / 0";
  task.failing_result = run_step(task.failing_code, shared_twin, exec);

  task.twin = std::move(twin);
  task.masks = std::move(masks);
  return task;
}

std::vector<SyntheticTask> generate_tasks(std::uint64_t seed, std::size_t count, const DifficultyMix& mix) {
  if (count == 0) throw std::invalid_argument("task count must be at least 1");
  double total = 0.0;
  for (double w : mix.weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("difficulty weights must be finite and >= 0");
    total += w;
  }
  if (total <= 0.0) throw std::invalid_argument("difficulty mix has no positive weight");

  Rng rng(seed);
  std::vector<SyntheticTask> tasks;
  for (std::size_t i = 0; i < count; ++i) {
    double u = rng.unit() * total;
    std::size_t di = 0;
    while (di + 1 < mix.weights.size() && (u >= mix.weights[di] || mix.weights[di] == 0.0)) {
      u -= mix.weights[di];
      ++di;
    }
    while (mix.weights[di] == 0.0) --di;
    const auto difficulty = static_cast<Difficulty>(di);
    const auto kind = static_cast<QueryKind>(rng.range(0, 5));
    const auto type = rng.range(0, 1) == 0 ? TaskType::Segmentation : TaskType::Grounding;
    auto store = std::make_shared<MemoryMaskStore>();
    auto twin = generate_twin(rng, difficulty, *store);
    char id[32];
    std::snprintf(id, sizeof id, "task-%04zu", i);
    tasks.push_back(build_task(id, kind, type, difficulty, std::move(twin), std::move(store)));
  }
  return tasks;
}

// ---------------------------------------------------------------------------
// Rollout writers

std::string_view plan_choice_text(PlanChoice p) {
  switch (p) {
    case PlanChoice::ExampleDag: return kExamplePlanText;
    case PlanChoice::SegmentOnly: return R"({"SAM2": []})";
    case PlanChoice::Cyclic: return R"({"SAM2": ["DepthStats"], "DepthStats": ["SAM2"]})";
    case PlanChoice::UnknownModel: return R"({"SAM3": [], "DepthStats": ["SAM3"]})";
  }
  return "";
}

RolloutKnobs oracle_knobs(const SyntheticTask& task) {
  RolloutKnobs k;
  k.task_label = static_cast<std::size_t>(task.ground_truth.task_type);
  k.answer = task.correct_answer;
  return k;
}

std::string write_rollout(const SyntheticTask& task, const RolloutKnobs& knobs) {
  if (knobs.task_label >= kTaskLabels.size()) throw std::invalid_argument("task label index out of range");
  if (knobs.answer >= task.answer_candidates.size()) throw std::invalid_argument("answer index out of range");
  std::vector<std::pair<TagKind, std::string>> parts;
  parts.emplace_back(TagKind::Think, "The query is: " + task.query + ". I will plan which vision models to run.");
  parts.emplace_back(TagKind::DtPlan, std::string(plan_choice_text(knobs.plan)));
  parts.emplace_back(TagKind::DtRep, dt_to_text(task.twin));
  for (std::size_t i = 0; i < task.solution_code.size(); ++i) {
    const bool fail = knobs.buggy_code && i == 0;
    parts.emplace_back(TagKind::Think, i == 0 ? "I will read the relevant measurements from the representation."
                                              : "I will check how this holds across frames.");
    parts.emplace_back(TagKind::Execute, fail ? task.failing_code : task.solution_code[i]);
    parts.emplace_back(TagKind::Results, fail ? task.failing_result : task.solution_results[i]);
  }
  parts.emplace_back(TagKind::Think, "The measurements determine the answer.");
  const std::pair<TagKind, std::string> task_part{TagKind::Task, std::string(kTaskLabels[knobs.task_label])};
  const std::pair<TagKind, std::string> answer_part{TagKind::Answer, task.answer_candidates[knobs.answer]};

  switch (knobs.format) {
    case FormatAction::WellFormed:
    case FormatAction::StrayText:
      parts.push_back(task_part);
      parts.push_back(answer_part);
      break;
    case FormatAction::DropTaskTags:
      parts.push_back(answer_part);
      break;
    case FormatAction::SwapTaskAnswer:
      parts.push_back(answer_part);
      parts.push_back(task_part);
      break;
  }
  auto text = render(make_rollout(parts));
  if (knobs.format == FormatAction::StrayText) {
    const auto at = text.find(open_marker(TagKind::Task));
    text.insert(at, "So the answer is below.\n");
  }
  return text;
}

void write_fixtures(const std::vector<SyntheticTask>& tasks, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto write_text = [](const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << s;
  };
  json index = json::array();
  for (const auto& task : tasks) {
    const auto dir = out_dir / task.task_id;
    fs::create_directories(dir / "masks");
    for (const auto& [ref, mask] : task.masks->all()) write_mask_file(dir / ref, mask);

    json manifest = json::parse(ground_truth_to_text(task.ground_truth));
    if (const auto* seg = std::get_if<SegmentationTruth>(&task.ground_truth.payload)) {
      json refs = json::object();
      for (const auto& [t, mask] : seg->frames) {
        const auto name = "gt_f" + std::to_string(t) + ".rle";
        write_mask_file(dir / name, mask);
        refs[std::to_string(t)] = name;
      }
      manifest["masks"] = refs;
    }
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    write_text(dir / "twin.json", dt_to_text(task.twin) + "\n");
    write_text(dir / "query.txt", task.query + "\n");
    write_text(dir / "rollout.txt", oracle_rollout(task) + "\n");
    index.push_back({{"task_id", task.task_id},
                     {"query", task.query},
                     {"kind", query_kind_name(task.kind)},
                     {"difficulty", difficulty_name(task.difficulty)},
                     {"task_type", task_type_name(task.ground_truth.task_type)}});
  }
  write_text(out_dir / "index.json", index.dump(2) + "\n");
}

}  // namespace dtr1
