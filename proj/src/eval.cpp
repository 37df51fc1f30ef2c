#include "dtr1/eval.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dtr1/result.hpp"
#include "dtr1/reward.hpp"

namespace dtr1 {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json metrics_json(const MetricReport& m) {
  return {{"j_mean", m.j_mean}, {"f_mean", m.f_mean}, {"giou", m.giou}, {"ciou", m.ciou}};
}

std::vector<EvalGroup> grouped(const std::map<std::string, std::vector<MaskPair>>& groups) {
  std::vector<EvalGroup> out;
  for (const auto& [key, pairs] : groups) {
    if (pairs.empty()) continue;
    out.push_back({key, pairs.size(), aggregate(pairs)});
  }
  return out;
}

}  // namespace

BoundingBox read_box_file(const fs::path& path) {
  std::istringstream in(slurp(path));
  BoundingBox b;
  if (!(in >> b.x_min >> b.y_min >> b.x_max >> b.y_max)) throw std::runtime_error("malformed box file " + path.string());
  std::string rest;
  if (in >> rest) throw std::runtime_error("trailing data in box file " + path.string());
  if (!b.valid()) throw std::runtime_error("empty or negative box in " + path.string());
  return b;
}

EvalReport run_eval(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::invalid_argument("not a directory: " + dir.string());
  const auto manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw std::invalid_argument("no manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(slurp(manifest_path));
  } catch (const json::parse_error& e) {
    throw SchemaError("", std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!manifest.is_object() || manifest.value("schema", std::string()) != kEvalSchema) {
    throw SchemaError("schema", "expected dtr1-eval/1");
  }
  if (!manifest.contains("samples") || !manifest["samples"].is_array()) throw SchemaError("samples", "expected array");
  if (manifest["samples"].empty()) throw std::invalid_argument("manifest lists no samples");

  EvalReport report;
  std::vector<MaskPair> all;
  std::map<std::string, std::vector<MaskPair>> by_difficulty, by_category;
  std::size_t scored = 0, well_formed = 0;
  double total = 0.0;

  const auto& samples = manifest["samples"];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto at = "samples[" + std::to_string(i) + "]";
    if (!s.is_object() || !s.contains("id") || !s["id"].is_string()) throw SchemaError(at + ".id", "missing field");
    const auto id = s["id"].get<std::string>();
    if (!s.contains("task_type") || !s["task_type"].is_string()) throw SchemaError(at + ".task_type", "missing field");
    const auto type = normalize_task(s["task_type"].get<std::string>());
    if (!type) throw SchemaError(at + ".task_type", "unknown task type");
    std::vector<int> frames{0};
    if (s.contains("frames")) {
      if (!s["frames"].is_array() || s["frames"].empty()) throw SchemaError(at + ".frames", "expected non-empty array");
      frames.clear();
      for (const auto& f : s["frames"]) {
        if (!f.is_number_integer() || f.get<int>() < 0) throw SchemaError(at + ".frames", "expected frame indices");
        frames.push_back(f.get<int>());
      }
    }
    ++report.samples;

    if (*type == TaskType::Segmentation || *type == TaskType::Grounding) {
      const bool masks = *type == TaskType::Segmentation;
      for (int t : frames) {
        const auto stem = "_f" + std::to_string(t) + (masks ? ".rle" : ".box");
        const auto pred_path = dir / id / ("pred" + stem);
        const auto gt_path = dir / id / ("gt" + stem);
        MaskPair pair;
        try {
          if (masks) {
            pair = {read_mask_file(pred_path), read_mask_file(gt_path)};
          } else {
            const auto p = read_box_file(pred_path);
            const auto g = read_box_file(gt_path);
            const int w = std::max(p.x_max, g.x_max), h = std::max(p.y_max, g.y_max);
            pair = {box_mask(w, h, p), box_mask(w, h, g)};
          }
          if (pair.pred.width != pair.gt.width || pair.pred.height != pair.gt.height) {
            throw std::runtime_error("size mismatch");
          }
        } catch (const std::exception&) {
          for (const auto& p : {pred_path, gt_path}) {
            if (!fs::exists(p)) report.missing_files.push_back(fs::relative(p, dir).generic_string());
          }
          if (fs::exists(pred_path) && fs::exists(gt_path)) {
            report.missing_files.push_back(fs::relative(pred_path, dir).generic_string() + " (unreadable)");
          }
          continue;
        }
        all.push_back(pair);
        if (s.contains("difficulty") && s["difficulty"].is_string()) {
          by_difficulty[s["difficulty"].get<std::string>()].push_back(pair);
        }
        if (s.contains("category") && s["category"].is_string()) {
          by_category[s["category"].get<std::string>()].push_back(pair);
        }
      }
    }

    if (s.contains("rollout") && s.contains("gt")) {
      const auto rollout_path = dir / s["rollout"].get<std::string>();
      const auto gt_path = dir / s["gt"].get<std::string>();
      try {
        const auto gt = load_ground_truth(gt_path);
        ScoreDeps deps;
        deps.answer_masks = std::make_shared<FileMaskStore>(rollout_path.parent_path());
        const auto b = score(slurp(rollout_path), gt, RewardConfig{}, deps);
        ++scored;
        total += b.total;
        well_formed += b.r_token > 0;
      } catch (const std::runtime_error&) {
        for (const auto& p : {rollout_path, gt_path}) {
          if (!fs::exists(p)) report.missing_files.push_back(fs::relative(p, dir).generic_string());
        }
      }
    }
  }

  report.pairs = all.size();
  if (!all.empty()) report.overall = aggregate(all);
  report.by_difficulty = grouped(by_difficulty);
  report.by_category = grouped(by_category);
  if (scored > 0) {
    report.rewards = RewardSummary{scored, total / static_cast<double>(scored),
                                   static_cast<double>(well_formed) / static_cast<double>(scored)};
  }
  return report;
}

std::string eval_report_to_text(const EvalReport& r) {
  json j;
  j["schema"] = kEvalSchema;
  j["samples"] = r.samples;
  j["pairs"] = r.pairs;
  j["overall"] = r.overall ? metrics_json(*r.overall) : json(nullptr);
  auto groups = [](const std::vector<EvalGroup>& gs) {
    json out = json::object();
    for (const auto& g : gs) {
      auto m = metrics_json(g.metrics);
      m["pairs"] = g.pairs;
      out[g.key] = m;
    }
    return out;
  };
  j["by_difficulty"] = groups(r.by_difficulty);
  j["by_category"] = groups(r.by_category);
  if (r.rewards) {
    j["rewards"] = {{"scored", r.rewards->scored},
                    {"mean_total", r.rewards->mean_total},
                    {"format_rate", r.rewards->format_rate}};
  }
  j["missing_files"] = r.missing_files;
  return j.dump();
}

}  // namespace dtr1
