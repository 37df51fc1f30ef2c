#pragma once

// Offline evaluation over a directory of prediction / ground-truth pairs.
//
//   <dir>/manifest.json
//     {"schema": "dtr1-eval/1",
//      "samples": [{"id": "s1", "task_type": "segmentation", "frames": [0, 1],
//                   "difficulty": "L2", "category": "spatial",
//                   "rollout": "s1/rollout.txt", "gt": "s1/gt"}]}
//   <dir>/<id>/pred_f<t>.rle, gt_f<t>.rle      segmentation samples
//   <dir>/<id>/pred_f<t>.box, gt_f<t>.box      grounding samples ("x0 y0 x1 y1")
//
// "difficulty", "category", "rollout" and "gt" are optional; samples with a
// rollout and a ground-truth directory are also scored with the reward.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dtr1/metrics.hpp"

namespace dtr1 {

inline constexpr std::string_view kEvalSchema = "dtr1-eval/1";

struct EvalGroup {
  std::string key;
  std::size_t pairs = 0;
  MetricReport metrics;
};

struct RewardSummary {
  std::size_t scored = 0;
  double mean_total = 0.0;
  double format_rate = 0.0;  // share with r_token = +1
};

struct EvalReport {
  std::size_t samples = 0;
  std::size_t pairs = 0;
  std::optional<MetricReport> overall;  // absent when no pair could be read
  std::vector<EvalGroup> by_difficulty;
  std::vector<EvalGroup> by_category;
  std::optional<RewardSummary> rewards;
  std::vector<std::string> missing_files;

  bool complete() const { return missing_files.empty(); }
};

/// Throws std::invalid_argument when the directory or its manifest is missing
/// or lists no samples, SchemaError on a malformed manifest. Unreadable pair
/// files are listed in missing_files and skipped.
EvalReport run_eval(const std::filesystem::path& dir);

std::string eval_report_to_text(const EvalReport& r);

BoundingBox read_box_file(const std::filesystem::path& path);

}  // namespace dtr1
