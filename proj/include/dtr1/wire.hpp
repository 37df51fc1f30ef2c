#pragma once

// JSON forms of the records exchanged with remote executors, judges and the
// scoring service.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtr1/exec.hpp"
#include "dtr1/grpo.hpp"
#include "dtr1/judge.hpp"
#include "dtr1/plan.hpp"
#include "dtr1/reward.hpp"

namespace dtr1 {

inline constexpr std::string_view kApiSchema = "dtr1-api/1";

using json = nlohmann::json;

json exec_request_to_json(const ExecRequest& req);
ExecRequest exec_request_from_json(const json& j);
json exec_outcome_to_json(const ExecOutcome& o);
/// `path` prefixes SchemaError field paths.
ExecOutcome exec_outcome_from_json(const json& j, const std::string& path = "");

json judge_request_to_json(const JudgeRequest& r);
JudgeRequest judge_request_from_json(const json& j);
json judge_verdict_to_json(const JudgeVerdict& v);
JudgeVerdict judge_verdict_from_json(const json& j);

json dag_verdict_to_json(const DagVerdict& v);
json training_mask_to_json(const TrainingMask& m);
TrainingMask training_mask_from_json(const json& j);

/// Breakdown fields without the diagnostics.
json breakdown_to_json(const RewardBreakdown& b);

/// Applies the overrides in `j` on top of `base`:
///   {"alpha", "beta", "iou_threshold",
///    "exec_penalty_mode": "any_failure" | "per_block_sum",
///    "seg_aggregation": "mean" | "per_frame"}
RewardConfig reward_config_from_json(const json& j, RewardConfig base, const std::string& path = "config");

struct ScoreRequest {
  std::string rollout_text;
  GroundTruth ground_truth;
  RewardConfig config;
  std::optional<std::vector<ExecOutcome>> exec_replay;
};

/// {"schema": "dtr1-api/1", "rollout_text": "...",
///  "ground_truth": {...inline...} | "relative/dir",
///  "config": {...}, "exec_replay": [{"success", "output", "error_line"}]}
///
/// File references resolve under `data_root`; absolute paths and ".." are
/// rejected. Throws SchemaError or GroundTruthFileError.
ScoreRequest score_request_from_json(const json& j, const std::filesystem::path& data_root,
                                     const RewardConfig& defaults);

/// Mask used in score responses: non-strict parse, falling back to a lenient
/// segment scan; nullopt when neither succeeds.
std::optional<TrainingMask> response_mask(std::string_view rollout_text);

/// Canonical response body for a scored request.
std::string score_response_text(const RewardBreakdown& b, const std::optional<TrainingMask>& mask);

}  // namespace dtr1
