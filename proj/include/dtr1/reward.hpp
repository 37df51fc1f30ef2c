#pragma once

// Rule-based reward for a complete rollout:
//
//   total = alpha * (r_token + r_dag) + beta * (r_exec + r_task + r_result)

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dtr1/exec.hpp"
#include "dtr1/geometry.hpp"
#include "dtr1/judge.hpp"
#include "dtr1/plan.hpp"
#include "dtr1/rollout.hpp"

namespace dtr1 {

inline constexpr std::string_view kRewardSchema = "dtr1-reward/1";
inline constexpr std::string_view kGroundTruthSchema = "dtr1-gt/1";

enum class TaskType { Segmentation, Grounding, Summarization, Vqa };

std::string_view task_type_name(TaskType t);
/// Maps a free-form task label onto a category: lowercase, trim, drop the
/// word "reasoning", then accept the canonical names and a few synonyms
/// ("vqa", "visual question answering", "summary", ...).
std::optional<TaskType> normalize_task(std::string_view label);

enum class ExecPenaltyMode { AnyFailure, PerBlockSum };
enum class SegAggregation { MeanThenThreshold, PerFrame };

struct RewardConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double iou_threshold = 0.5;  // correct iff IoU > threshold
  ExecPenaltyMode exec_penalty_mode = ExecPenaltyMode::AnyFailure;
  SegAggregation seg_aggregation = SegAggregation::MeanThenThreshold;

  /// Throws std::invalid_argument on non-finite weights or a threshold
  /// outside (0, 1).
  void validate() const;
};

struct SegmentationTruth {
  std::map<int, BinaryMask> frames;  // frame index -> target mask
};

struct GroundingTruth {
  std::map<int, BoundingBox> frames;  // annotated frames only
};

struct TextTruth {
  std::string reference;
  std::string rubric;
};

struct GroundTruth {
  TaskType task_type = TaskType::Vqa;
  std::variant<SegmentationTruth, GroundingTruth, TextTruth> payload;

  /// Throws std::invalid_argument when the payload does not fit task_type.
  void validate() const;
};

/// Missing or unreadable ground-truth file.
class GroundTruthFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ground truth from its JSON form. File references resolve against `base`.
///
///   {"schema": "dtr1-gt/1", "task_type": "segmentation",
///    "masks": {"0": "gt_f0.rle"}}                       (or inline mask objects)
///   {"task_type": "grounding", "box": [x0, y0, x1, y1], "frames": [first, last]}
///   {"task_type": "grounding", "boxes": {"0": [...], "2": [...]}}
///   {"task_type": "vqa", "reference": "...", "rubric": "..."}
///
/// Throws SchemaError on malformed input, GroundTruthFileError on unreadable
/// files.
GroundTruth ground_truth_from_text(std::string_view text, const std::filesystem::path& base = {});
/// Reads `<dir>/manifest.json`, or the file itself when given one.
GroundTruth load_ground_truth(const std::filesystem::path& path);
std::string ground_truth_to_text(const GroundTruth& gt);

struct RewardBreakdown {
  double r_token = -1.0;
  double r_dag = -0.5;
  double r_exec = 0.0;
  double r_task = 0.0;
  double r_result = -1.0;
  double r_format = 0.0;
  double r_accuracy = 0.0;
  double total = 0.0;
  std::vector<std::string> diagnostics;

  friend bool operator==(const RewardBreakdown&, const RewardBreakdown&) = default;
};

/// Where execution outcomes for r_exec come from, in order of preference:
/// an explicit replay, a live executor run against the rollout's twin, or the
/// "OK:" / "ERR:" sentinel at the start of each Results segment (anything
/// else counts as success).
struct ScoreDeps {
  const ModelRegistry* registry = nullptr;  // defaults() when null
  const JudgeClient* judge = nullptr;       // MockJudge when null
  std::optional<std::vector<ExecOutcome>> exec_replay;
  const ToolExecutor* executor = nullptr;
  std::chrono::milliseconds exec_timeout{2000};
  /// Resolves mask references inside segmentation answers.
  std::shared_ptr<const MaskStore> answer_masks;
};

double score_token_format(std::string_view rollout_text);
double score_dag(const DagVerdict& verdict);
double score_exec(const std::vector<ExecOutcome>& outcomes, ExecPenaltyMode mode = ExecPenaltyMode::AnyFailure);
double score_task(const RolloutSequence& seq, const GroundTruth& gt);
/// Appends explanations for -1 scores to `diagnostics` when non-null. Throws
/// JudgeTransportError from the judge unchanged.
double score_result(const RolloutSequence& seq, const GroundTruth& gt, const JudgeClient& judge,
                    const RewardConfig& cfg, const MaskStore* answer_masks,
                    std::vector<std::string>* diagnostics = nullptr);

/// Full breakdown. Format terms use the strict grammar; accuracy terms are
/// read from a lenient segment scan so a misformatted rollout can still earn
/// them. Throws SchemaError("exec_replay") when a replay does not match the
/// number of Execute blocks, and JudgeTransportError from the judge.
RewardBreakdown score(std::string_view rollout_text, const GroundTruth& gt, const RewardConfig& cfg,
                      const ScoreDeps& deps = {});

/// Canonical single-line JSON record with every breakdown field.
std::string breakdown_to_text(const RewardBreakdown& b);
RewardBreakdown breakdown_from_text(std::string_view text);

}  // namespace dtr1
