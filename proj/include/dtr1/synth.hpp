#pragma once

// Synthetic reasoning tasks over generated twins, plus rollout writers used to
// calibrate the reward ceiling and to drive the toy trainer.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dtr1/geometry.hpp"
#include "dtr1/reward.hpp"
#include "dtr1/twin.hpp"

namespace dtr1 {

enum class Difficulty { L1, L2, L3, L4 };
std::string_view difficulty_name(Difficulty d);
std::optional<Difficulty> difficulty_from_name(std::string_view name);

/// Relative weights of L1..L4.
struct DifficultyMix {
  std::array<double, 4> weights{1.0, 1.0, 1.0, 1.0};
  static DifficultyMix only(Difficulty d);
  /// "L1", "L1,L3", or "all".
  static DifficultyMix parse(std::string_view text);
};

enum class QueryKind { Nearest, Farthest, Largest, Leftmost, Count, Summarize };
std::string_view query_kind_name(QueryKind k);

struct SyntheticTask {
  std::string task_id;
  std::string query;
  QueryKind kind = QueryKind::Nearest;
  Difficulty difficulty = Difficulty::L1;
  DigitalTwin twin;
  GroundTruth ground_truth;
  int target_instance = -1;  // geometric queries only

  std::vector<std::string> answer_candidates;  // answer segment contents
  std::size_t correct_answer = 0;

  std::vector<std::string> solution_code;     // one execute step, two for L3/L4
  std::vector<std::string> solution_results;  // results contents, "OK: ..."
  std::string failing_code;
  std::string failing_result;  // "ERR: ..."

  /// Resolves every mask reference in the twin and in the answers.
  std::shared_ptr<MemoryMaskStore> masks;
};

/// Instance a geometric query refers to in `frame`: argmin / argmax mean depth,
/// largest pixel count, smallest x_min. Ties go to the lower instance id.
/// Throws std::invalid_argument for Count/Summarize or missing statistics.
int select_target(const DigitalTwin& twin, QueryKind kind, int frame = 0);

/// Builds a task (ground truth, answer candidates, solution code) for an
/// existing twin whose mask references resolve through `masks`.
SyntheticTask build_task(std::string task_id, QueryKind kind, TaskType type, Difficulty difficulty, DigitalTwin twin,
                         std::shared_ptr<MemoryMaskStore> masks);

/// Deterministic per seed. Throws std::invalid_argument when count is 0 or
/// the mix has no positive weight.
std::vector<SyntheticTask> generate_tasks(std::uint64_t seed, std::size_t count, const DifficultyMix& mix = {});

// ---------------------------------------------------------------------------
// Rollout writers

enum class FormatAction { WellFormed, DropTaskTags, SwapTaskAnswer, StrayText };
inline constexpr std::size_t kFormatActionCount = 4;

enum class PlanChoice { ExampleDag, SegmentOnly, Cyclic, UnknownModel };
inline constexpr std::size_t kPlanChoiceCount = 4;
std::string_view plan_choice_text(PlanChoice p);

/// Task labels a rollout may emit, in TaskType order.
inline constexpr std::array<std::string_view, 4> kTaskLabels = {
    "reasoning segmentation", "reasoning grounding", "reasoning summarization",
    "reasoning visual question answering"};

struct RolloutKnobs {
  FormatAction format = FormatAction::WellFormed;
  PlanChoice plan = PlanChoice::ExampleDag;
  bool buggy_code = false;  // first execute step fails
  std::size_t task_label = 0;
  std::size_t answer = 0;
};

RolloutKnobs oracle_knobs(const SyntheticTask& task);
std::string write_rollout(const SyntheticTask& task, const RolloutKnobs& knobs);
inline std::string oracle_rollout(const SyntheticTask& task) { return write_rollout(task, oracle_knobs(task)); }

/// Writes one directory per task: manifest.json, gt_f<t>.rle, masks/,
/// twin.json, query.txt and an oracle rollout.txt, plus index.json.
void write_fixtures(const std::vector<SyntheticTask>& tasks, const std::filesystem::path& out_dir);

}  // namespace dtr1
