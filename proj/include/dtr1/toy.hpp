#pragma once

// Desk-scale stand-in for the policy: independent categorical slots (format,
// plan, code, task label, answer) whose realised choices are written out as a
// rollout and scored by the real reward engine.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dtr1/grpo.hpp"
#include "dtr1/synth.hpp"

namespace dtr1 {

struct ToyPolicy {
  std::array<double, kFormatActionCount> format_logits{};
  std::array<double, kPlanChoiceCount> plan_logits{};
  std::array<double, 2> code_logits{};  // solution code, buggy code
  /// Task label and answer tables are conditioned on the task.
  std::vector<std::array<double, kTaskLabels.size()>> task_logits;
  std::vector<std::vector<double>> answer_logits;

  /// Uniform policy sized for `tasks`.
  static ToyPolicy uniform(const std::vector<SyntheticTask>& tasks);
  friend bool operator==(const ToyPolicy&, const ToyPolicy&) = default;
};

struct ToyActions {
  std::size_t format = 0;
  std::size_t plan = 0;
  std::size_t code = 0;
  std::size_t task = 0;
  std::size_t answer = 0;
  friend bool operator==(const ToyActions&, const ToyActions&) = default;
};

struct ToySample {
  std::string text;
  ToyActions actions;
};

RolloutKnobs knobs_for(const ToyActions& a);

/// Deterministic for a fixed seed.
ToySample toy_sample(const ToyPolicy& policy, std::size_t task_index, const SyntheticTask& task, std::uint64_t seed);
/// Argmax in every slot.
ToySample toy_greedy(const ToyPolicy& policy, std::size_t task_index, const SyntheticTask& task);

/// For each rollout i and slot, logit[a_i] += lr * A_i * (1 - p(a_i)) and every
/// other logit b -= lr * A_i * p(b), with p from the policy before the update.
/// Throws std::invalid_argument on a length mismatch.
ToyPolicy toy_update(const ToyPolicy& policy, std::size_t task_index, const std::vector<ToyActions>& actions,
                     const AdvantageVector& advantages, double lr);

struct TrainConfig {
  int iterations = 200;
  std::size_t group_size = 8;
  double lr = 0.2;
  std::uint64_t seed = 7;
  std::size_t task_count = 8;
  DifficultyMix mix;
  bool format_reward = true;  // ablation: drop the format half from the training signal
  bool result_reward = true;  // ablation: drop answer correctness from the training signal
};

struct CurvePoint {
  int iteration = 0;
  double mean_reward = 0.0;  // full reward with alpha = beta = 1, whatever the ablation
  double std_reward = 0.0;
  double format_rate = 0.0;  // share of rollouts with correct token format
  double answer_accuracy = 0.0;
  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  ToyPolicy policy;
  std::vector<SyntheticTask> tasks;
};

/// Tasks are visited round-robin, one group per iteration. Throws
/// std::invalid_argument when group_size < 2 or iterations < 1.
TrainResult simulate_training(const TrainConfig& cfg);

/// Mean of a field over curve[first, first + n).
double window_mean(const std::vector<CurvePoint>& curve, std::size_t first, std::size_t n,
                   double CurvePoint::*field = &CurvePoint::mean_reward);

inline constexpr std::string_view kCurveSchema = "dtr1-curve/1";
/// One JSON record per line.
std::string curve_to_records(const std::vector<CurvePoint>& curve);
std::vector<CurvePoint> curve_from_records(std::string_view text);

}  // namespace dtr1
