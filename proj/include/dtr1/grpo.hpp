#pragma once

// Group-relative advantages and the training mask over environment-inserted
// spans.

#include <cstddef>
#include <string>
#include <vector>

#include "dtr1/rollout.hpp"

namespace dtr1 {

struct AdvantageVector {
  std::vector<double> values;
  double eps = 1e-8;
};

/// a_i = (r_i - mean) / (population std + eps); all zero when the group has
/// no spread. Throws std::invalid_argument for fewer than two rewards, a
/// negative eps, or non-finite rewards.
AdvantageVector group_advantages(const std::vector<double>& rewards, double eps = 1e-8);

struct MaskSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  bool trainable = true;
  friend bool operator==(const MaskSpan&, const MaskSpan&) = default;
};

struct TrainingMask {
  std::vector<MaskSpan> spans;  // sorted, disjoint, covering the text

  std::size_t masked_chars() const;
  friend bool operator==(const TrainingMask&, const TrainingMask&) = default;
};

/// dt_rep and results segments, markers included, are not trainable;
/// everything else is. Adjacent spans with the same flag are merged.
TrainingMask training_mask(const RolloutSequence& seq);

struct RolloutGroup {
  std::string prompt_id;
  std::vector<double> rewards;
  std::vector<std::string> rollouts;
};

}  // namespace dtr1
