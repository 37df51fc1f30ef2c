#include "dtr1/grpo.hpp"

#include <cmath>
#include <stdexcept>

namespace dtr1 {

AdvantageVector group_advantages(const std::vector<double>& rewards, double eps) {
  if (rewards.size() < 2) throw std::invalid_argument("a group needs at least two rewards");
  if (!(eps >= 0.0)) throw std::invalid_argument("eps must be non-negative");
  const auto n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) {
    if (!std::isfinite(r)) throw std::invalid_argument("non-finite reward");
    mean += r;
  }
  mean /= n;
  double sq = 0.0;
  for (double r : rewards) sq += (r - mean) * (r - mean);
  const double sd = std::sqrt(sq / n);

  AdvantageVector a{std::vector<double>(rewards.size(), 0.0), eps};
  if (sd == 0.0) return a;
  for (std::size_t i = 0; i < rewards.size(); ++i) a.values[i] = (rewards[i] - mean) / (sd + eps);
  return a;
}

std::size_t TrainingMask::masked_chars() const {
  std::size_t n = 0;
  for (const auto& s : spans) {
    if (!s.trainable) n += s.end - s.start;
  }
  return n;
}

TrainingMask training_mask(const RolloutSequence& seq) {
  TrainingMask m;
  auto push = [&](std::size_t start, std::size_t end, bool trainable) {
    if (start >= end) return;
    if (!m.spans.empty() && m.spans.back().trainable == trainable && m.spans.back().end == start) {
      m.spans.back().end = end;
      return;
    }
    m.spans.push_back({start, end, trainable});
  };
  std::size_t cursor = 0;
  for (const auto& s : seq.segments) {
    if (s.origin != Origin::SystemInserted) continue;
    push(cursor, s.span.start, true);
    push(s.span.start, s.span.end, false);
    cursor = s.span.end;
  }
  // A truncated environment span still belongs to the environment.
  const std::string_view text = seq.source_text;
  if (seq.dangling_open && *seq.dangling_open >= cursor) {
    const auto tail = text.substr(*seq.dangling_open);
    if (tail.starts_with(open_marker(TagKind::DtRep)) || tail.starts_with(open_marker(TagKind::Results))) {
      push(cursor, *seq.dangling_open, true);
      push(*seq.dangling_open, text.size(), false);
      return m;
    }
  }
  push(cursor, text.size(), true);
  return m;
}

}  // namespace dtr1
