#pragma once

// Correctness judging for free-text answers (summaries, short answers).

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dtr1 {

inline constexpr std::string_view kJudgeSchema = "dtr1-judge/1";

struct JudgeRequest {
  std::string candidate;
  std::string reference;
  std::string rubric;  // forwarded to remote judges; the mock ignores it
  friend bool operator==(const JudgeRequest&, const JudgeRequest&) = default;
};

struct JudgeVerdict {
  bool correct = false;
  std::string rationale;
  friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

/// Raised when a judge cannot be reached or answers garbage. Reward scoring
/// surfaces it instead of scoring the answer as wrong.
class JudgeTransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual JudgeVerdict judge(const JudgeRequest& req) const = 0;
};

/// Lowercased word tokens with punctuation and the articles a/an/the removed.
std::vector<std::string> normalize_answer(std::string_view text);
/// F1 between the token sets of two normalized texts.
double token_f1(std::string_view candidate, std::string_view reference);

/// Token-overlap judge: correct iff token_f1 >= threshold. An empty candidate
/// is wrong unless the reference is empty too.
class MockJudge final : public JudgeClient {
 public:
  explicit MockJudge(double threshold = 0.6) : threshold_(threshold) {}
  JudgeVerdict judge(const JudgeRequest& req) const override;
  double threshold() const { return threshold_; }

 private:
  double threshold_;
};

}  // namespace dtr1
