#include "dtr1/judge.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

namespace dtr1 {

std::vector<std::string> normalize_answer(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && cur != "a" && cur != "an" && cur != "the") tokens.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    } else if (std::isspace(c)) {
      flush();
    }
    // other punctuation is dropped without splitting ("don't" -> "dont")
  }
  flush();
  return tokens;
}

double token_f1(std::string_view candidate, std::string_view reference) {
  const auto c = normalize_answer(candidate);
  const auto r = normalize_answer(reference);
  const std::set<std::string> cs(c.begin(), c.end());
  const std::set<std::string> rs(r.begin(), r.end());
  if (cs.empty() && rs.empty()) return 1.0;
  if (cs.empty() || rs.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : cs) common += rs.count(t);
  return 2.0 * static_cast<double>(common) / static_cast<double>(cs.size() + rs.size());
}

JudgeVerdict MockJudge::judge(const JudgeRequest& req) const {
  const double f1 = token_f1(req.candidate, req.reference);
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, f1);
  const std::string score(buf, res.ptr);
  if (normalize_answer(req.candidate).empty() && !normalize_answer(req.reference).empty()) {
    return {false, "empty answer"};
  }
  const bool ok = f1 >= threshold_;
  return {ok, "token F1 " + score + (ok ? " >= " : " < ") + "threshold"};
}

}  // namespace dtr1
