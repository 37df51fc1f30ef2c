#include "dtr1/exec.hpp"

#include <future>
#include <regex>
#include <thread>
#include <vector>

namespace dtr1 {

namespace {

std::vector<std::string_view> nonempty_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find_first_of("\r\n", start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string_view::npos) {
      const auto last = line.find_last_not_of(" \t");
      lines.push_back(line.substr(first, last - first + 1));
    }
    start = end + 1;
  }
  return lines;
}

bool token_is_path(std::string_view tok) {
  static const std::regex drive(R"(^[A-Za-z]:[\\/])");
  static const std::regex nested(R"(\w[\w.-]*/[\w.-]*\w/)");
  static const std::regex with_ext(R"(\w/[\w.-]*\.[A-Za-z]\w*$)");
  if (tok.size() < 2) return false;
  if (tok.find('\\') != std::string_view::npos) return true;
  if (tok[0] == '/' && tok[1] != '/' && tok[1] != ' ') return true;
  if (tok.starts_with("./") || tok.starts_with("../") || tok.starts_with("~/")) return true;
  const std::string s(tok);
  return std::regex_search(s, drive) || std::regex_search(s, nested) || std::regex_search(s, with_ext);
}

}  // namespace

bool contains_path(std::string_view line) {
  if (line.find("File \"") != std::string_view::npos) return true;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    auto j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    auto tok = line.substr(i, j - i);
    const auto trim = std::string_view("\"'()[]{}<>,;:");
    while (!tok.empty() && trim.find(tok.front()) != std::string_view::npos) tok.remove_prefix(1);
    while (!tok.empty() && trim.find(tok.back()) != std::string_view::npos) tok.remove_suffix(1);
    if (token_is_path(tok)) return true;
    i = j;
  }
  return false;
}

std::string truncate_error(std::string_view raw_error) {
  const auto lines = nonempty_lines(raw_error);
  if (lines.empty()) return "Error";
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    if (!contains_path(*it)) return std::string(*it);
  }
  static const std::regex error_class(R"(^([A-Za-z_][A-Za-z0-9_.]*))");
  std::match_results<std::string_view::const_iterator> m;
  const auto last = lines.back();
  if (std::regex_search(last.begin(), last.end(), m, error_class)) return m[1].str();
  return "Error";
}

ExecOutcome execute(const ExecRequest& req, const ToolExecutor& executor) {
  if (req.timeout.count() <= 0) return ExecOutcome::failure("invalid execution timeout");

  std::promise<RawExecResult> promise;
  auto result = promise.get_future();
  std::jthread worker([&](std::stop_token stop) {
    try {
      promise.set_value(executor.run(req, stop));
    } catch (...) {
      promise.set_exception(std::current_exception());
    }
  });

  if (result.wait_for(req.timeout) != std::future_status::ready) {
    worker.request_stop();
    return ExecOutcome::failure("execution timeout");
  }
  try {
    auto raw = result.get();
    if (raw.success) return ExecOutcome::ok(std::move(raw.output));
    return ExecOutcome::failure(truncate_error(raw.error_text));
  } catch (const std::exception& e) {
    return ExecOutcome::failure(truncate_error(e.what()));
  } catch (...) {
    return ExecOutcome::failure("Error");
  }
}

}  // namespace dtr1
