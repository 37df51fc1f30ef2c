#pragma once

// Code execution against a digital twin. Executors report raw (possibly
// multi-line) errors; execute() reduces them to the single line that goes
// back into the rollout.

#include <chrono>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>

#include "dtr1/geometry.hpp"
#include "dtr1/twin.hpp"

namespace dtr1 {

inline constexpr std::string_view kExecSchema = "dtr1-exec/1";

struct ExecRequest {
  std::string code;
  std::shared_ptr<const DigitalTwin> twin;
  std::chrono::milliseconds timeout{2000};
};

struct ExecOutcome {
  bool success = true;
  std::string output;
  std::optional<std::string> error_line;  // single line, no paths

  static ExecOutcome ok(std::string output) { return {true, std::move(output), std::nullopt}; }
  static ExecOutcome failure(std::string line) { return {false, "", std::move(line)}; }
  friend bool operator==(const ExecOutcome&, const ExecOutcome&) = default;
};

struct RawExecResult {
  bool success = true;
  std::string output;
  std::string error_text;  // traceback as produced by the interpreter
};

class ToolExecutor {
 public:
  virtual ~ToolExecutor() = default;
  /// Long-running executors must return promptly once `stop` is requested.
  virtual RawExecResult run(const ExecRequest& req, std::stop_token stop) const = 0;
};

/// Last non-empty line of an error report, skipping lines that carry file
/// paths; if every line does, the error class of the last line.
std::string truncate_error(std::string_view raw_error);
/// Heuristic used by truncate_error: absolute or relative file paths,
/// Windows drive paths, and `File "..."` traceback frames.
bool contains_path(std::string_view line);

/// Runs `req` with its timeout. Never throws for executor failures: timeouts
/// yield "execution timeout", exceptions become truncated error lines.
ExecOutcome execute(const ExecRequest& req, const ToolExecutor& executor);

/// Deterministic stand-in interpreter for a tiny, loop-free query language
/// over the bound twin:
///
///   n = instance_count(frame=0)
///   mean_depth(1, 0) < mean_depth(2, 0)
///   iou(mask(0, 1), bbox(2, 0))
///   frames_where(mean_depth(1) < 3.5)
///
/// Accessors: mean_depth(instance, frame), std_depth(instance, frame),
/// bbox(instance, frame), mask(frame, instance), iou(a, b),
/// instance_count(frame), frames_where(predicate), sleep(ms).
/// Arguments may be named. Inside frames_where the frame defaults to the
/// frame under test, `t`. Each expression line contributes one output line.
class MockExecutor final : public ToolExecutor {
 public:
  /// `masks` resolves mask_path references; may be null when twins carry
  /// inline masks only.
  explicit MockExecutor(std::shared_ptr<const MaskStore> masks = nullptr) : masks_(std::move(masks)) {}
  RawExecResult run(const ExecRequest& req, std::stop_token stop) const override;

 private:
  std::shared_ptr<const MaskStore> masks_;
};

}  // namespace dtr1
