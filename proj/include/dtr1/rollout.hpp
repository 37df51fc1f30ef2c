#pragma once

// Structured rollout sequences: the tagged output a policy emits for one
// query, plus the spans the environment inserts (twin and execution results).
//
//   think, dt_plan, dt_rep, (think, [execute, results])*, task, answer
//
// Markers are exact lowercase literals and never nest. Content may not
// contain any marker substring.

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dtr1/result.hpp"

namespace dtr1 {

enum class TagKind { Think, DtPlan, DtRep, Execute, Results, Task, Answer };

inline constexpr std::array<TagKind, 7> kAllTagKinds = {
    TagKind::Think, TagKind::DtPlan,  TagKind::DtRep, TagKind::Execute,
    TagKind::Results, TagKind::Task, TagKind::Answer};

std::string_view tag_name(TagKind kind);
std::string_view open_marker(TagKind kind);
std::string_view close_marker(TagKind kind);
std::optional<TagKind> tag_kind_from_name(std::string_view name);

enum class Origin { PolicyGenerated, SystemInserted };

inline Origin origin_of(TagKind kind) {
  return (kind == TagKind::DtRep || kind == TagKind::Results) ? Origin::SystemInserted
                                                               : Origin::PolicyGenerated;
}

/// Half-open character range into the source text.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct Segment {
  TagKind kind;
  std::string content;
  Span span;  // open marker through close marker
  Origin origin;

  Span content_span() const;
  friend bool operator==(const Segment&, const Segment&) = default;
};

enum class ParseErrorKind {
  UnknownTag,
  UnbalancedTag,
  OutOfOrder,
  MissingRequired,
  DuplicateTerminal,
  TrailingGarbage
};

std::string_view parse_error_kind_name(ParseErrorKind kind);

struct ParseError {
  ParseErrorKind kind;
  std::size_t position = 0;
  std::string detail;

  std::string describe() const;
};

enum class Terminal { Answered, TokenLimitTruncated };

struct RolloutSequence {
  std::string source_text;
  std::vector<Segment> segments;
  std::size_t iteration_count = 0;  // Think segments after dt_rep
  Terminal terminal = Terminal::Answered;
  // Offset of a block opened but never closed before end of text (non-strict
  // parses of truncated output only).
  std::optional<std::size_t> dangling_open;
};

enum class ParseMode { Strict, NonStrict };

Result<RolloutSequence, ParseError> parse_rollout(std::string_view text,
                                                  ParseMode mode = ParseMode::NonStrict);

/// Collects every well-formed segment regardless of grammar order. Used by the
/// reward engine to score accuracy terms of rollouts whose format is broken.
/// Fails only on marker-level damage (nesting, stray close markers).
Result<RolloutSequence, ParseError> scan_segments(std::string_view text);

struct FormatVerdict {
  bool ok = false;
  std::optional<ParseError> first_violation;
};

FormatVerdict validate_order(const RolloutSequence& seq);

/// Segments joined by newlines; inter-segment prose is not preserved.
std::string render(const RolloutSequence& seq);

/// Builds a sequence from (kind, content) pairs and lays out spans as render()
/// would. Intended for tests and rollout writers.
RolloutSequence make_rollout(const std::vector<std::pair<TagKind, std::string>>& parts);

/// Appends an environment-produced segment after a paused generation. The
/// prefix must end exactly at </dt_plan> (DtRep) or </execute> (Results).
/// Throws std::invalid_argument on precondition violations.
std::string insert_system_segment(std::string_view prefix, TagKind kind, std::string_view payload);

std::vector<std::string> extract_contents(const RolloutSequence& seq, TagKind kind);

/// True if `text` contains any of the fourteen marker strings.
bool contains_marker(std::string_view text);

}  // namespace dtr1
