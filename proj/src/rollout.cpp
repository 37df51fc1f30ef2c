#include "dtr1/rollout.hpp"

#include <algorithm>
#include <deque>
#include <stdexcept>

namespace dtr1 {
namespace {

struct MarkerInfo {
  TagKind kind;
  std::string_view name;
  std::string_view open;
  std::string_view close;
};

constexpr std::array<MarkerInfo, 7> kMarkers = {{
    {TagKind::Think, "think", "<think>", "</think>"},
    {TagKind::DtPlan, "dt_plan", "<dt_plan>", "</dt_plan>"},
    {TagKind::DtRep, "dt_rep", "<dt_rep>", "</dt_rep>"},
    {TagKind::Execute, "execute", "<execute>", "</execute>"},
    {TagKind::Results, "results", "<results>", "</results>"},
    {TagKind::Task, "task", "<task>", "</task>"},
    {TagKind::Answer, "answer", "<answer>", "</answer>"},
}};

const MarkerInfo& info(TagKind kind) { return kMarkers[static_cast<std::size_t>(kind)]; }

struct MarkerHit {
  std::size_t pos;
  TagKind kind;
  bool closing;
  std::size_t length() const {
    return closing ? close_marker(kind).size() : open_marker(kind).size();
  }
};

std::optional<MarkerHit> marker_at(std::string_view text, std::size_t pos) {
  if (pos >= text.size() || text[pos] != '<') return std::nullopt;
  const auto rest = text.substr(pos);
  for (const auto& m : kMarkers) {
    if (rest.starts_with(m.open)) return MarkerHit{pos, m.kind, false};
    if (rest.starts_with(m.close)) return MarkerHit{pos, m.kind, true};
  }
  return std::nullopt;
}

std::optional<MarkerHit> next_marker(std::string_view text, std::size_t from) {
  for (auto pos = text.find('<', from); pos != std::string_view::npos;
       pos = text.find('<', pos + 1)) {
    if (auto hit = marker_at(text, pos)) return hit;
  }
  return std::nullopt;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

bool is_ident_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// `<name>` or `</name>` that is not one of ours.
bool looks_like_tag(std::string_view rest) {
  std::size_t i = 1;
  if (i < rest.size() && rest[i] == '/') ++i;
  const auto name_start = i;
  while (i < rest.size() && is_ident_char(rest[i])) ++i;
  return i > name_start && i < rest.size() && rest[i] == '>';
}

// Text that ends partway through a marker, e.g. "<dt_pl".
bool is_partial_marker(std::string_view rest) {
  for (const auto& m : kMarkers) {
    if (m.open.starts_with(rest) || m.close.starts_with(rest)) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Grammar automaton
// ---------------------------------------------------------------------------

enum State : int {
  kStart = 0,
  kAfterFirstThink,
  kAfterPlan,
  kReady,       // after dt_rep or results: another iteration or the task
  kAfterThink,  // inside an iteration
  kAfterExecute,
  kAfterTask,
  kDone,
  kStateCount
};

std::optional<State> step(State s, TagKind k) {
  switch (s) {
    case kStart:
      if (k == TagKind::Think) return kAfterFirstThink;
      break;
    case kAfterFirstThink:
      if (k == TagKind::DtPlan) return kAfterPlan;
      break;
    case kAfterPlan:
      if (k == TagKind::DtRep) return kReady;
      break;
    case kReady:
      if (k == TagKind::Think) return kAfterThink;
      if (k == TagKind::Task) return kAfterTask;
      break;
    case kAfterThink:
      if (k == TagKind::Think) return kAfterThink;
      if (k == TagKind::Execute) return kAfterExecute;
      if (k == TagKind::Task) return kAfterTask;
      break;
    case kAfterExecute:
      if (k == TagKind::Results) return kReady;
      break;
    case kAfterTask:
      if (k == TagKind::Answer) return kDone;
      break;
    default:
      break;
  }
  return std::nullopt;
}

// Shortest run of kinds that must be emitted from `s` before `k` is accepted.
std::optional<std::vector<TagKind>> missing_before(State s, TagKind k) {
  struct Node {
    State state;
    std::vector<TagKind> path;
  };
  std::array<bool, kStateCount> seen{};
  std::deque<Node> queue{{s, {}}};
  seen[s] = true;
  while (!queue.empty()) {
    auto node = std::move(queue.front());
    queue.pop_front();
    if (step(node.state, k)) return node.path;
    for (auto kind : kAllTagKinds) {
      if (auto next = step(node.state, kind); next && !seen[*next]) {
        seen[*next] = true;
        auto path = node.path;
        path.push_back(kind);
        queue.push_back({*next, std::move(path)});
      }
    }
  }
  return std::nullopt;
}

std::string kinds_text(const std::vector<TagKind>& kinds) {
  std::string out;
  for (auto k : kinds) {
    if (!out.empty()) out += ", ";
    out += open_marker(k);
  }
  return out;
}

struct GrammarRun {
  State state = kStart;
  std::optional<ParseError> violation;
};

GrammarRun run_grammar(const std::vector<Segment>& segments) {
  GrammarRun run;
  bool seen_task = false;
  bool seen_answer = false;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    if (auto next = step(run.state, seg.kind)) {
      run.state = *next;
      seen_task |= seg.kind == TagKind::Task;
      seen_answer |= seg.kind == TagKind::Answer;
      continue;
    }
    const auto at = seg.span.start;
    const std::string tag(open_marker(seg.kind));
    if ((seg.kind == TagKind::Task && seen_task) || (seg.kind == TagKind::Answer && seen_answer)) {
      run.violation = ParseError{ParseErrorKind::DuplicateTerminal, at, "second " + tag};
      return run;
    }
    const auto missing = missing_before(run.state, seg.kind);
    if (!missing) {
      run.violation = ParseError{ParseErrorKind::OutOfOrder, at, tag + " not allowed here"};
      return run;
    }
    const bool appears_later = std::any_of(segments.begin() + i, segments.end(), [&](const Segment& s) {
      return std::find(missing->begin(), missing->end(), s.kind) != missing->end();
    });
    if (appears_later) {
      run.violation = ParseError{ParseErrorKind::OutOfOrder, at,
                                 tag + " before " + kinds_text(*missing)};
    } else {
      run.violation = ParseError{ParseErrorKind::MissingRequired, at,
                                 kinds_text(*missing) + " required before " + tag};
    }
    return run;
  }
  return run;
}

std::string expected_next(State s) {
  std::vector<TagKind> allowed;
  for (auto k : kAllTagKinds) {
    if (step(s, k)) allowed.push_back(k);
  }
  return "expected " + kinds_text(allowed);
}

std::size_t count_iterations(const std::vector<Segment>& segments) {
  std::size_t count = 0;
  bool after_rep = false;
  for (const auto& s : segments) {
    if (s.kind == TagKind::DtRep) after_rep = true;
    else if (after_rep && s.kind == TagKind::Think) ++count;
  }
  return count;
}

// ---------------------------------------------------------------------------
// Tokenizer shared by the grammar parser and the lenient scan
// ---------------------------------------------------------------------------

struct ScanOptions {
  bool reject_stray_text;
  bool reject_unknown_tags;
  bool allow_dangling;
};

Result<RolloutSequence, ParseError> tokenize(std::string_view text, ScanOptions opts) {
  RolloutSequence seq;
  seq.source_text = std::string(text);
  std::size_t pos = 0;
  const auto n = text.size();
  while (pos < n) {
    if (is_space(text[pos])) {
      ++pos;
      continue;
    }
    if (auto hit = marker_at(text, pos)) {
      if (hit->closing) {
        return ParseError{ParseErrorKind::UnbalancedTag, pos,
                          std::string(close_marker(hit->kind)) + " without matching open marker"};
      }
      const auto content_start = pos + hit->length();
      auto close = next_marker(text, content_start);
      if (!close) {
        if (!opts.allow_dangling) {
          return ParseError{ParseErrorKind::UnbalancedTag, pos,
                            "unterminated " + std::string(open_marker(hit->kind))};
        }
        seq.dangling_open = pos;
        break;
      }
      if (!close->closing || close->kind != hit->kind) {
        const auto found = close->closing ? close_marker(close->kind) : open_marker(close->kind);
        return ParseError{ParseErrorKind::UnbalancedTag, close->pos,
                          std::string(found) + " inside " + std::string(open_marker(hit->kind)) +
                              " block"};
      }
      const auto end = close->pos + close->length();
      seq.segments.push_back(Segment{hit->kind,
                                     std::string(text.substr(content_start, close->pos - content_start)),
                                     Span{pos, end}, origin_of(hit->kind)});
      pos = end;
      continue;
    }
    if (text[pos] == '<') {
      const auto rest = text.substr(pos);
      if (opts.reject_unknown_tags && looks_like_tag(rest)) {
        return ParseError{ParseErrorKind::UnknownTag, pos,
                          "unknown tag " + std::string(rest.substr(0, rest.find('>') + 1))};
      }
      if (is_partial_marker(rest)) {
        if (!opts.allow_dangling) {
          return ParseError{ParseErrorKind::UnbalancedTag, pos, "text ends inside a marker"};
        }
        seq.dangling_open = pos;
        break;
      }
    }
    if (opts.reject_stray_text) {
      return ParseError{ParseErrorKind::TrailingGarbage, pos, "untagged text between segments"};
    }
    ++pos;
  }
  seq.iteration_count = count_iterations(seq.segments);
  return seq;
}

}  // namespace

std::string_view tag_name(TagKind kind) { return info(kind).name; }
std::string_view open_marker(TagKind kind) { return info(kind).open; }
std::string_view close_marker(TagKind kind) { return info(kind).close; }

std::optional<TagKind> tag_kind_from_name(std::string_view name) {
  for (const auto& m : kMarkers) {
    if (m.name == name) return m.kind;
  }
  return std::nullopt;
}

Span Segment::content_span() const {
  const auto start = span.start + open_marker(kind).size();
  return Span{start, start + content.size()};
}

std::string_view parse_error_kind_name(ParseErrorKind kind) {
  switch (kind) {
    case ParseErrorKind::UnknownTag: return "UnknownTag";
    case ParseErrorKind::UnbalancedTag: return "UnbalancedTag";
    case ParseErrorKind::OutOfOrder: return "OutOfOrder";
    case ParseErrorKind::MissingRequired: return "MissingRequired";
    case ParseErrorKind::DuplicateTerminal: return "DuplicateTerminal";
    case ParseErrorKind::TrailingGarbage: return "TrailingGarbage";
  }
  return "?";
}

std::string ParseError::describe() const {
  return std::string(parse_error_kind_name(kind)) + " at " + std::to_string(position) + ": " + detail;
}

bool contains_marker(std::string_view text) { return next_marker(text, 0).has_value(); }

Result<RolloutSequence, ParseError> parse_rollout(std::string_view text, ParseMode mode) {
  const bool strict = mode == ParseMode::Strict;
  auto scanned = tokenize(text, ScanOptions{strict, true, !strict});
  if (!scanned) return scanned.error();
  auto seq = std::move(scanned).value();

  if (seq.segments.empty() && !seq.dangling_open) {
    return ParseError{ParseErrorKind::MissingRequired, 0, "no segments; expected <think>"};
  }
  auto run = run_grammar(seq.segments);
  if (run.violation) return *run.violation;

  if (run.state == kDone) {
    if (seq.dangling_open) {
      return ParseError{ParseErrorKind::UnbalancedTag, *seq.dangling_open,
                        "unterminated block after </answer>"};
    }
    seq.terminal = Terminal::Answered;
    return seq;
  }
  if (strict) {
    return ParseError{ParseErrorKind::MissingRequired, text.size(), expected_next(run.state)};
  }
  seq.terminal = Terminal::TokenLimitTruncated;
  return seq;
}

Result<RolloutSequence, ParseError> scan_segments(std::string_view text) {
  auto scanned = tokenize(text, ScanOptions{false, false, true});
  if (!scanned) return scanned;
  auto seq = std::move(scanned).value();
  const bool answered = std::any_of(seq.segments.begin(), seq.segments.end(),
                                    [](const Segment& s) { return s.kind == TagKind::Answer; });
  seq.terminal = answered ? Terminal::Answered : Terminal::TokenLimitTruncated;
  return seq;
}

FormatVerdict validate_order(const RolloutSequence& seq) {
  auto run = run_grammar(seq.segments);
  if (run.violation) return {false, run.violation};
  if (seq.dangling_open) {
    return {false, ParseError{ParseErrorKind::UnbalancedTag, *seq.dangling_open,
                              "block left open at end of text"}};
  }
  if (run.state != kDone) {
    return {false, ParseError{ParseErrorKind::MissingRequired, seq.source_text.size(),
                              expected_next(run.state)}};
  }
  return {true, std::nullopt};
}

std::string render(const RolloutSequence& seq) {
  std::string out;
  for (const auto& s : seq.segments) {
    if (!out.empty()) out += '\n';
    out += open_marker(s.kind);
    out += s.content;
    out += close_marker(s.kind);
  }
  return out;
}

RolloutSequence make_rollout(const std::vector<std::pair<TagKind, std::string>>& parts) {
  RolloutSequence seq;
  std::size_t pos = 0;
  bool answered = false;
  for (const auto& [kind, content] : parts) {
    if (!seq.segments.empty()) ++pos;
    const auto len = open_marker(kind).size() + content.size() + close_marker(kind).size();
    seq.segments.push_back(Segment{kind, content, Span{pos, pos + len}, origin_of(kind)});
    pos += len;
    answered |= kind == TagKind::Answer;
  }
  seq.source_text = render(seq);
  seq.iteration_count = count_iterations(seq.segments);
  seq.terminal = answered ? Terminal::Answered : Terminal::TokenLimitTruncated;
  return seq;
}

std::string insert_system_segment(std::string_view prefix, TagKind kind, std::string_view payload) {
  std::string_view expected;
  if (kind == TagKind::DtRep) expected = close_marker(TagKind::DtPlan);
  else if (kind == TagKind::Results) expected = close_marker(TagKind::Execute);
  else throw std::invalid_argument("only <dt_rep> and <results> are system-inserted");

  if (!prefix.ends_with(expected)) {
    throw std::invalid_argument("prefix must end with " + std::string(expected) + " to insert " +
                                std::string(open_marker(kind)));
  }
  if (contains_marker(payload)) {
    throw std::invalid_argument("payload contains a rollout marker");
  }
  std::string out(prefix);
  out += '\n';
  out += open_marker(kind);
  out += payload;
  out += close_marker(kind);
  return out;
}

std::vector<std::string> extract_contents(const RolloutSequence& seq, TagKind kind) {
  std::vector<std::string> out;
  for (const auto& s : seq.segments) {
    if (s.kind == kind) out.push_back(s.content);
  }
  return out;
}

}  // namespace dtr1
