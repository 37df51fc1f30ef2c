// Interpreter for the mock executor's query language.

#include <charconv>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "dtr1/exec.hpp"
#include "dtr1/metrics.hpp"

namespace dtr1 {

namespace {

struct QueryError {
  std::string type;
  std::string message;
};

[[noreturn]] void raise(std::string type, std::string message) {
  throw QueryError{std::move(type), std::move(message)};
}

// Raised when an accessor names an instance the frame does not hold; inside
// frames_where this makes the predicate false for that frame.
struct MissingInstance : QueryError {};

using IntList = std::vector<long long>;
using Value = std::variant<std::monostate, long long, double, bool, BoundingBox, BinaryMask, IntList>;

std::string type_name(const Value& v) {
  switch (v.index()) {
    case 0: return "NoneType";
    case 1: return "int";
    case 2: return "float";
    case 3: return "bool";
    case 4: return "box";
    case 5: return "mask";
    default: return "list";
  }
}

std::string render_real(double d) {
  if (std::isnan(d)) return "nan";
  if (std::isinf(d)) return d > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, d);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::string render(const Value& v) {
  struct {
    std::string operator()(std::monostate) const { return "None"; }
    std::string operator()(long long i) const { return std::to_string(i); }
    std::string operator()(double d) const { return render_real(d); }
    std::string operator()(bool b) const { return b ? "true" : "false"; }
    std::string operator()(const BoundingBox& b) const {
      return "[" + std::to_string(b.x_min) + ", " + std::to_string(b.y_min) + ", " + std::to_string(b.x_max) +
             ", " + std::to_string(b.y_max) + "]";
    }
    std::string operator()(const BinaryMask& m) const {
      return "mask(" + std::to_string(m.width) + "x" + std::to_string(m.height) +
             ", area=" + std::to_string(mask_area(m)) + ")";
    }
    std::string operator()(const IntList& l) const {
      std::string s = "[";
      for (std::size_t i = 0; i < l.size(); ++i) s += (i ? ", " : "") + std::to_string(l[i]);
      return s + "]";
    }
  } visitor;
  return std::visit(visitor, v);
}

// ---------------------------------------------------------------------------
// Lexer

enum class Tok { Number, Ident, Op, LParen, RParen, Comma, Assign, End };

struct Token {
  Tok kind;
  std::string text;
};

std::vector<Token> lex(const std::string& line) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto ident_char = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  while (i < line.size()) {
    const char c = line[i];
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
    } else if (c == '#') {
      break;
    } else if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < line.size() &&
                                                                std::isdigit(static_cast<unsigned char>(line[i + 1])))) {
      auto j = i;
      while (j < line.size() && (std::isdigit(static_cast<unsigned char>(line[j])) || line[j] == '.')) ++j;
      if (j < line.size() && (line[j] == 'e' || line[j] == 'E')) {
        auto k = j + 1;
        if (k < line.size() && (line[k] == '+' || line[k] == '-')) ++k;
        if (k < line.size() && std::isdigit(static_cast<unsigned char>(line[k]))) {
          j = k;
          while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
        }
      }
      out.push_back({Tok::Number, line.substr(i, j - i)});
      i = j;
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      auto j = i;
      while (j < line.size() && ident_char(line[j])) ++j;
      out.push_back({Tok::Ident, line.substr(i, j - i)});
      i = j;
    } else if (line.compare(i, 2, "\xC3\x97") == 0) {
      out.push_back({Tok::Op, "*"});
      i += 2;
    } else if (line.compare(i, 2, "\xC3\xB7") == 0) {
      out.push_back({Tok::Op, "/"});
      i += 2;
    } else if (line.compare(i, 3, "\xE2\x88\x92") == 0) {  // unicode minus
      out.push_back({Tok::Op, "-"});
      i += 3;
    } else if (line.compare(i, 2, "==") == 0 || line.compare(i, 2, "!=") == 0 ||
               line.compare(i, 2, "<=") == 0 || line.compare(i, 2, ">=") == 0) {
      out.push_back({Tok::Op, line.substr(i, 2)});
      i += 2;
    } else if (c == '+' || c == '-' || c == '*' || c == '/' || c == '<' || c == '>' || c == '%') {
      out.push_back({Tok::Op, std::string(1, c)});
      ++i;
    } else if (c == '(') {
      out.push_back({Tok::LParen, "("});
      ++i;
    } else if (c == ')') {
      out.push_back({Tok::RParen, ")"});
      ++i;
    } else if (c == ',') {
      out.push_back({Tok::Comma, ","});
      ++i;
    } else if (c == '=') {
      out.push_back({Tok::Assign, "="});
      ++i;
    } else {
      raise("SyntaxError", "invalid character '" + std::string(1, c) + "'");
    }
  }
  out.push_back({Tok::End, ""});
  return out;
}

// ---------------------------------------------------------------------------
// Parser

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind { Literal, Name, Unary, Binary, Call } kind;
  Value literal;
  std::string name;  // identifier, operator, or callee
  std::vector<ExprPtr> args;
  std::vector<std::pair<std::string, ExprPtr>> named;
};

class Parser {
 public:
  explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

  // Returns the assignment target (empty if none) and the expression.
  std::pair<std::string, ExprPtr> statement() {
    std::string target;
    if (peek().kind == Tok::Ident && toks_[pos_ + 1].kind == Tok::Assign) {
      target = next().text;
      next();
    }
    auto e = expression();
    if (peek().kind != Tok::End) raise("SyntaxError", "invalid syntax");
    return {target, e};
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool is_op(std::string_view op) const { return peek().kind == Tok::Op && peek().text == op; }
  bool is_word(std::string_view w) const { return peek().kind == Tok::Ident && peek().text == w; }

  static ExprPtr binary(std::string op, ExprPtr l, ExprPtr r) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::Binary;
    e->name = std::move(op);
    e->args = {std::move(l), std::move(r)};
    return e;
  }
  static ExprPtr unary(std::string op, ExprPtr x) {
    auto e = std::make_shared<Expr>();
    e->kind = Expr::Kind::Unary;
    e->name = std::move(op);
    e->args = {std::move(x)};
    return e;
  }

  ExprPtr expression() { return disjunction(); }

  ExprPtr disjunction() {
    auto l = conjunction();
    while (is_word("or")) {
      next();
      l = binary("or", l, conjunction());
    }
    return l;
  }
  ExprPtr conjunction() {
    auto l = negation();
    while (is_word("and")) {
      next();
      l = binary("and", l, negation());
    }
    return l;
  }
  ExprPtr negation() {
    if (is_word("not")) {
      next();
      return unary("not", negation());
    }
    return comparison();
  }
  ExprPtr comparison() {
    auto l = additive();
    for (auto op : {"<", "<=", ">", ">=", "==", "!="}) {
      if (is_op(op)) {
        next();
        auto r = additive();
        if (peek().kind == Tok::Op && (peek().text == "<" || peek().text == ">" || peek().text == "<=" ||
                                       peek().text == ">=" || peek().text == "==" || peek().text == "!=")) {
          raise("SyntaxError", "chained comparisons are not supported");
        }
        return binary(op, l, r);
      }
    }
    return l;
  }
  ExprPtr additive() {
    auto l = term();
    while (is_op("+") || is_op("-")) {
      auto op = next().text;
      l = binary(op, l, term());
    }
    return l;
  }
  ExprPtr term() {
    auto l = factor();
    while (is_op("*") || is_op("/") || is_op("%")) {
      auto op = next().text;
      l = binary(op, l, factor());
    }
    return l;
  }
  ExprPtr factor() {
    if (is_op("-") || is_op("+")) {
      auto op = next().text;
      return unary(op, factor());
    }
    return primary();
  }
  ExprPtr primary() {
    const auto tok = next();
    auto e = std::make_shared<Expr>();
    switch (tok.kind) {
      case Tok::Number: {
        e->kind = Expr::Kind::Literal;
        if (tok.text.find_first_of(".eE") == std::string::npos) {
          long long v = 0;
          auto res = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), v);
          if (res.ec != std::errc()) raise("OverflowError", "integer literal too large");
          e->literal = v;
        } else {
          double d = 0;
          auto res = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), d);
          if (res.ec != std::errc() || res.ptr != tok.text.data() + tok.text.size()) {
            raise("SyntaxError", "invalid decimal literal");
          }
          e->literal = d;
        }
        return e;
      }
      case Tok::Ident: {
        if (tok.text == "true" || tok.text == "True" || tok.text == "false" || tok.text == "False") {
          e->kind = Expr::Kind::Literal;
          e->literal = tok.text[0] == 't' || tok.text[0] == 'T';
          return e;
        }
        if (tok.text == "None") {
          e->kind = Expr::Kind::Literal;
          return e;
        }
        if (tok.text == "and" || tok.text == "or" || tok.text == "not") raise("SyntaxError", "invalid syntax");
        e->name = tok.text;
        if (peek().kind != Tok::LParen) {
          e->kind = Expr::Kind::Name;
          return e;
        }
        next();
        e->kind = Expr::Kind::Call;
        if (peek().kind != Tok::RParen) {
          while (true) {
            if (peek().kind == Tok::Ident && toks_[pos_ + 1].kind == Tok::Assign) {
              auto key = next().text;
              next();
              e->named.emplace_back(key, expression());
            } else {
              if (!e->named.empty()) raise("SyntaxError", "positional argument follows keyword argument");
              e->args.push_back(expression());
            }
            if (peek().kind == Tok::Comma) {
              next();
              continue;
            }
            break;
          }
        }
        if (next().kind != Tok::RParen) raise("SyntaxError", "'(' was never closed");
        return e;
      }
      case Tok::LParen: {
        auto inner = expression();
        if (next().kind != Tok::RParen) raise("SyntaxError", "'(' was never closed");
        return inner;
      }
      default:
        raise("SyntaxError", "invalid syntax");
    }
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluation

bool is_number(const Value& v) { return v.index() == 1 || v.index() == 2 || v.index() == 3; }

double as_real(const Value& v) {
  if (auto i = std::get_if<long long>(&v)) return static_cast<double>(*i);
  if (auto d = std::get_if<double>(&v)) return *d;
  if (auto b = std::get_if<bool>(&v)) return *b ? 1.0 : 0.0;
  raise("TypeError", "expected a number, got " + type_name(v));
}

bool is_integral(const Value& v) { return v.index() == 1 || v.index() == 3; }

long long as_int(const Value& v) {
  if (auto i = std::get_if<long long>(&v)) return *i;
  if (auto b = std::get_if<bool>(&v)) return *b;
  if (auto d = std::get_if<double>(&v)) {
    if (std::floor(*d) == *d && std::isfinite(*d)) return static_cast<long long>(*d);
  }
  raise("TypeError", "expected an integer, got " + type_name(v));
}

bool truthy(const Value& v) {
  switch (v.index()) {
    case 0: return false;
    case 1: return std::get<long long>(v) != 0;
    case 2: return std::get<double>(v) != 0.0;
    case 3: return std::get<bool>(v);
    case 4: return std::get<BoundingBox>(v).area() > 0;
    case 5: return mask_area(std::get<BinaryMask>(v)) > 0;
    default: return !std::get<IntList>(v).empty();
  }
}

class Interpreter {
 public:
  Interpreter(const DigitalTwin& twin, const MaskStore* masks, std::stop_token stop)
      : twin_(twin), masks_(masks), stop_(std::move(stop)) {}

  std::map<std::string, Value> vars;

  Value eval(const Expr& e) {
    switch (e.kind) {
      case Expr::Kind::Literal: return e.literal;
      case Expr::Kind::Name: {
        if (e.name == "t" && frame_under_test_) return static_cast<long long>(*frame_under_test_);
        auto it = vars.find(e.name);
        if (it == vars.end()) raise("NameError", "name '" + e.name + "' is not defined");
        return it->second;
      }
      case Expr::Kind::Unary: {
        auto x = eval(*e.args[0]);
        if (e.name == "not") return !truthy(x);
        if (!is_number(x)) raise("TypeError", "bad operand type for unary " + e.name + ": '" + type_name(x) + "'");
        if (e.name == "+") return is_integral(x) ? Value(as_int(x)) : x;
        if (is_integral(x)) return -as_int(x);
        return -as_real(x);
      }
      case Expr::Kind::Binary: return binary(e);
      case Expr::Kind::Call: return call(e);
    }
    return {};
  }

 private:
  Value binary(const Expr& e) {
    const auto& op = e.name;
    if (op == "and") {
      if (!truthy(eval(*e.args[0]))) return false;
      return truthy(eval(*e.args[1]));
    }
    if (op == "or") {
      if (truthy(eval(*e.args[0]))) return true;
      return truthy(eval(*e.args[1]));
    }
    const auto l = eval(*e.args[0]);
    const auto r = eval(*e.args[1]);
    if (op == "==" || op == "!=") {
      bool eq;
      if (is_number(l) && is_number(r)) {
        eq = as_real(l) == as_real(r);
      } else {
        eq = l == r;
      }
      return op == "==" ? eq : !eq;
    }
    if (!is_number(l) || !is_number(r)) {
      raise("TypeError", "unsupported operand type(s) for " + op + ": '" + type_name(l) + "' and '" +
                             type_name(r) + "'");
    }
    if (op == "<") return as_real(l) < as_real(r);
    if (op == "<=") return as_real(l) <= as_real(r);
    if (op == ">") return as_real(l) > as_real(r);
    if (op == ">=") return as_real(l) >= as_real(r);
    const bool ints = is_integral(l) && is_integral(r);
    if (op == "/") {
      if (as_real(r) == 0.0) raise("ZeroDivisionError", "division by zero");
      return as_real(l) / as_real(r);
    }
    if (op == "%") {
      if (as_real(r) == 0.0) raise("ZeroDivisionError", "modulo by zero");
      if (ints) {
        const auto a = as_int(l), b = as_int(r);
        auto m = a % b;
        if (m != 0 && ((m < 0) != (b < 0))) m += b;
        return m;
      }
      const double a = as_real(l), b = as_real(r);
      return a - b * std::floor(a / b);
    }
    if (ints) {
      const auto a = as_int(l), b = as_int(r);
      if (op == "+") return a + b;
      if (op == "-") return a - b;
      return a * b;
    }
    const double a = as_real(l), b = as_real(r);
    if (op == "+") return a + b;
    if (op == "-") return a - b;
    return a * b;
  }

  // Binds call arguments to `params`; a missing `frame` defaults to the frame
  // under test inside frames_where and to 0 elsewhere.
  std::vector<Value> bind(const Expr& call, const std::vector<std::string>& params) {
    if (call.args.size() > params.size()) {
      raise("TypeError", call.name + "() takes " + std::to_string(params.size()) + " arguments but " +
                             std::to_string(call.args.size()) + " were given");
    }
    std::vector<std::optional<Value>> bound(params.size());
    for (std::size_t i = 0; i < call.args.size(); ++i) bound[i] = eval(*call.args[i]);
    for (const auto& [key, expr] : call.named) {
      std::size_t idx = params.size();
      for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i] == key) idx = i;
      }
      if (idx == params.size()) raise("TypeError", call.name + "() got an unexpected keyword argument '" + key + "'");
      if (bound[idx]) raise("TypeError", call.name + "() got multiple values for argument '" + key + "'");
      bound[idx] = eval(*expr);
    }
    std::vector<Value> out;
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!bound[i]) {
        if (params[i] == "frame") {
          bound[i] = static_cast<long long>(frame_under_test_.value_or(0));
        } else {
          raise("TypeError", call.name + "() missing required argument: '" + params[i] + "'");
        }
      }
      out.push_back(std::move(*bound[i]));
    }
    return out;
  }

  const FrameRecord& frame(const Value& v) {
    const auto t = as_int(v);
    const auto* f = (t >= 0 && t <= INT32_MAX) ? twin_.frame(static_cast<int>(t)) : nullptr;
    if (!f) raise("IndexError", "frame " + std::to_string(t) + " out of range");
    return *f;
  }

  const InstanceRecord& instance(const Value& id, const Value& t) {
    const auto& f = frame(t);
    const auto i = as_int(id);
    const auto* rec = (i >= INT32_MIN && i <= INT32_MAX) ? f.find(static_cast<int>(i)) : nullptr;
    if (!rec) {
      throw MissingInstance{{"KeyError", "instance " + std::to_string(i) + " not in frame " + std::to_string(f.t)}};
    }
    return *rec;
  }

  const DepthStats& depth(const InstanceRecord& rec) {
    if (!rec.depth) raise("ValueError", "no depth statistics for instance " + std::to_string(rec.instance_id));
    return *rec.depth;
  }

  BinaryMask mask_of(const InstanceRecord& rec) {
    if (const auto* m = rec.inline_mask()) return *m;
    if (!masks_) raise("RuntimeError", "mask for instance " + std::to_string(rec.instance_id) + " is unavailable");
    try {
      return masks_->load(*rec.mask_path());
    } catch (const std::exception&) {
      raise("RuntimeError", "mask for instance " + std::to_string(rec.instance_id) + " is unavailable");
    }
  }

  Value call(const Expr& e) {
    const auto& fn = e.name;
    if (fn == "mean_depth") {
      auto a = bind(e, {"instance", "frame"});
      return depth(instance(a[0], a[1])).mean;
    }
    if (fn == "std_depth") {
      auto a = bind(e, {"instance", "frame"});
      return depth(instance(a[0], a[1])).std;
    }
    if (fn == "bbox") {
      auto a = bind(e, {"instance", "frame"});
      return instance(a[0], a[1]).bbox;
    }
    if (fn == "mask") {
      auto a = bind(e, {"frame", "instance"});
      return mask_of(instance(a[1], a[0]));
    }
    if (fn == "instance_count") {
      auto a = bind(e, {"frame"});
      return static_cast<long long>(frame(a[0]).instances.size());
    }
    if (fn == "iou") {
      auto a = bind(e, {"a", "b"});
      return iou(a[0], a[1]);
    }
    if (fn == "frames_where") return frames_where(e);
    if (fn == "sleep") {
      auto a = bind(e, {"ms"});
      sleep(as_real(a[0]));
      return {};
    }
    if (fn == "abs") {
      auto a = bind(e, {"x"});
      if (is_integral(a[0])) return std::llabs(as_int(a[0]));
      return std::fabs(as_real(a[0]));
    }
    if (fn == "min" || fn == "max") {
      auto a = bind(e, {"a", "b"});
      const bool take_first = fn == "min" ? as_real(a[0]) <= as_real(a[1]) : as_real(a[0]) >= as_real(a[1]);
      return take_first ? a[0] : a[1];
    }
    if (fn == "len") {
      auto a = bind(e, {"x"});
      if (auto l = std::get_if<IntList>(&a[0])) return static_cast<long long>(l->size());
      raise("TypeError", "object of type '" + type_name(a[0]) + "' has no len()");
    }
    raise("NameError", "name '" + fn + "' is not defined");
  }

  Value iou(const Value& a, const Value& b) {
    const auto* ma = std::get_if<BinaryMask>(&a);
    const auto* mb = std::get_if<BinaryMask>(&b);
    const auto* ba = std::get_if<BoundingBox>(&a);
    const auto* bb = std::get_if<BoundingBox>(&b);
    try {
      if (ma && mb) return mask_iou(*ma, *mb);
      if (ba && bb) return bbox_iou(*ba, *bb);
      if (ma && bb) return mask_iou(*ma, box_mask(ma->width, ma->height, *bb));
      if (ba && mb) return mask_iou(box_mask(mb->width, mb->height, *ba), *mb);
    } catch (const std::invalid_argument& ex) {
      raise("ValueError", ex.what());
    }
    raise("TypeError", "iou() expects masks or boxes, got '" + type_name(a) + "' and '" + type_name(b) + "'");
  }

  Value frames_where(const Expr& e) {
    if (e.args.size() + e.named.size() != 1) raise("TypeError", "frames_where() takes exactly one argument");
    const Expr& pred = e.args.empty() ? *e.named.front().second : *e.args.front();
    if (!e.named.empty() && e.named.front().first != "predicate") {
      raise("TypeError", "frames_where() got an unexpected keyword argument '" + e.named.front().first + "'");
    }
    if (frame_under_test_) raise("ValueError", "frames_where() cannot be nested");
    IntList hits;
    for (const auto& f : twin_.frames) {
      check_stop();
      frame_under_test_ = f.t;
      try {
        if (truthy(eval(pred))) hits.push_back(f.t);
      } catch (const MissingInstance&) {
      } catch (...) {
        frame_under_test_.reset();
        throw;
      }
      frame_under_test_.reset();
    }
    return hits;
  }

  void sleep(double ms) {
    if (!(ms >= 0)) raise("ValueError", "sleep length must be non-negative");
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double, std::milli>(ms);
    while (std::chrono::steady_clock::now() < deadline) {
      check_stop();
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  }

 public:
  void check_stop() const {
    if (stop_.stop_requested()) raise("KeyboardInterrupt", "execution interrupted");
  }

 private:
  const DigitalTwin& twin_;
  const MaskStore* masks_;
  std::stop_token stop_;
  std::optional<int> frame_under_test_;
};

std::string traceback(std::size_t line, const QueryError& err) {
  return "Traceback (most recent call last):\n  File \"/sandbox/exec.py\", line " + std::to_string(line) +
         ", in <module>\n" + err.type + ": " + err.message + "\n";
}

}  // namespace

RawExecResult MockExecutor::run(const ExecRequest& req, std::stop_token stop) const {
  if (!req.twin) return {false, "", "RuntimeError: no digital twin bound to the request"};
  Interpreter interp(*req.twin, masks_.get(), stop);
  std::string output;
  std::size_t line_no = 0;
  std::size_t start = 0;
  const auto& code = req.code;
  while (start <= code.size()) {
    auto end = code.find('\n', start);
    if (end == std::string::npos) end = code.size();
    const auto line = code.substr(start, end - start);
    start = end + 1;
    ++line_no;
    try {
      interp.check_stop();
      auto toks = lex(line);
      if (toks.size() == 1) continue;
      auto [target, expr] = Parser(std::move(toks)).statement();
      auto value = interp.eval(*expr);
      if (!target.empty()) {
        if (target == "t") raise("SyntaxError", "cannot assign to 't'");
        interp.vars[target] = std::move(value);
      } else if (value.index() != 0) {
        if (!output.empty()) output += '\n';
        output += render(value);
      }
    } catch (const QueryError& err) {
      return {false, output, traceback(line_no, err)};
    }
  }
  return {true, output, ""};
}

}  // namespace dtr1
