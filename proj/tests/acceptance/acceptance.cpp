// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
// Exit status is the number of failed criteria.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <random>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "dtr1/exec.hpp"
#include "dtr1/grpo.hpp"
#include "dtr1/metrics.hpp"
#include "dtr1/service.hpp"
#include "dtr1/toy.hpp"
#include "dtr1/wire.hpp"

using namespace dtr1;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kGoldenBudgetS = 5.0;
constexpr double kPlanBudgetS = 30.0;
constexpr double kTrainBudgetS = 60.0;
constexpr double kBoxIouTol = 1e-9;
constexpr double kAdvMeanTol = 1e-9;
constexpr double kAdvStdTol = 1e-9;
constexpr double kDepthRelTol = 1e-12;
constexpr double kMinGain = 1.0;
constexpr double kMinFormatRate = 0.95;
constexpr double kMinAblationGap = 0.20;
constexpr int kRandomGraphs = 50;
constexpr int kIouCases = 200;
constexpr int kDepthCases = 100;
constexpr int kMinMalformed = 30;
constexpr int kConcurrentReplays = 64;

const fs::path kGolden = fs::path(DTR1_FIXTURES) / "golden";

struct Outcome {
  bool pass = true;
  std::string detail;
  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::vector<fs::path> golden_cases() {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(kGolden))
    if (e.is_directory()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

RewardConfig config_of(const json& expected) {
  return reward_config_from_json(expected["config"], RewardConfig{});
}

// ---------------------------------------------------------------------------

Outcome golden_corpus() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto cases = golden_cases();
  if (cases.size() < 32) o.fail("only " + std::to_string(cases.size()) + " golden cases");
  for (const auto& dir : cases) {
    const auto expected = json::parse(slurp(dir / "expected.json"));
    ScoreDeps deps;
    deps.answer_masks = std::make_shared<FileMaskStore>(dir);
    const auto b = score(slurp(dir / "rollout.txt"), load_ground_truth(dir / "gt"), config_of(expected), deps);
    for (const auto& [key, value] : std::vector<std::pair<std::string, double>>{
             {"r_token", b.r_token}, {"r_dag", b.r_dag}, {"r_exec", b.r_exec}, {"r_task", b.r_task},
             {"r_result", b.r_result}, {"r_format", b.r_format}, {"r_accuracy", b.r_accuracy}, {"total", b.total}}) {
      if (value != expected[key].get<double>()) {
        o.fail(dir.filename().string() + " " + key + " " + std::to_string(value));
      }
    }
  }
  const double s = seconds_since(t0);
  if (s >= kGoldenBudgetS) o.fail("took " + std::to_string(s) + " s");
  if (o.pass) o.detail = std::to_string(cases.size()) + " cases exact in " + std::to_string(s) + " s";
  return o;
}

// Placement search over subsets: acyclic iff every vertex can be placed after
// all of its prerequisites.
bool brute_acyclic(const PlanGraph& g) {
  const auto n = g.vertices.size();
  auto idx = [&](const std::string& v) {
    return static_cast<std::size_t>(std::find(g.vertices.begin(), g.vertices.end(), v) - g.vertices.begin());
  };
  std::vector<unsigned> need(n, 0);
  for (const auto& e : g.edges) need[idx(e.dependent)] |= 1u << idx(e.prerequisite);
  std::vector<char> reach(1u << n, 0);
  reach[0] = 1;
  for (unsigned s = 0; s < (1u << n); ++s) {
    if (!reach[s]) continue;
    for (std::size_t v = 0; v < n; ++v)
      if (!(s >> v & 1) && (need[v] & ~s) == 0) reach[s | 1u << v] = 1;
  }
  return reach[(1u << n) - 1];
}

Outcome plan_dag() {
  Outcome o;
  const auto t0 = Clock::now();
  const auto reg = ModelRegistry::defaults();
  const auto ex = validate_plan_text(kExamplePlanText, reg);
  if (!ex.all_ok()) o.fail("example plan rejected");

  // Random graphs over a registry of 12 models; kind follows in-degree.
  std::mt19937 rng(2024);
  int cyclic = 0;
  for (int i = 0; i < kRandomGraphs; ++i) {
    const int n = 1 + static_cast<int>(rng() % 12);
    PlanGraph g;
    for (int v = 0; v < n; ++v) g.add_vertex("M" + std::to_string(v));
    const double density = std::uniform_real_distribution<double>(0.05, 0.35)(rng);
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (a != b && std::uniform_real_distribution<double>(0, 1)(rng) < density)
          g.add_edge("M" + std::to_string(a), "M" + std::to_string(b));
    std::vector<RegistryEntry> entries;
    for (int v = 0; v < n; ++v) {
      const auto name = "M" + std::to_string(v);
      entries.push_back({name, g.prerequisites_of(name).empty() ? NodeKind::Foundation : NodeKind::DerivedOperator,
                         "c", "i", "o"});
    }
    const ModelRegistry local(entries);
    const bool expect = brute_acyclic(g);
    cyclic += !expect;
    const auto v = validate_plan(g, local);
    if (v.acyclic != expect || v.valid_format != true || v.valid_dependencies != true) {
      o.fail("graph " + std::to_string(i) + " disagrees with the oracle");
    }
    // Text form goes through the same checks.
    const auto vt = validate_plan_text(plan_to_text(g), local);
    if (vt.acyclic != expect) o.fail("graph " + std::to_string(i) + " text form disagrees");
  }
  const double s = seconds_since(t0);
  if (s >= kPlanBudgetS) o.fail("took " + std::to_string(s) + " s");
  if (o.pass) {
    o.detail = "example all-true; " + std::to_string(kRandomGraphs) + " graphs (" + std::to_string(cyclic) +
               " cyclic) match in " + std::to_string(s) + " s";
  }
  return o;
}

std::string letters_text(const std::string& letters) {
  static const std::string codes = "TPRESKA";
  std::string text;
  for (char c : letters) {
    const auto k = static_cast<TagKind>(codes.find(c));
    text += std::string(open_marker(k)) + "x" + std::string(close_marker(k)) + "\n";
  }
  return text;
}

Outcome rollout_grammar() {
  Outcome o;
  using K = ParseErrorKind;
  const auto ok = letters_text("TPRKA");
  const std::vector<std::pair<std::string, K>> malformed = {
      {"<think>a</think><plan>x</plan>", K::UnknownTag},
      {ok + "<foo>", K::UnknownTag},
      {"<think>a</think><tool>x</tool>" + letters_text("PRKA"), K::UnknownTag},
      {"<reason>x</reason>", K::UnknownTag},
      {letters_text("TP") + "<dt_graph>{}</dt_graph>", K::UnknownTag},
      {"<think>a<think>b</think></think>", K::UnbalancedTag},
      {"<think>a</answer>", K::UnbalancedTag},
      {"</think>", K::UnbalancedTag},
      {letters_text("TPRK") + "<answer>a", K::UnbalancedTag},
      {letters_text("TPRT") + "<execute>x", K::UnbalancedTag},
      {"<think>a<answer>b</answer></think>", K::UnbalancedTag},
      {letters_text("TP") + "<dt_rep>{</dt_plan>", K::UnbalancedTag},
      {letters_text("TPRTSEKA"), K::OutOfOrder},
      {letters_text("PTRKA"), K::OutOfOrder},
      {letters_text("TRPKA"), K::OutOfOrder},
      {letters_text("TPRAK"), K::OutOfOrder},
      {letters_text("TPKRA"), K::OutOfOrder},
      {letters_text("APRTTESK"), K::OutOfOrder},
      {"", K::MissingRequired},
      {letters_text("PRKA"), K::MissingRequired},
      {letters_text("TPRA"), K::MissingRequired},
      {letters_text("TRKA"), K::MissingRequired},
      {letters_text("TPKA"), K::MissingRequired},
      {letters_text("TPRK"), K::MissingRequired},
      {letters_text("TPRTSKA"), K::MissingRequired},
      {letters_text("TPRKAA"), K::DuplicateTerminal},
      {letters_text("TPRKKA"), K::DuplicateTerminal},
      {letters_text("TPRTESKKA"), K::DuplicateTerminal},
      {ok + "trailing words", K::TrailingGarbage},
      {"hello " + ok, K::TrailingGarbage},
      {letters_text("TPR") + "stray\n" + letters_text("KA"), K::TrailingGarbage},
      {ok + "   x", K::TrailingGarbage},
  };
  int correct = 0;
  for (std::size_t i = 0; i < malformed.size(); ++i) {
    auto r = parse_rollout(malformed[i].first, ParseMode::Strict);
    if (!r.ok() && r.error().kind == malformed[i].second) {
      ++correct;
    } else {
      o.fail("malformed case " + std::to_string(i) + " got " +
             (r.ok() ? std::string("ok") : std::string(parse_error_kind_name(r.error().kind))));
    }
  }
  if (static_cast<int>(malformed.size()) < kMinMalformed) o.fail("too few malformed cases");

  // Every cut point of a full rollout: inside a block is unbalanced, between
  // blocks a missing tail; the full text parses.
  const std::string full = letters_text("TPRTESTKA");
  std::vector<std::pair<std::size_t, std::size_t>> blocks;
  for (std::size_t pos = 0; (pos = full.find('<', pos)) != std::string::npos;) {
    const auto name = full.substr(pos + 1, full.find('>', pos) - pos - 1);
    const auto close = "</" + name + ">";
    const auto end = full.find(close, pos) + close.size();
    blocks.emplace_back(pos, end);
    pos = end;
  }
  std::size_t cuts = 0;
  for (std::size_t cut = 0; cut <= full.size(); ++cut) {
    ++cuts;
    const auto r = parse_rollout(full.substr(0, cut), ParseMode::Strict);
    if (cut >= blocks.back().second) {
      if (!r.ok()) o.fail("complete prefix at " + std::to_string(cut) + " rejected");
      continue;
    }
    const bool inside = std::any_of(blocks.begin(), blocks.end(), [&](auto b) { return cut > b.first && cut < b.second; });
    const auto want = inside ? K::UnbalancedTag : K::MissingRequired;
    if (r.ok() || r.error().kind != want) o.fail("cut " + std::to_string(cut) + " misclassified");
  }

  // render . parse round trip on golden rollouts that parse.
  std::size_t round_trips = 0;
  for (const auto& dir : golden_cases()) {
    const auto text = slurp(dir / "rollout.txt");
    auto r = parse_rollout(text, ParseMode::NonStrict);
    if (!r.ok()) continue;
    auto again = parse_rollout(render(*r), ParseMode::NonStrict);
    if (!again.ok() || again->segments.size() != r->segments.size()) {
      o.fail("round trip broke " + dir.filename().string());
      continue;
    }
    for (std::size_t i = 0; i < r->segments.size(); ++i) {
      if (again->segments[i].kind != r->segments[i].kind || again->segments[i].content != r->segments[i].content)
        o.fail("round trip changed " + dir.filename().string());
    }
    if (render(*again) != render(*r)) o.fail("render not idempotent on " + dir.filename().string());
    ++round_trips;
  }
  if (o.pass) {
    o.detail = std::to_string(correct) + " malformed classified; " + std::to_string(cuts) + " cut points; " +
               std::to_string(round_trips) + " round trips";
  }
  return o;
}

Outcome iou_metrics() {
  Outcome o;
  std::mt19937 rng(99);
  for (int i = 0; i < kIouCases; ++i) {
    const int w = 8 + static_cast<int>(rng() % 9), h = 8 + static_cast<int>(rng() % 9);
    MaskGrid a(w, h), b(w, h);
    for (auto& p : a.pixels) p = rng() % 2;
    for (auto& p : b.pixels) p = rng() % 3 == 0;
    std::size_t inter = 0, uni = 0;
    for (std::size_t k = 0; k < a.pixels.size(); ++k) {
      inter += a.pixels[k] && b.pixels[k];
      uni += a.pixels[k] || b.pixels[k];
    }
    const double expect = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    if (mask_iou(mask_encode(a), mask_encode(b)) != expect) o.fail("mask case " + std::to_string(i));

    auto box = [&] {
      const int x0 = static_cast<int>(rng() % 30), y0 = static_cast<int>(rng() % 30);
      return BoundingBox{x0, y0, x0 + 1 + static_cast<int>(rng() % 20), y0 + 1 + static_cast<int>(rng() % 20)};
    };
    const auto p = box(), g = box();
    long bi = 0, bu = 0;
    for (int y = 0; y < 60; ++y)
      for (int x = 0; x < 60; ++x) {
        const bool in_p = x >= p.x_min && x < p.x_max && y >= p.y_min && y < p.y_max;
        const bool in_g = x >= g.x_min && x < g.x_max && y >= g.y_min && y < g.y_max;
        bi += in_p && in_g;
        bu += in_p || in_g;
      }
    if (std::abs(bbox_iou(p, g) - static_cast<double>(bi) / static_cast<double>(bu)) > kBoxIouTol)
      o.fail("box case " + std::to_string(i));
  }
  // Two 2x2 boxes offset by one pixel on both axes: 1 / 7.
  if (bbox_iou({0, 0, 2, 2}, {1, 1, 3, 3}) != 1.0 / 7.0) o.fail("1/7 case");
  if (mask_iou(box_mask(4, 4, {0, 0, 2, 2}), box_mask(4, 4, {1, 1, 3, 3})) != 1.0 / 7.0) o.fail("1/7 mask case");

  // Aggregate on a constructed set: IoU 1 with union 4, IoU 0 with union 12.
  std::vector<MaskPair> pairs = {{box_mask(8, 8, {0, 0, 2, 2}), box_mask(8, 8, {0, 0, 2, 2})},
                                 {box_mask(8, 8, {0, 0, 2, 3}), box_mask(8, 8, {4, 4, 6, 7})}};
  const auto rep = aggregate(pairs);
  if (rep.giou != 0.5 || rep.j_mean != 0.5 || rep.ciou != 4.0 / 16.0) o.fail("aggregate set");
  if (o.pass) o.detail = std::to_string(kIouCases) + " mask + box cases, 1/7, aggregate exact";
  return o;
}

std::vector<bool> oracle_mask(const std::string& text) {
  std::vector<bool> out(text.size(), false);
  for (const auto& [open, close] : {std::pair<std::string, std::string>{"<dt_rep>", "</dt_rep>"},
                                    std::pair<std::string, std::string>{"<results>", "</results>"}}) {
    for (std::size_t pos = 0; (pos = text.find(open, pos)) != std::string::npos;) {
      auto end = text.find(close, pos);
      end = end == std::string::npos ? text.size() : end + close.size();
      for (auto i = pos; i < end; ++i) out[i] = true;
      pos = end;
    }
  }
  return out;
}

Outcome grpo_core() {
  Outcome o;
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 2.75);
  double worst_mean = 0, worst_std = 0;
  for (int i = 0; i < 500; ++i) {
    std::vector<double> r(2 + rng() % 15);
    for (auto& x : r) x = u(rng);
    const auto a = group_advantages(r, 0.0).values;
    double m = 0;
    for (double x : a) m += x;
    m /= static_cast<double>(a.size());
    double ss = 0;
    for (double x : a) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(a.size()));
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_std = std::max(worst_std, std::abs(sd - 1.0));
  }
  if (worst_mean >= kAdvMeanTol) o.fail("advantage mean " + std::to_string(worst_mean));
  if (worst_std >= kAdvStdTol) o.fail("advantage std off by " + std::to_string(worst_std));
  const auto flat = group_advantages({1.5, 1.5, 1.5, 1.5}).values;
  if (std::any_of(flat.begin(), flat.end(), [](double x) { return x != 0.0; })) o.fail("zero-variance group");

  std::vector<std::string> texts;
  for (const auto& dir : golden_cases()) texts.push_back(slurp(dir / "rollout.txt"));
  for (const auto& t : generate_tasks(17, 20)) texts.push_back(oracle_rollout(t));
  std::size_t checked = 0;
  for (const auto& text : texts) {
    auto seq = parse_rollout(text, ParseMode::NonStrict);
    if (!seq.ok()) seq = scan_segments(text);
    if (!seq.ok()) continue;
    const auto m = training_mask(*seq);
    std::vector<bool> got(text.size(), false);
    for (const auto& s : m.spans)
      for (auto i = s.start; i < s.end; ++i) got[i] = !s.trainable;
    if (got != oracle_mask(text)) o.fail("mask differs on fixture " + std::to_string(checked));
    ++checked;
  }
  if (o.pass) o.detail = "500 groups; mask matches oracle on " + std::to_string(checked) + " fixtures";
  return o;
}

Outcome toy_training() {
  Outcome o;
  const auto t0 = Clock::now();
  TrainConfig cfg;
  const auto a = simulate_training(cfg);
  const auto b = simulate_training(cfg);
  if (!(a.curve == b.curve)) o.fail("same seed gave different curves");
  const std::size_t n = a.curve.size(), w = 20;
  const double gain = window_mean(a.curve, n - w, w) - window_mean(a.curve, 0, w);
  const double fmt = window_mean(a.curve, n - w, w, &CurvePoint::format_rate);
  if (gain < kMinGain) o.fail("gain " + std::to_string(gain));
  if (fmt < kMinFormatRate) o.fail("format rate " + std::to_string(fmt));
  cfg.format_reward = false;
  const auto ab = simulate_training(cfg);
  const double gap = fmt - window_mean(ab.curve, n - w, w, &CurvePoint::format_rate);
  if (gap < kMinAblationGap) o.fail("ablation gap " + std::to_string(gap));
  const double s = seconds_since(t0);
  if (s >= kTrainBudgetS) o.fail("took " + std::to_string(s) + " s");
  if (o.pass) {
    std::ostringstream d;
    d << "gain " << gain << ", format rate " << fmt << ", ablation gap " << gap << ", " << s << " s";
    o.detail = d.str();
  }
  return o;
}

Outcome depth_statistics() {
  Outcome o;
  DepthMap d(2, 2);
  d.values = {1, 2, 3, 4};
  const auto s = depth_stats(box_mask(2, 2, {0, 0, 2, 2}), d);
  if (s.mean != 2.5 || s.std != std::sqrt(1.25)) o.fail("2x2 case");
  std::mt19937 rng(71);
  std::uniform_real_distribution<double> z(0.05, 80.0);
  for (int i = 0; i < kDepthCases; ++i) {
    const int w = 1 + static_cast<int>(rng() % 24), h = 1 + static_cast<int>(rng() % 24);
    DepthMap dm(w, h);
    for (auto& v : dm.values) v = z(rng);
    MaskGrid g(w, h);
    for (auto& p : g.pixels) p = rng() % 2;
    g.pixels[rng() % g.pixels.size()] = 1;
    long double sum = 0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < g.pixels.size(); ++k)
      if (g.pixels[k]) sum += dm.values[k], ++n;
    const long double mean = sum / n;
    long double ss = 0;
    for (std::size_t k = 0; k < g.pixels.size(); ++k)
      if (g.pixels[k]) ss += (dm.values[k] - mean) * (dm.values[k] - mean);
    const double sd = static_cast<double>(std::sqrt(ss / n));
    const auto got = depth_stats(mask_encode(g), dm);
    if (got.pixel_count != n || std::abs(got.mean - static_cast<double>(mean)) > kDepthRelTol * std::abs(static_cast<double>(mean)) ||
        std::abs(got.std - sd) > kDepthRelTol * std::max(sd, 1.0)) {
      o.fail("random case " + std::to_string(i));
    }
  }
  if (o.pass) o.detail = "2x2 exact; " + std::to_string(kDepthCases) + " random cases within 1e-12";
  return o;
}

Outcome service_parity() {
  Outcome o;
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.data_root = kGolden;
  ScoringServer server(cfg);
  const int port = server.start();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(30, 0);

  std::vector<std::pair<std::string, std::string>> requests;  // body, expected response
  for (const auto& dir : golden_cases()) {
    const auto name = dir.filename().string();
    const auto expected = json::parse(slurp(dir / "expected.json"));
    const json body = {{"schema", "dtr1-api/1"},
                       {"rollout_text", slurp(dir / "rollout.txt")},
                       {"ground_truth", name + "/gt"},
                       {"config", expected["config"]}};
    ScoreDeps deps;
    deps.answer_masks = std::make_shared<FileMaskStore>(kGolden);
    const auto text = slurp(dir / "rollout.txt");
    const auto lib = score_response_text(score(text, load_ground_truth(dir / "gt"), config_of(expected), deps),
                                         response_mask(text));
    auto r = cli.Post("/v1/score", body.dump(), "application/json");
    if (!r || r->status != 200 || r->body != lib) o.fail("parity broke on " + name);
    requests.emplace_back(body.dump(), lib);
  }

  std::atomic<int> mismatches{0};
  std::mutex first_mu;
  std::string first_problem;
  auto note = [&](const std::string& why) {
    ++mismatches;
    std::lock_guard lock(first_mu);
    if (first_problem.empty()) first_problem = why;
  };
  std::vector<std::thread> threads;
  for (int t = 0; t < kConcurrentReplays; ++t) {
    threads.emplace_back([&, t] {
      httplib::Client c("127.0.0.1", port);
      c.set_read_timeout(30, 0);
      for (std::size_t k = 0; k < requests.size(); ++k) {
        const auto& [body, want] = requests[(k + t) % requests.size()];
        auto r = c.Post("/v1/score", body, "application/json");
        if (!r) {
          note("transport error " + httplib::to_string(r.error()));
        } else if (r->status != 200) {
          note("status " + std::to_string(r->status) + " " + r->body);
        } else if (r->body != want) {
          note("body differs");
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  server.stop();
  if (mismatches > 0) o.fail(std::to_string(mismatches.load()) + " concurrent replies differed, first: " + first_problem);
  if (o.pass) {
    o.detail = std::to_string(requests.size()) + " bodies equal the library; " + std::to_string(kConcurrentReplays) +
               " concurrent replays byte-identical";
  }
  return o;
}

Outcome traceback_truncation() {
  Outcome o;
  static const std::regex path_re(R"((\w/\w)|(\\)|([A-Za-z]:[\\/])|(File ")|(^|\s)[.~]*/\w)");
  const std::vector<std::pair<std::string, std::string>> fixtures = {
      {"Traceback (most recent call last):\n  File \"/srv/app/main.py\", line 12, in <module>\n    x = 1/0\n"
       "ZeroDivisionError: division by zero\n",
       "ZeroDivisionError: division by zero"},
      {"Traceback (most recent call last):\n  File \"C:\\\\work\\\\a.py\", line 2\nIndexError: list index out of range",
       "IndexError: list index out of range"},
      {"Traceback (most recent call last):\n  File \"~/x.py\", line 1\n  File \"/y/z.py\", line 9\n"
       "AttributeError: 'NoneType' object has no attribute 'mask'",
       "AttributeError: 'NoneType' object has no attribute 'mask'"},
      {"KeyError: 'depth'", "KeyError: 'depth'"},
      {"ValueError: bad\n\n   \n", "ValueError: bad"},
  };
  for (const auto& [raw, want] : fixtures) {
    const auto got = truncate_error(raw);
    if (got != want) o.fail("expected \"" + want + "\" got \"" + got + "\"");
  }
  const std::vector<std::string> with_paths = {
      "Traceback:\n  File \"/a/b.py\"\nFileNotFoundError: /a/b/c.txt",
      "OSError: C:\\tmp\\x.rle",
      "error in ./tool.py",
      "FileNotFoundError: [Errno 2] No such file: 'masks/a.rle'",
  };
  for (const auto& raw : with_paths) {
    const auto got = truncate_error(raw);
    if (got.empty() || got.find('\n') != std::string::npos || std::regex_search(got, path_re))
      o.fail("leaked \"" + got + "\"");
  }
  // Failures from the executor reach results as one line.
  MockExecutor ex;
  for (const auto& code : {"1 / 0", "foo(1)", "1 +", "mean_depth(9, 0)"}) {
    auto twin = std::make_shared<DigitalTwin>();
    const auto out = execute(ExecRequest{code, twin, std::chrono::milliseconds(1000)}, ex);
    if (out.success || !out.error_line || out.error_line->find('\n') != std::string::npos ||
        std::regex_search(*out.error_line, path_re)) {
      o.fail(std::string("executor line for ") + code);
    }
  }
  if (o.pass) o.detail = std::to_string(fixtures.size() + with_paths.size()) + " tracebacks + 4 executor failures";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"golden reward corpus", golden_corpus},    {"plan DAG validation", plan_dag},
      {"rollout grammar", rollout_grammar},       {"IoU metrics", iou_metrics},
      {"group advantages and mask", grpo_core},   {"toy training", toy_training},
      {"depth statistics", depth_statistics},     {"service parity", service_parity},
      {"traceback truncation", traceback_truncation},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failed;
}
