#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "dtr1/plan.hpp"

using namespace dtr1;

namespace {

// Subset search over placement orders: a graph is acyclic iff some
// permutation puts every prerequisite before its dependent.
bool brute_acyclic(const PlanGraph& g) {
  const auto n = g.vertices.size();
  auto idx = [&](const std::string& v) {
    return static_cast<std::size_t>(std::find(g.vertices.begin(), g.vertices.end(), v) - g.vertices.begin());
  };
  std::vector<unsigned> need(n, 0);
  for (const auto& e : g.edges) need[idx(e.dependent)] |= 1u << idx(e.prerequisite);
  std::vector<char> reachable(1u << n, 0);
  reachable[0] = 1;
  for (unsigned placed = 0; placed < (1u << n); ++placed) {
    if (!reachable[placed]) continue;
    for (std::size_t v = 0; v < n; ++v) {
      if (!(placed >> v & 1) && (need[v] & ~placed) == 0) reachable[placed | 1u << v] = 1;
    }
  }
  return reachable[(1u << n) - 1];
}

PlanGraph random_graph(std::mt19937& rng) {
  PlanGraph g;
  const int n = 1 + static_cast<int>(rng() % 12);
  for (int i = 0; i < n; ++i) g.add_vertex("N" + std::to_string(i));
  const double density = std::uniform_real_distribution<double>(0.02, 0.3)(rng);
  const bool forward_only = rng() % 2 == 0;
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b || (forward_only && a > b)) continue;
      if (std::uniform_real_distribution<double>(0, 1)(rng) < density) {
        g.add_edge("N" + std::to_string(a), "N" + std::to_string(b));
      }
    }
  }
  return g;
}

}  // namespace

TEST_CASE("example plan parses to four vertices and three edges") {
  auto g = parse_plan(kExamplePlanText);
  REQUIRE(g.ok());
  CHECK(g->vertices.size() == 4);
  CHECK(g->edges.size() == 3);
  CHECK(g->prerequisites_of("DepthStats") == std::vector<std::string>{"SAM2", "DepthAnything2"});
  const auto v = validate_plan(*g, ModelRegistry::defaults());
  CHECK(v.valid_format);
  CHECK(v.acyclic);
  CHECK(v.valid_dependencies);
  CHECK(v.violations.empty());
}

TEST_CASE("example plan order matches the smallest edge-respecting permutation") {
  auto g = parse_plan(kExamplePlanText);
  REQUIRE(g.ok());
  auto names = g->vertices;
  std::sort(names.begin(), names.end());
  std::vector<std::string> best;
  do {
    bool ok = true;
    for (const auto& e : g->edges) {
      const auto pi = std::find(names.begin(), names.end(), e.prerequisite);
      const auto di = std::find(names.begin(), names.end(), e.dependent);
      ok &= pi < di;
    }
    if (ok) {
      best = names;
      break;  // permutations are visited in lexicographic order
    }
  } while (std::next_permutation(names.begin(), names.end()));
  auto order = topological_order(*g);
  REQUIRE(order.ok());
  CHECK(*order == best);
  CHECK(*order == std::vector<std::string>{"DepthAnything2", "SAM2", "DepthStats", "SemanticAnalysis"});
}

TEST_CASE("format errors") {
  for (const char* bad : {"", "[]", "{", "{\"A\": \"B\"}", "{\"A\": [1]}", "{\"A\": [], \"A\": []}",
                          "{\"\": []}", "{\"A\": [\"\"]}", "{} extra"}) {
    auto g = parse_plan(bad);
    CHECK_MESSAGE(!g.ok(), bad);
    const auto v = validate_plan_text(bad, ModelRegistry::defaults());
    CHECK_FALSE(v.valid_format);
    CHECK_FALSE(v.acyclic);
    CHECK_FALSE(v.valid_dependencies);
    CHECK_FALSE(v.violations.empty());
  }
}

TEST_CASE("empty plan is format-valid but selects nothing") {
  auto g = parse_plan("{}");
  REQUIRE(g.ok());
  CHECK(g->vertices.empty());
  const auto v = validate_plan(*g, ModelRegistry::defaults());
  CHECK(v.valid_format);
  CHECK(v.acyclic);
  CHECK_FALSE(v.valid_dependencies);
  REQUIRE(v.violations.size() == 1);
  CHECK(v.violations[0] == "no nodes selected");
}

TEST_CASE("cycles") {
  const auto reg = ModelRegistry::defaults();
  CHECK_FALSE(validate_plan_text(R"({"A": ["A"]})", reg).acyclic);
  CHECK_FALSE(validate_plan_text(R"({"A": ["B"], "B": ["A"]})", reg).acyclic);
  auto g = parse_plan(R"({"A": ["B"], "B": ["A"]})");
  REQUIRE(g.ok());
  auto order = topological_order(*g);
  REQUIRE_FALSE(order.ok());
  auto cyc = order.error().cycle;
  std::sort(cyc.begin(), cyc.end());
  CHECK(cyc == std::vector<std::string>{"A", "B"});
  CHECK_FALSE(order.error().describe().empty());
}

TEST_CASE("registry membership and kind rules") {
  const auto reg = ModelRegistry::defaults();
  auto v = validate_plan_text(R"({"SAM3": []})", reg);
  CHECK(v.valid_format);
  CHECK(v.acyclic);
  CHECK_FALSE(v.valid_dependencies);
  REQUIRE_FALSE(v.violations.empty());
  CHECK(v.violations[0].find("SAM3") != std::string::npos);

  CHECK_FALSE(validate_plan_text(R"({"SAM2": [], "DepthStats": []})", reg).valid_dependencies);
  CHECK_FALSE(validate_plan_text(R"({"SAM2": ["OpenCV"], "OpenCV": []})", reg).valid_dependencies);
  CHECK(validate_plan_text(R"({"OWLv2": [], "SemanticAnalysis": ["OWLv2"]})", reg).all_ok());
}

TEST_CASE("prerequisite-only vertices are accepted with a note") {
  const auto reg = ModelRegistry::defaults();
  auto g = parse_plan(R"({"DepthStats": ["SAM2", "DepthAnything2"]})");
  REQUIRE(g.ok());
  CHECK(g->vertices.size() == 3);
  CHECK(g->implicit_vertices.size() == 2);
  auto v = validate_plan(*g, reg);
  CHECK(v.all_ok());
  CHECK(v.violations.empty());
  CHECK(v.notes.size() == 2);
}

TEST_CASE("random graphs agree with the subset oracle") {
  std::mt19937 rng(11);
  int cyclic = 0;
  for (int i = 0; i < 200; ++i) {
    const auto g = random_graph(rng);
    const bool expect = brute_acyclic(g);
    cyclic += !expect;
    auto order = topological_order(g);
    CHECK(order.ok() == expect);
    if (order.ok()) {
      for (const auto& e : g.edges) {
        auto pos = [&](const std::string& n) { return std::find(order->begin(), order->end(), n) - order->begin(); };
        CHECK(pos(e.prerequisite) < pos(e.dependent));
      }
      // Insertion order must not matter.
      PlanGraph reversed;
      for (auto it = g.vertices.rbegin(); it != g.vertices.rend(); ++it) reversed.add_vertex(*it);
      for (auto it = g.edges.rbegin(); it != g.edges.rend(); ++it) reversed.add_edge(it->prerequisite, it->dependent);
      auto again = topological_order(reversed);
      REQUIRE(again.ok());
      CHECK(*again == *order);
    }
    const auto v = validate_plan(g, ModelRegistry::defaults());
    CHECK(v.acyclic == expect);
  }
  CHECK(cyclic > 20);
  CHECK(cyclic < 180);
}

TEST_CASE("single node and plan_to_text round trip") {
  auto g = parse_plan(R"({"SAM2": []})");
  REQUIRE(g.ok());
  CHECK(*topological_order(*g) == std::vector<std::string>{"SAM2"});
  auto ex = parse_plan(kExamplePlanText);
  REQUIRE(ex.ok());
  auto again = parse_plan(plan_to_text(*ex));
  REQUIRE(again.ok());
  CHECK(again->vertices == ex->vertices);
  CHECK(again->edges == ex->edges);
}

TEST_CASE("registry file round trip") {
  const auto reg = ModelRegistry::defaults();
  CHECK(reg.entries().size() == 8);
  const auto names = {"SAM2", "DepthAnything2", "Qwen2.5-VL", "DINO-2", "OWLv2", "OpenCV"};
  for (const char* n : names) {
    REQUIRE(reg.find(n));
    CHECK(reg.find(n)->kind == NodeKind::Foundation);
  }
  CHECK(reg.find("DepthStats")->kind == NodeKind::DerivedOperator);
  CHECK(reg.find("SemanticAnalysis")->kind == NodeKind::DerivedOperator);
  CHECK(reg.find("SAM3") == nullptr);

  const auto loaded = ModelRegistry::load(DTR1_REGISTRY);
  CHECK(loaded.entries() == reg.entries());
  CHECK(loaded.digest() == reg.digest());
  CHECK(ModelRegistry::from_text(reg.to_text()).entries() == reg.entries());
  CHECK(reg.digest().size() == 16);

  CHECK_THROWS_AS(ModelRegistry({{"A"}, {"A"}}), std::invalid_argument);
  CHECK_THROWS_AS(ModelRegistry({{""}}), std::invalid_argument);
  CHECK_THROWS(ModelRegistry::from_text("{\"entries\": 3}"));
}
