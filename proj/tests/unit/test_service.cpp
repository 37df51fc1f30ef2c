#include <filesystem>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "doctest.h"
#include "dtr1/service.hpp"
#include "dtr1/wire.hpp"

using namespace dtr1;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kGolden = fs::path(DTR1_FIXTURES) / "golden";

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ServiceConfig golden_config() {
  ServiceConfig cfg;
  cfg.port = 0;
  cfg.data_root = kGolden;
  return cfg;
}

json request_for(const std::string& name) {
  const auto expected = json::parse(slurp(kGolden / name / "expected.json"));
  return {{"schema", "dtr1-api/1"},
          {"rollout_text", slurp(kGolden / name / "rollout.txt")},
          {"ground_truth", name + "/gt"},
          {"config", expected["config"]}};
}

json error_of(const HttpReply& r) { return json::parse(r.body)["error"]; }

struct BrokenJudge final : JudgeClient {
  JudgeVerdict judge(const JudgeRequest&) const override { throw JudgeTransportError("judge unreachable"); }
};

}  // namespace

TEST_CASE("score handler matches the library") {
  const auto cfg = golden_config();
  for (const auto& entry : fs::directory_iterator(kGolden)) {
    const auto name = entry.path().filename().string();
    INFO(name);
    const auto body = request_for(name);
    const auto reply = handle_score(cfg, body.dump());
    REQUIRE(reply.status == 200);
    const auto req = score_request_from_json(body, cfg.data_root, cfg.defaults);
    ScoreDeps deps;
    deps.answer_masks = std::make_shared<FileMaskStore>(cfg.data_root);
    const auto b = score(req.rollout_text, req.ground_truth, req.config, deps);
    CHECK(reply.body == score_response_text(b, response_mask(req.rollout_text)));
    const auto expected = json::parse(slurp(entry.path() / "expected.json"));
    CHECK(json::parse(reply.body)["breakdown"]["total"].get<double>() == expected["total"].get<double>());
  }
}

TEST_CASE("score handler errors") {
  auto cfg = golden_config();
  auto check = [&](const std::string& body, int status, const std::string& path) {
    const auto r = handle_score(cfg, body);
    CHECK(r.status == status);
    const auto e = error_of(r);
    CHECK(e["status"] == status);
    if (path.empty()) {
      CHECK_FALSE(e.contains("path"));
    } else {
      CHECK(e["path"] == path);
    }
  };
  check("not json", 400, "");
  check("[1, 2]", 400, "");
  auto body = request_for("c00-11111");
  body.erase("ground_truth");
  check(body.dump(), 400, "ground_truth");
  body = request_for("c00-11111");
  body["ground_truth"] = "../c00-11111/gt";
  check(body.dump(), 400, "ground_truth");
  body["ground_truth"] = "/etc";
  check(body.dump(), 400, "ground_truth");
  body["ground_truth"] = "nope/gt";
  check(body.dump(), 404, "ground_truth");
  body = request_for("c00-11111");
  body["config"]["exec_penalty_mode"] = "sometimes";
  check(body.dump(), 400, "config.exec_penalty_mode");
  body = request_for("c00-11111");
  body["schema"] = "v0";
  check(body.dump(), 400, "schema");
  body = request_for("c00-11111");
  body["ground_truth"] = json{{"task_type", "grounding"}, {"box", {1, 1, 0, 0}}};
  check(body.dump(), 400, "ground_truth.box");

  // c02 has two execute blocks.
  body = request_for("c02-11101");
  body["exec_replay"] = json::array({{{"success", true}, {"output", "2.0"}}});
  check(body.dump(), 400, "exec_replay");
  body["exec_replay"] = json::array({{{"success", true}, {"output", "2.0"}},
                                     {{"success", false}, {"output", ""}, {"error_line", "KeyError: 1"}}});
  const auto replayed = handle_score(cfg, body.dump());
  REQUIRE(replayed.status == 200);
  CHECK(json::parse(replayed.body)["breakdown"]["r_exec"] == -0.5);

  cfg.judge = std::make_shared<const BrokenJudge>();
  check(request_for("c02-11101").dump(), 502, "");
  // Geometric tasks never reach the judge.
  CHECK(handle_score(cfg, request_for("c00-11111").dump()).status == 200);
}

TEST_CASE("inline ground truth and config overrides") {
  const auto cfg = golden_config();
  auto body = request_for("c02-11101");
  body["ground_truth"] = json{{"task_type", "vqa"}, {"reference", "red cup"}};
  body["config"] = json{{"alpha", 2.0}, {"beta", 0.5}};
  const auto r = handle_score(cfg, body.dump());
  REQUIRE(r.status == 200);
  // 2 * (1 + 0.5) + 0.5 * (0 + 0 + 1)
  CHECK(json::parse(r.body)["breakdown"]["total"] == 3.5);
}

TEST_CASE("validate-plan, mask, registry and health handlers") {
  const auto cfg = golden_config();
  auto v = handle_validate_plan(cfg, json{{"plan_text", std::string(kExamplePlanText)}}.dump());
  REQUIRE(v.status == 200);
  auto j = json::parse(v.body);
  CHECK(j["valid_format"] == true);
  CHECK(j["acyclic"] == true);
  CHECK(j["valid_dependencies"] == true);

  j = json::parse(handle_validate_plan(cfg, json{{"plan_text", R"({"SAM2": ["DepthStats"], "DepthStats": ["SAM2"]})"}}.dump()).body);
  CHECK(j["acyclic"] == false);
  j = json::parse(handle_validate_plan(cfg, json{{"plan_text", "SAM2 -> DepthStats"}}.dump()).body);
  CHECK(j["valid_format"] == false);

  const json entry = {{"name", "X"}, {"kind", "foundation"}, {"capability", "c"}, {"input_spec", "i"}, {"output_spec", "o"}};
  const json tiny = {{"schema", "dtr1-registry/1"}, {"entries", json::array({entry})}};
  j = json::parse(handle_validate_plan(cfg, json{{"plan_text", R"({"SAM2": []})"}, {"registry", tiny}}.dump()).body);
  CHECK(j["valid_dependencies"] == false);
  CHECK(handle_validate_plan(cfg, "{}").status == 400);
  CHECK(error_of(handle_validate_plan(cfg, "{}"))["path"] == "plan_text");
  const auto bad_reg = handle_validate_plan(cfg, json{{"plan_text", "{}"}, {"registry", json{{"x", 1}}}}.dump());
  CHECK(bad_reg.status == 400);
  CHECK(error_of(bad_reg)["path"].get<std::string>().rfind("registry", 0) == 0);

  const auto rollout = slurp(kGolden / "c02-11101" / "rollout.txt");
  auto m = handle_mask(cfg, json{{"rollout_text", rollout}}.dump());
  REQUIRE(m.status == 200);
  const auto mask = training_mask_from_json(json::parse(m.body));
  CHECK(mask == *response_mask(rollout));
  CHECK(mask.spans.back().end == rollout.size());
  CHECK(handle_mask(cfg, "{}").status == 400);
  CHECK(handle_mask(cfg, json{{"rollout_text", "<think><think>"}}.dump()).status == 400);

  const auto reg = json::parse(handle_registry(cfg).body);
  CHECK(reg["entries"].size() == 8);
  const auto h = json::parse(handle_health(cfg).body);
  CHECK(h["status"] == "ok");
  CHECK(h["registry_digest"] == cfg.registry->digest());
}

TEST_CASE("server over HTTP") {
  ScoringServer server(golden_config());
  const int port = server.start();
  REQUIRE(port > 0);
  httplib::Client cli("127.0.0.1", port);
  auto h = cli.Get("/healthz");
  REQUIRE(h);
  CHECK(h->status == 200);
  const auto body = request_for("c00-11111").dump();
  auto r = cli.Post("/v1/score", body, "application/json");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->body == handle_score(golden_config(), body).body);
  r = cli.Post("/v1/score", "nope", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);
  auto missing = cli.Get("/v1/unknown");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  server.stop();
}

TEST_CASE("config loading") {
  const auto dir = fs::temp_directory_path() / "dtr1_service_cfg";
  fs::create_directories(dir);
  std::ofstream(dir / "cfg.json") << R"({"listen": "0.0.0.0:9123", "alpha": 2, "beta": 0.25, "data_root": "/srv"})";
  const auto cfg = ServiceConfig::load(dir / "cfg.json");
  CHECK(cfg.host == "0.0.0.0");
  CHECK(cfg.port == 9123);
  CHECK(cfg.defaults.alpha == 2.0);
  CHECK(cfg.defaults.beta == 0.25);
  CHECK(cfg.data_root == fs::path("/srv"));
  std::ofstream(dir / "bad.json") << R"({"listen": "nocolon"})";
  CHECK_THROWS_AS(ServiceConfig::load(dir / "bad.json"), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("wire round trips") {
  const ExecOutcome ok = ExecOutcome::ok("2.0"), bad = ExecOutcome::failure("KeyError: 3");
  CHECK(exec_outcome_from_json(exec_outcome_to_json(ok)) == ok);
  CHECK(exec_outcome_from_json(exec_outcome_to_json(bad)) == bad);
  const JudgeRequest jr{"a", "b", "c"};
  CHECK(judge_request_from_json(judge_request_to_json(jr)) == jr);
  const JudgeVerdict jv{true, "close"};
  CHECK(judge_verdict_from_json(judge_verdict_to_json(jv)) == jv);
  const auto m = *response_mask(slurp(kGolden / "c00-11111" / "rollout.txt"));
  CHECK(training_mask_from_json(training_mask_to_json(m)) == m);
  try {
    exec_outcome_from_json(json{{"success", "yes"}}, "exec_replay[1]");
    FAIL("accepted");
  } catch (const SchemaError& e) {
    CHECK(e.path().rfind("exec_replay[1]", 0) == 0);
  }
  RewardConfig base;
  const auto c = reward_config_from_json(json{{"iou_threshold", 0.7}, {"seg_aggregation", "per_frame"}}, base);
  CHECK(c.iou_threshold == 0.7);
  CHECK_THROWS_AS(reward_config_from_json(json{{"alpha", "x"}}, base), SchemaError);
}
