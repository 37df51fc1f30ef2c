#include "dtr1/service.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "dtr1/remote.hpp"
#include "dtr1/wire.hpp"

namespace dtr1 {

namespace {

HttpReply error_reply(int status, const std::string& path, const std::string& message) {
  json err = {{"status", status}, {"message", message}};
  if (!path.empty()) err["path"] = path;
  return {status, json{{"schema", kApiSchema}, {"error", err}}.dump()};
}

std::optional<json> parse_body(std::string_view body, HttpReply& failure) {
  try {
    auto j = json::parse(body);
    if (!j.is_object()) {
      failure = error_reply(400, "", "request body must be a JSON object");
      return std::nullopt;
    }
    return j;
  } catch (const json::parse_error& e) {
    failure = error_reply(400, "", std::string("request body is not valid JSON: ") + e.what());
    return std::nullopt;
  }
}

double parse_weight(const std::string& text, const char* name) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument(std::string(name) + " must be a finite number, got \"" + text + "\"");
}

void apply_listen(ServiceConfig& cfg, const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("listen address must be host:port");
  cfg.host = listen.substr(0, colon);
  try {
    cfg.port = std::stoi(listen.substr(colon + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("bad port in listen address \"" + listen + "\"");
  }
  if (cfg.port < 0 || cfg.port > 65535) throw std::invalid_argument("port out of range");
}

}  // namespace

ServiceConfig ServiceConfig::load(const std::optional<std::filesystem::path>& file) {
  ServiceConfig cfg;
  std::optional<std::string> listen, registry, alpha, beta, data_root, judge_url;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw std::invalid_argument("cannot open config file " + file->string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument(std::string("config file is not valid JSON: ") + e.what());
    }
    auto get = [&](const char* key, std::optional<std::string>& out) {
      if (!j.contains(key)) return;
      if (j[key].is_string()) out = j[key].get<std::string>();
      else if (j[key].is_number()) out = j[key].dump();
      else throw std::invalid_argument(std::string("config field ") + key + " must be a string or number");
    };
    get("listen", listen);
    get("registry", registry);
    get("alpha", alpha);
    get("beta", beta);
    get("data_root", data_root);
    get("judge_url", judge_url);
  }
  auto env = [](const char* name, std::optional<std::string>& out) {
    if (const char* v = std::getenv(name); v && *v) out = v;
  };
  env("DTR1_LISTEN", listen);
  env("DTR1_REGISTRY", registry);
  env("DTR1_ALPHA", alpha);
  env("DTR1_BETA", beta);
  env("DTR1_DATA_ROOT", data_root);
  env("DTR1_JUDGE_URL", judge_url);

  if (listen) apply_listen(cfg, *listen);
  if (registry) cfg.registry = std::make_shared<const ModelRegistry>(ModelRegistry::load(*registry));
  if (alpha) cfg.defaults.alpha = parse_weight(*alpha, "alpha");
  if (beta) cfg.defaults.beta = parse_weight(*beta, "beta");
  if (data_root) cfg.data_root = *data_root;
  if (judge_url) cfg.judge = std::make_shared<const RemoteJudge>(*judge_url);
  return cfg;
}

HttpReply handle_score(const ServiceConfig& cfg, std::string_view body) {
  HttpReply failure;
  auto j = parse_body(body, failure);
  if (!j) return failure;
  try {
    const auto req = score_request_from_json(*j, cfg.data_root, cfg.defaults);
    ScoreDeps deps;
    deps.registry = cfg.registry.get();
    deps.judge = cfg.judge.get();
    deps.exec_replay = req.exec_replay;
    deps.answer_masks = std::make_shared<FileMaskStore>(cfg.data_root);
    const auto b = score(req.rollout_text, req.ground_truth, req.config, deps);
    return {200, score_response_text(b, response_mask(req.rollout_text))};
  } catch (const SchemaError& e) {
    return error_reply(400, e.path(), e.what());
  } catch (const GroundTruthFileError& e) {
    return error_reply(404, "ground_truth", e.what());
  } catch (const JudgeTransportError& e) {
    return error_reply(502, "", e.what());
  } catch (const std::invalid_argument& e) {
    return error_reply(400, "", e.what());
  }
}

HttpReply handle_validate_plan(const ServiceConfig& cfg, std::string_view body) {
  HttpReply failure;
  auto j = parse_body(body, failure);
  if (!j) return failure;
  if (!j->contains("plan_text") || !(*j)["plan_text"].is_string()) {
    return error_reply(400, "plan_text", "missing field");
  }
  std::optional<ModelRegistry> override_registry;
  if (j->contains("registry") && !(*j)["registry"].is_null()) {
    try {
      override_registry = ModelRegistry::from_text((*j)["registry"].dump());
    } catch (const SchemaError& e) {
      return error_reply(400, e.path().empty() ? "registry" : "registry." + e.path(), e.what());
    }
  }
  const auto& reg = override_registry ? *override_registry : *cfg.registry;
  return {200, dag_verdict_to_json(validate_plan_text((*j)["plan_text"].get<std::string>(), reg)).dump()};
}

HttpReply handle_mask(const ServiceConfig&, std::string_view body) {
  HttpReply failure;
  auto j = parse_body(body, failure);
  if (!j) return failure;
  if (!j->contains("rollout_text") || !(*j)["rollout_text"].is_string()) {
    return error_reply(400, "rollout_text", "missing field");
  }
  const auto text = (*j)["rollout_text"].get<std::string>();
  auto seq = parse_rollout(text, ParseMode::NonStrict);
  if (!seq) seq = scan_segments(text);
  if (!seq) return error_reply(400, "rollout_text", seq.error().describe());
  auto out = training_mask_to_json(training_mask(*seq));
  out["schema"] = kApiSchema;
  return {200, out.dump()};
}

HttpReply handle_registry(const ServiceConfig& cfg) { return {200, json::parse(cfg.registry->to_text()).dump()}; }

HttpReply handle_health(const ServiceConfig& cfg) {
  return {200, json{{"schema", kApiSchema},
                    {"status", "ok"},
                    {"version", kServiceVersion},
                    {"registry_digest", cfg.registry->digest()}}
                   .dump()};
}

ScoringServer::ScoringServer(ServiceConfig cfg) : cfg_(std::move(cfg)), server_(std::make_unique<httplib::Server>()) {
  auto& s = *server_;
  const auto threads = cfg_.threads;
  s.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  auto reply = [](httplib::Response& res, const HttpReply& r) { res.status = r.status, res.set_content(r.body, "application/json"); };
  s.Post("/v1/score", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_score(cfg_, req.body));
  });
  s.Post("/v1/validate-plan", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_validate_plan(cfg_, req.body));
  });
  s.Post("/v1/mask", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_mask(cfg_, req.body));
  });
  s.Get("/v1/registry", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, handle_registry(cfg_));
  });
  s.Get("/healthz", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, handle_health(cfg_)); });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(error_reply(500, "", what).body, "application/json");
  });
}

ScoringServer::~ScoringServer() { stop(); }

int ScoringServer::bind() {
  const int port = cfg_.port == 0 ? server_->bind_to_any_port(cfg_.host) : (server_->bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1);
  if (port < 0) throw std::runtime_error("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
  return port;
}

void ScoringServer::serve() { server_->listen_after_bind(); }

int ScoringServer::start() {
  const int port = bind();
  worker_ = std::thread([this] { serve(); });
  server_->wait_until_ready();
  return port;
}

void ScoringServer::stop() {
  if (server_) server_->stop();
  if (worker_.joinable()) worker_.join();
}

}  // namespace dtr1
