#pragma once

// Stateless scoring service. Handlers are plain functions so they can be
// exercised without a socket; ScoringServer binds them to HTTP routes:
//
//   POST /v1/score          dtr1-api/1 score request -> breakdown + mask
//   POST /v1/validate-plan  {"plan_text", "registry"?} -> DAG verdict
//   POST /v1/mask           {"rollout_text"} -> training mask
//   GET  /v1/registry       configured registry
//   GET  /healthz           version and registry digest

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "dtr1/judge.hpp"
#include "dtr1/plan.hpp"
#include "dtr1/reward.hpp"

namespace httplib {
class Server;
}

namespace dtr1 {

inline constexpr std::string_view kServiceVersion = "1.0.0";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::shared_ptr<const ModelRegistry> registry = std::make_shared<const ModelRegistry>(ModelRegistry::defaults());
  RewardConfig defaults;
  std::filesystem::path data_root = ".";
  std::shared_ptr<const JudgeClient> judge = std::make_shared<const MockJudge>();
  std::size_t threads = 16;

  /// Optional JSON file {"listen", "registry", "alpha", "beta", "data_root",
  /// "judge_url"}, then the environment: DTR1_LISTEN (host:port),
  /// DTR1_REGISTRY, DTR1_ALPHA, DTR1_BETA, DTR1_DATA_ROOT, DTR1_JUDGE_URL.
  /// Throws std::invalid_argument on bad values.
  static ServiceConfig load(const std::optional<std::filesystem::path>& file = std::nullopt);
};

struct HttpReply {
  int status = 200;
  std::string body;
};

HttpReply handle_score(const ServiceConfig& cfg, std::string_view body);
HttpReply handle_validate_plan(const ServiceConfig& cfg, std::string_view body);
HttpReply handle_mask(const ServiceConfig& cfg, std::string_view body);
HttpReply handle_registry(const ServiceConfig& cfg);
HttpReply handle_health(const ServiceConfig& cfg);

class ScoringServer {
 public:
  explicit ScoringServer(ServiceConfig cfg);
  ~ScoringServer();
  ScoringServer(const ScoringServer&) = delete;
  ScoringServer& operator=(const ScoringServer&) = delete;

  /// Binds cfg.host:cfg.port (port 0 picks a free one) and returns the port.
  /// Throws std::runtime_error when binding fails.
  int bind();
  /// Serves until stop(); call after bind().
  void serve();
  /// bind() and serve() on a background thread; returns the bound port.
  int start();
  void stop();

 private:
  ServiceConfig cfg_;
  std::unique_ptr<httplib::Server> server_;
  std::thread worker_;
};

}  // namespace dtr1
