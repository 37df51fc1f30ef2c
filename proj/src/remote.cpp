#include "dtr1/remote.hpp"

#include <regex>

#include <httplib.h>

#include "dtr1/wire.hpp"

namespace dtr1 {

HttpEndpoint HttpEndpoint::parse(std::string_view url) {
  static const std::regex re(R"(^http://([A-Za-z0-9.\-]+|\[[0-9A-Fa-f:]+\])(?::([0-9]{1,5}))?(/[^\s]*)?$)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(url.begin(), url.end(), m, re)) {
    throw std::invalid_argument("unsupported endpoint URL \"" + std::string(url) + "\" (expected http://host[:port]/path)");
  }
  HttpEndpoint e;
  e.host = m[1].str();
  if (m[2].matched) {
    e.port = std::stoi(m[2].str());
    if (e.port < 1 || e.port > 65535) throw std::invalid_argument("port out of range in \"" + std::string(url) + "\"");
  }
  if (m[3].matched) e.path = m[3].str();
  return e;
}

RawExecResult RemoteExecutor::run(const ExecRequest& req, std::stop_token) const {
  httplib::Client client(endpoint_.host, endpoint_.port);
  client.set_connection_timeout(req.timeout);
  client.set_read_timeout(req.timeout);
  auto res = client.Post(endpoint_.path, exec_request_to_json(req).dump(), "application/json");
  if (!res) return {false, "", "ConnectionError: executor unreachable (" + httplib::to_string(res.error()) + ")"};
  if (res->status != 200) return {false, "", "ConnectionError: executor returned status " + std::to_string(res->status)};
  try {
    const auto outcome = exec_outcome_from_json(json::parse(res->body));
    return {outcome.success, outcome.output, outcome.error_line.value_or("")};
  } catch (const std::exception& e) {
    return {false, "", std::string("ProtocolError: ") + e.what()};
  }
}

JudgeVerdict RemoteJudge::judge(const JudgeRequest& req) const {
  httplib::Client client(endpoint_.host, endpoint_.port);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  auto res = client.Post(endpoint_.path, judge_request_to_json(req).dump(), "application/json");
  if (!res) throw JudgeTransportError("judge unreachable: " + httplib::to_string(res.error()));
  if (res->status != 200) throw JudgeTransportError("judge returned status " + std::to_string(res->status));
  try {
    return judge_verdict_from_json(json::parse(res->body));
  } catch (const std::exception& e) {
    throw JudgeTransportError(std::string("malformed judge reply: ") + e.what());
  }
}

}  // namespace dtr1
