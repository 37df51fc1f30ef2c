#pragma once

// HTTP clients for an out-of-process sandbox executor and judge. Requests
// and responses use the dtr1-exec/1 and dtr1-judge/1 records.

#include <chrono>
#include <string>

#include "dtr1/exec.hpp"
#include "dtr1/judge.hpp"

namespace dtr1 {

struct HttpEndpoint {
  std::string host;
  int port = 80;
  std::string path = "/";

  /// "http://host[:port][/path]". Throws std::invalid_argument otherwise.
  static HttpEndpoint parse(std::string_view url);
};

/// POSTs each request to the endpoint. Transport failures become failed
/// outcomes; the executor's own timeout bounds the wait.
class RemoteExecutor final : public ToolExecutor {
 public:
  explicit RemoteExecutor(std::string_view url) : endpoint_(HttpEndpoint::parse(url)) {}
  RawExecResult run(const ExecRequest& req, std::stop_token stop) const override;

 private:
  HttpEndpoint endpoint_;
};

/// Throws JudgeTransportError when the judge is unreachable or replies with
/// anything but a dtr1-judge/1 verdict.
class RemoteJudge final : public JudgeClient {
 public:
  explicit RemoteJudge(std::string_view url, std::chrono::milliseconds timeout = std::chrono::seconds(30))
      : endpoint_(HttpEndpoint::parse(url)), timeout_(timeout) {}
  JudgeVerdict judge(const JudgeRequest& req) const override;

 private:
  HttpEndpoint endpoint_;
  std::chrono::milliseconds timeout_;
};

}  // namespace dtr1
