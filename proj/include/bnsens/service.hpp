#pragma once

// HTTP facade with per-session state for interactive elicitation.
//
//   POST   /sessions                          document -> {"session", "revision"}
//   DELETE /sessions/{id}
//   GET    /sessions/{id}/network             current document (+ "revision")
//   PATCH  /sessions/{id}/params              {"edits": [{"param", "value", "mode"}]}
//   POST   /sessions/{id}/undo
//   POST   /sessions/{id}/query               scenario -> distribution
//   POST   /sessions/{id}/sensitivities       scenario + "nodes", "summary"
//   POST   /sessions/{id}/mc-sensitivities    scenario + "method", "samples", "seed"
//   GET    /sessions/{id}/assessments
//   POST   /sessions/{id}/assessments         {"op": add|update|delete|list, ...}
//   POST   /sessions/{id}/fit                 fit config (+ "async": true -> 202 job)
//   GET    /sessions/{id}/jobs/{job}          status, result, progress (trace so far)
//   POST   /sessions/{id}/gradient-step       {"index" | "assessment", "step", "rule"}
//   POST   /sessions/{id}/snapshot            {"path"}
//
// Errors: 400 malformed body, 404 unknown session or route, 422 domain error.
// Error bodies are {"error": reason, "message": text}.

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace bnsens {

struct Response {
  int status = 200;
  std::string body;
};

class Service {
 public:
  struct Options {
    std::size_t history_cap = 64;
  };

  Service();
  explicit Service(Options opts);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response handle(const std::string& method, const std::string& path, const std::string& body);

  // Waits for background fits to finish.
  void wait_for_jobs();

 private:
  struct Session;
  std::shared_ptr<Session> find(const std::string& id);

  Options opts_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 1;
  std::mutex jobs_mu_;
  std::vector<std::thread> workers_;
};

// Routes every request on `server` to `service`.
void mount(httplib::Server& server, Service& service);

}  // namespace bnsens
