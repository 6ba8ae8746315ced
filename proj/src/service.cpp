#include "bnsens/service.hpp"

#include <deque>
#include <fstream>
#include <regex>
#include <shared_mutex>

#include "bnsens/formats.hpp"
#include "bnsens/io.hpp"
#include "httplib.h"

namespace bnsens {

using nlohmann::json;

namespace {

struct BadRequest : Error {
  using Error::Error;
};
struct NotFound : Error {
  using Error::Error;
};

std::string dump(const json& j) { return canonical_dump(j) + "\n"; }

Response error_response(int status, const std::string& reason, const std::string& message) {
  return {status, dump({{"error", reason}, {"message", message}})};
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw BadRequest(std::string("malformed JSON body: ") + e.what());
  }
}

FitConfig fit_config_from_json(const json& j) {
  FitConfig cfg;
  cfg.step_size = j.value("step", cfg.step_size);
  cfg.max_epochs = j.value("epochs", cfg.max_epochs);
  cfg.restarts = j.value("restarts", cfg.restarts);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.convergence_tol = j.value("tol", cfg.convergence_tol);
  cfg.parameter_floor = j.value("floor", cfg.parameter_floor);
  cfg.outlier_factor = j.value("threshold", cfg.outlier_factor);
  cfg.set_aside_outliers = j.value("set_aside_outliers", cfg.set_aside_outliers);
  const std::string order = j.value("order", std::string("shuffled"));
  if (order == "fixed" || order == "fixed-cycle")
    cfg.order = ScenarioOrder::FixedCycle;
  else if (order != "shuffled")
    throw BadRequest("order must be \"fixed\" or \"shuffled\"");
  return cfg;
}

}  // namespace

struct Service::Session {
  struct Job {
    std::string status = "running";
    json result;
    json progress;  // latest restart and its objective trace while running
  };

  std::shared_mutex mu;  // readers: queries; writers: mutations
  Document doc;
  std::uint64_t revision = 0;
  std::uint64_t next_revision = 1;
  std::uint64_t generation = 0;  // bumps on every change, including undo
  std::deque<std::pair<Document, std::uint64_t>> history;

  std::mutex cache_mu;
  std::shared_ptr<const InferenceContext> ctx;
  std::uint64_t ctx_generation = ~0ULL;

  std::mutex jobs_mu;
  std::map<std::string, Job> jobs;
  std::uint64_t next_job = 1;

  // Caller holds `mu` (shared or exclusive).
  std::shared_ptr<const InferenceContext> context() {
    std::lock_guard lk(cache_mu);
    if (!ctx || ctx_generation != generation) {
      ctx = std::make_shared<const InferenceContext>(doc.network);
      ctx_generation = generation;
    }
    return ctx;
  }

  // Caller holds `mu` exclusively.
  void commit(Document next, std::size_t cap) {
    history.emplace_back(std::move(doc), revision);
    while (history.size() > cap) history.pop_front();
    doc = std::move(next);
    revision = next_revision++;
    ++generation;
  }
};

Service::Service() : Service(Options{}) {}
Service::Service(Options opts) : opts_(opts) {}

Service::~Service() { wait_for_jobs(); }

void Service::wait_for_jobs() {
  std::vector<std::thread> workers;
  {
    std::lock_guard lk(jobs_mu_);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
}

std::shared_ptr<Service::Session> Service::find(const std::string& id) {
  std::lock_guard lk(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFound("unknown session '" + id + "'");
  return it->second;
}

Response Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  static const std::regex session_re(R"(^/sessions/([^/]+)(?:/([a-z-]+))?(?:/([^/]+))?/?$)");
  try {
    if (path == "/sessions" || path == "/sessions/") {
      if (method != "POST") throw NotFound("no route " + method + " " + path);
      const json j = parse_body(body);
      Document doc = document_from_json(j);
      auto s = std::make_shared<Session>();
      s->doc = std::move(doc);
      std::string id;
      {
        std::lock_guard lk(mu_);
        id = "s" + std::to_string(next_session_++);
        sessions_[id] = s;
      }
      return {201, dump({{"session", id}, {"revision", 0}})};
    }

    std::smatch m;
    if (!std::regex_match(path, m, session_re)) throw NotFound("no route " + method + " " + path);
    const std::string id = m[1], action = m[2], extra = m[3];

    if (action.empty() && method == "DELETE") {
      std::lock_guard lk(mu_);
      if (!sessions_.erase(id)) throw NotFound("unknown session '" + id + "'");
      return {200, dump({{"deleted", id}})};
    }
    auto s = find(id);

    if (action == "network" && method == "GET") {
      std::shared_lock lk(s->mu);
      json j = document_json(s->doc);
      j["revision"] = s->revision;
      return {200, dump(j)};
    }

    if (action == "query" && method == "POST") {
      const json j = parse_body(body);
      std::shared_lock lk(s->mu);
      const Network& net = s->doc.network;
      const Scenario sc = scenario_from_json(net, j);
      const auto dist = query_marginal(*s->context(), sc.evidence, sc.target);
      return {200, dump(query_json(net, sc, dist))};
    }

    if (action == "sensitivities" && method == "POST") {
      const json j = parse_body(body);
      std::shared_lock lk(s->mu);
      const Network& net = s->doc.network;
      const Scenario sc = scenario_from_json(net, j);
      std::optional<std::vector<int>> nodes;
      if (j.contains("nodes")) {
        nodes.emplace();
        for (const auto& n : j["nodes"]) nodes->push_back(net.index_of(n.get<std::string>()));
      }
      const auto rep = sensitivities(*s->context(), sc, nodes);
      return {200, dump(sensitivity_response_json(net, rep, j.value("summary", false)))};
    }

    if (action == "mc-sensitivities" && method == "POST") {
      const json j = parse_body(body);
      std::shared_lock lk(s->mu);
      const Network& net = s->doc.network;
      const Scenario sc = scenario_from_json(net, j);
      SamplerConfig cfg;
      cfg.method = parse_sampling_method(j.value("method", std::string("lw")));
      cfg.sample_count = j.value("samples", cfg.sample_count);
      cfg.seed = j.value("seed", cfg.seed);
      return {200, dump(monte_carlo_json(net, estimate_sensitivities(net, sc, cfg)))};
    }

    if (action == "params" && method == "PATCH") {
      const json j = parse_body(body);
      const json& edits = j.is_array() ? j : j.value("edits", json::array());
      if (!edits.is_array()) throw BadRequest("expected a list of edits");
      std::unique_lock lk(s->mu);
      Network net = s->doc.network;
      for (const auto& e : edits) {
        if (!e.is_object() || !e.contains("param") || !e.contains("value") || !e["value"].is_number())
          throw BadRequest("each edit needs \"param\" and a numeric \"value\"");
        const ParamIndex p = param_from_json(net, e["param"]);
        if (is_frozen(net, p)) throw FrozenParameter("frozen parameter " + describe(net, p) + " cannot be edited");
        const double v = e["value"].get<double>();
        const std::string mode = e.value("mode", std::string("probability"));
        if (const auto* t = std::get_if<TableParams>(&net.params(p.node)); t && mode == "probability") {
          if (!(v >= 0 && v <= 1)) throw DomainError("invalid-network", "probability must lie in [0,1]");
          const int states = net.cardinality(p.node);
          const int row = p.k / states, col = p.k % states;
          TableParams next = *t;
          const double total = next.theta.row(row).sum();
          const double others = total - next.theta(row, col);
          next.theta.row(row) *= (1.0 - v) / others;
          next.theta(row, col) = v;
          net.set_params(p.node, next);
        } else if (mode == "probability" || mode == "raw") {
          net = net.with_parameter(p, v);
        } else {
          throw BadRequest("mode must be \"probability\" or \"raw\"");
        }
      }
      require_valid(net);
      Document next = s->doc;
      next.network = scale_to_unit(net);
      s->commit(std::move(next), opts_.history_cap);
      return {200, dump({{"revision", s->revision}})};
    }

    if (action == "undo" && method == "POST") {
      std::unique_lock lk(s->mu);
      if (s->history.empty()) throw DomainError("nothing-to-undo", "no earlier revision to restore");
      auto [doc, rev] = std::move(s->history.back());
      s->history.pop_back();
      s->doc = std::move(doc);
      s->revision = rev;
      ++s->generation;
      return {200, dump({{"revision", s->revision}})};
    }

    if (action == "assessments" && (method == "GET" || method == "POST")) {
      const json j = method == "POST" ? parse_body(body) : json::object();
      const std::string op = j.value("op", std::string("list"));
      auto listing = [&] {
        json out = json::array();
        const Network& net = s->doc.network;
        const auto ctx = s->context();
        for (const auto& a : s->doc.assessments) {
          json aj = assessment_json(net, a);
          try {
            const auto p = model_distribution(*ctx, a);
            aj["model"] = distribution_json(net, a.scenario.target, p);
          } catch (const DomainError& e) {
            aj["model_error"] = e.reason();
          }
          out.push_back(aj);
        }
        return json{{"revision", s->revision}, {"assessments", out}};
      };
      if (op == "list") {
        std::shared_lock lk(s->mu);
        return {200, dump(listing())};
      }
      std::unique_lock lk(s->mu);
      Document next = s->doc;
      auto index = [&] {
        if (!j.contains("index") || !j["index"].is_number_unsigned()) throw BadRequest("\"index\" required");
        const auto i = j["index"].get<std::size_t>();
        if (i >= next.assessments.size()) throw NotFound("no assessment #" + std::to_string(i));
        return i;
      };
      if (op == "add") {
        if (!j.contains("assessment")) throw BadRequest("\"assessment\" required");
        next.assessments.push_back(assessment_from_json(next.network, j["assessment"]));
      } else if (op == "update") {
        const auto i = index();
        if (!j.contains("assessment")) throw BadRequest("\"assessment\" required");
        next.assessments[i] = assessment_from_json(next.network, j["assessment"]);
      } else if (op == "delete") {
        next.assessments.erase(next.assessments.begin() + static_cast<std::ptrdiff_t>(index()));
      } else {
        throw BadRequest("op must be add, update, delete or list");
      }
      s->commit(std::move(next), opts_.history_cap);
      return {200, dump(listing())};
    }

    if (action == "fit" && method == "POST") {
      const json j = parse_body(body);
      const ScoringRule rule = parse_scoring_rule(j.value("rule", std::string("log")));
      FitConfig cfg = fit_config_from_json(j);
      if (j.value("async", false)) {
        Document start;
        std::uint64_t start_rev;
        {
          std::shared_lock lk(s->mu);
          start = s->doc;
          start_rev = s->revision;
        }
        std::string job;
        {
          std::lock_guard lk(s->jobs_mu);
          job = "j" + std::to_string(s->next_job++);
          s->jobs[job] = {};
        }
        const std::size_t cap = opts_.history_cap;
        std::lock_guard lk(jobs_mu_);
        workers_.emplace_back([s, job, start = std::move(start), start_rev, rule, cfg, cap]() mutable {
          cfg.on_epoch = [&](int restart, const std::vector<double>& trace) {
            std::lock_guard jl(s->jobs_mu);
            s->jobs[job].progress = {{"restart", restart}, {"epoch", trace.size() - 1}, {"objective_trace", trace}};
          };
          Session::Job result;
          try {
            const FitResult res = fit(start.network, start.assessments, rule, cfg);
            result.result = fit_result_json(start.assessments, res);
            std::unique_lock lk(s->mu);
            const bool apply = s->revision == start_rev;
            if (apply) {
              Document next = s->doc;
              next.network = res.network;
              s->commit(std::move(next), cap);
            }
            result.result["applied"] = apply;
            result.result["revision"] = s->revision;
            result.status = "done";
          } catch (const DomainError& e) {
            result.status = "failed";
            result.result = {{"error", e.reason()}, {"message", e.what()}};
          } catch (const std::exception& e) {
            result.status = "failed";
            result.result = {{"error", "internal"}, {"message", e.what()}};
          }
          std::lock_guard jl(s->jobs_mu);
          result.progress = std::move(s->jobs[job].progress);
          s->jobs[job] = std::move(result);
        });
        return {202, dump({{"job", job}, {"status", "running"}})};
      }
      std::unique_lock lk(s->mu);
      const FitResult res = fit(s->doc.network, s->doc.assessments, rule, cfg);
      json out = fit_result_json(s->doc.assessments, res);
      Document next = s->doc;
      next.network = res.network;
      s->commit(std::move(next), opts_.history_cap);
      out["revision"] = s->revision;
      return {200, dump(out)};
    }

    if (action == "jobs" && method == "GET" && !extra.empty()) {
      std::lock_guard lk(s->jobs_mu);
      auto it = s->jobs.find(extra);
      if (it == s->jobs.end()) throw NotFound("unknown job '" + extra + "'");
      return {200, dump({{"job", extra},
                         {"status", it->second.status},
                         {"result", it->second.result},
                         {"progress", it->second.progress}})};
    }

    if (action == "gradient-step" && method == "POST") {
      const json j = parse_body(body);
      const ScoringRule rule = parse_scoring_rule(j.value("rule", std::string("log")));
      if (!j.contains("step") || !j["step"].is_number()) throw BadRequest("numeric \"step\" required");
      const double step = j["step"].get<double>();
      const double floor = j.value("floor", FitConfig{}.parameter_floor);
      std::unique_lock lk(s->mu);
      Assessment a;
      if (j.contains("assessment")) {
        a = assessment_from_json(s->doc.network, j["assessment"]);
      } else if (j.contains("index") && j["index"].is_number_unsigned()) {
        const auto i = j["index"].get<std::size_t>();
        if (i >= s->doc.assessments.size()) throw NotFound("no assessment #" + std::to_string(i));
        a = s->doc.assessments[i];
      } else {
        throw BadRequest("\"assessment\" or \"index\" required");
      }
      const auto ctx = s->context();
      const Eigen::VectorXd g = distance_gradient(*ctx, a, rule);
      Document next = s->doc;
      next.network = apply_update(s->doc.network, -step * a.weight * g, floor);
      const InferenceContext after(next.network);
      const Eigen::VectorXd dist = model_distribution(after, a);
      const double d = score_distance(dist, a.assessed, rule);
      s->commit(std::move(next), opts_.history_cap);
      json out = query_json(s->doc.network, a.scenario, dist);
      out["distance"] = d;
      out["revision"] = s->revision;
      return {200, dump(out)};
    }

    if (action == "snapshot" && method == "POST") {
      const json j = parse_body(body);
      if (!j.contains("path") || !j["path"].is_string()) throw BadRequest("\"path\" required");
      std::shared_lock lk(s->mu);
      std::ofstream out(j["path"].get<std::string>(), std::ios::binary);
      if (!out) throw DomainError("io-error", "cannot write '" + j["path"].get<std::string>() + "'");
      out << serialize_document(s->doc);
      return {200, dump({{"path", j["path"]}, {"revision", s->revision}})};
    }

    throw NotFound("no route " + method + " " + path);
  } catch (const BadRequest& e) {
    return error_response(400, "bad-request", e.what());
  } catch (const json::exception& e) {
    return error_response(400, "bad-request", e.what());
  } catch (const NotFound& e) {
    return error_response(404, "not-found", e.what());
  } catch (const DomainError& e) {
    return error_response(422, e.reason(), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

void mount(httplib::Server& server, Service& service) {
  auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    const Response r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.Get(".*", forward);
  server.Post(".*", forward);
  server.Patch(".*", forward);
  server.Delete(".*", forward);
}

}  // namespace bnsens
