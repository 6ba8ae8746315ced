// bnsens: batch command-line front end.
//
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "bnsens/formats.hpp"
#include "bnsens/io.hpp"

namespace {

using namespace bnsens;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

void emit_json(const json& j) { std::cout << canonical_dump(j) << "\n"; }

struct Common {
  std::string file;
  std::string evidence;
  std::string target;
  std::string scenario;
  std::string format = "table";
  bool json() const { return format == "json"; }
};

void add_common(CLI::App* cmd, Common& c, bool scenario) {
  cmd->add_option("FILE", c.file, "document path, or 'dyspnea' for the bundled example")->required();
  if (scenario) {
    cmd->add_option("--evidence,-e", c.evidence, "comma-separated VAR=state list");
    cmd->add_option("--target,-t", c.target, "target variable");
    cmd->add_option("--scenario", c.scenario, "named scenario from the document");
  }
  cmd->add_option("--format,-f", c.format, "output format")->check(CLI::IsMember({"table", "json"}));
}

Scenario resolve_scenario(const Document& doc, const Common& c) {
  const Network& net = doc.network;
  if (!c.scenario.empty()) {
    for (const auto& s : doc.scenarios)
      if (s.name == c.scenario) return s.scenario;
    throw LookupError("unknown scenario '" + c.scenario + "'");
  }
  if (c.target.empty()) {
    if (c.evidence.empty() && !doc.scenarios.empty()) return doc.scenarios.front().scenario;
    throw UsageError("--target is required");
  }
  Scenario sc;
  sc.evidence = parse_evidence(net, c.evidence);
  sc.target = net.index_of(c.target);
  check_scenario(net, sc);
  return sc;
}

std::string scenario_line(const Network& net, const Scenario& sc) {
  std::string ev;
  for (auto [v, s] : sc.evidence) ev += (ev.empty() ? "" : ", ") + net.variable(v).id + "=" + net.variable(v).states[s];
  return "P(" + net.variable(sc.target).id + (ev.empty() ? "" : " | " + ev) + ")";
}

void print_distribution(const Network& net, const Scenario& sc, const Eigen::VectorXd& p) {
  std::cout << scenario_line(net, sc) << "\n";
  for (int s = 0; s < p.size(); ++s)
    std::cout << "  " << pad(net.variable(sc.target).states[s], 10) << num(p(s)) << "\n";
}

int cmd_validate(const Common& c) {
  std::ifstream in(c.file, std::ios::binary);
  std::string text;
  if (in) {
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  } else if (c.file == "dyspnea") {
    text = std::string(dyspnea_text());
  } else {
    throw DomainError("io-error", "cannot read '" + c.file + "'");
  }
  try {
    const Document doc = parse_document(text);
    if (c.json())
      emit_json({{"ok", true}, {"variables", doc.network.size()}, {"assessments", doc.assessments.size()}});
    else
      std::cout << "OK: " << doc.network.size() << " variables, " << doc.assessments.size() << " assessments\n";
    return 0;
  } catch (const ParseError& e) {
    if (c.json()) {
      json diags = json::array();
      for (const auto& d : e.diagnostics())
        diags.push_back({{"line", d.line}, {"column", d.column}, {"path", d.path}, {"message", d.message}});
      emit_json({{"ok", false}, {"violations", diags}});
    } else {
      for (const auto& d : e.diagnostics()) {
        std::cout << c.file;
        if (d.line > 0) std::cout << ":" << d.line << ":" << d.column;
        if (!d.path.empty()) std::cout << " " << d.path;
        std::cout << ": " << d.message << "\n";
      }
    }
    return 1;
  }
}

int cmd_query(const Common& c) {
  const Document doc = load_document(c.file);
  const Scenario sc = resolve_scenario(doc, c);
  const auto p = query_marginal(compile(doc.network), sc.evidence, sc.target);
  if (c.json())
    emit_json(query_json(doc.network, sc, p));
  else
    print_distribution(doc.network, sc, p);
  return 0;
}

void print_summary(const Network& net, const Scenario& sc, const std::map<int, NodeMax>& summary) {
  std::cout << "max |dP/dtheta| per node for " << scenario_line(net, sc) << "\n";
  for (const auto& [node, m] : summary)
    std::cout << "  " << pad(net.variable(node).id, 8) << pad(num(m.value), 12) << describe(net, m.param) << " -> "
              << net.variable(sc.target).states[m.target_state] << "\n";
}

void print_entries(const Network& net, const SensitivityReport& rep, const Eigen::MatrixXd* se) {
  const auto& var = net.variable(rep.scenario.target);
  std::cout << pad("parameter", 28);
  for (const auto& s : var.states) std::cout << pad("d" + s, 12) << (se ? pad("se", 12) : "");
  std::cout << "\n";
  for (std::size_t i = 0; i < rep.params.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    std::string label = describe(net, rep.params[i]);
    if (rep.structural_zero.count(rep.params[i])) label += " *";
    std::cout << pad(label, 28);
    for (int s = 0; s < rep.derivatives.cols(); ++s) {
      std::cout << pad(num(rep.derivatives(r, s)), 12);
      if (se) std::cout << pad(num((*se)(r, s)), 12);
    }
    std::cout << "\n";
  }
  if (!rep.structural_zero.empty()) std::cout << "* structurally zero for this scenario\n";
}

int cmd_sens(const Common& c, const std::string& nodes_arg, bool summary) {
  const Document doc = load_document(c.file);
  const Network& net = doc.network;
  const Scenario sc = resolve_scenario(doc, c);
  std::optional<std::vector<int>> nodes;
  if (!nodes_arg.empty()) {
    nodes.emplace();
    std::stringstream ss(nodes_arg);
    for (std::string id; std::getline(ss, id, ',');)
      if (!id.empty()) nodes->push_back(net.index_of(id));
  }
  const auto rep = sensitivities(compile(net), sc, nodes);
  if (c.json()) {
    emit_json(sensitivity_response_json(net, rep, summary));
    return 0;
  }
  print_distribution(net, sc, rep.target_distribution);
  if (summary)
    print_summary(net, sc, node_max_summary(rep));
  else
    print_entries(net, rep, nullptr);
  return 0;
}

int cmd_mc(const Common& c, const SamplerConfig& cfg) {
  const Document doc = load_document(c.file);
  const Scenario sc = resolve_scenario(doc, c);
  const auto mc = estimate_sensitivities(doc.network, sc, cfg);
  if (c.json()) {
    emit_json(monte_carlo_json(doc.network, mc));
    return 0;
  }
  std::cout << to_string(cfg.method) << ", " << cfg.sample_count << " samples, seed " << cfg.seed << ", "
            << mc.accumulators.accepted << " accepted\n";
  print_distribution(doc.network, sc, mc.estimate.target_distribution);
  print_entries(doc.network, mc.estimate, &mc.standard_error);
  return 0;
}

int cmd_fit(const Common& c, ScoringRule rule, const FitConfig& cfg, const std::string& out) {
  Document doc = load_document(c.file);
  if (doc.assessments.empty()) throw DomainError("no-assessments", "'" + c.file + "' holds no assessments to fit");
  const FitResult res = fit(doc.network, doc.assessments, rule, cfg);
  if (!out.empty()) {
    Document fitted = doc;
    fitted.network = res.network;
    std::ofstream f(out, std::ios::binary);
    if (!f) throw DomainError("io-error", "cannot write '" + out + "'");
    f << serialize_document(fitted);
  }
  if (c.json()) {
    emit_json(fit_result_json(doc.assessments, res));
    return 0;
  }
  std::cout << "rule " << to_string(rule) << ", " << res.epochs << " epochs, "
            << (res.converged ? "converged" : "not converged") << ", final step " << num(res.final_step) << "\n";
  const auto& tr = res.objective_trace;
  std::cout << "objective " << num(tr.front()) << " -> " << num(tr.back()) << "\n";
  for (std::size_t r = 0; r < res.restart_objectives.size(); ++r)
    std::cout << "  restart " << r << ": " << num(res.restart_objectives[r])
              << (static_cast<int>(r) == res.best_restart ? "  (best)" : "") << "\n";
  std::cout << pad("#", 5) << pad("distance", 12) << "label\n";
  for (Eigen::Index i = 0; i < res.distances.size(); ++i) {
    const bool flagged = std::find(res.outliers.begin(), res.outliers.end(), static_cast<std::size_t>(i)) !=
                         res.outliers.end();
    std::cout << pad(std::to_string(i), 5) << pad(num(res.distances(i)), 12) << doc.assessments[i].label
              << (flagged ? "  [outlier]" : "") << "\n";
  }
  if (!out.empty()) std::cout << "fitted network written to " << out << "\n";
  return 0;
}

int cmd_outliers(const Common& c, ScoringRule rule, double threshold) {
  const Document doc = load_document(c.file);
  const InferenceContext ctx(doc.network);
  Eigen::VectorXd d(static_cast<Eigen::Index>(doc.assessments.size()));
  for (std::size_t i = 0; i < doc.assessments.size(); ++i) {
    const auto& a = doc.assessments[i];
    try {
      d(static_cast<Eigen::Index>(i)) = score_distance(model_distribution(ctx, a), a.assessed, rule);
    } catch (const DomainError& e) {
      throw DomainError(e.reason(), "assessment #" + std::to_string(i) +
                                        (a.label.empty() ? "" : " '" + a.label + "'") + ": " + e.what());
    }
  }
  const auto flagged = flag_outliers(d, threshold);
  const double median = [&] {
    if (d.size() == 0) return 0.0;
    std::vector<double> v(d.data(), d.data() + d.size());
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
    double m = v[v.size() / 2];
    if (v.size() % 2 == 0) {
      const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2));
      m = 0.5 * (m + lo);
    }
    return m;
  }();
  if (c.json()) {
    json dist = json::array();
    for (std::size_t i = 0; i < doc.assessments.size(); ++i)
      dist.push_back({{"index", i}, {"distance", d(static_cast<Eigen::Index>(i))}, {"label", doc.assessments[i].label}});
    emit_json({{"rule", to_string(rule)},
               {"threshold", threshold},
               {"median", median},
               {"distances", dist},
               {"outliers", flagged}});
    return 0;
  }
  std::cout << "median distance " << num(median) << ", threshold " << num(threshold) << " x median\n";
  if (flagged.empty()) std::cout << "no outliers\n";
  for (auto i : flagged)
    std::cout << "  #" << i << " " << doc.assessments[i].label << "  distance "
              << num(d(static_cast<Eigen::Index>(i))) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity analysis and assessment fitting for Bayesian networks"};
  app.require_subcommand(1);

  Common c;
  std::string nodes;
  bool summary = false;
  std::string method = "lw";
  SamplerConfig mc;
  std::string rule_name = "log";
  FitConfig fc;
  std::string order = "shuffled";
  std::string out;
  double threshold = fc.outlier_factor;

  auto* validate = app.add_subcommand("validate", "check a document");
  add_common(validate, c, false);

  auto* query = app.add_subcommand("query", "posterior distribution of the target");
  add_common(query, c, true);

  auto* sens = app.add_subcommand("sens", "exact parameter sensitivities");
  add_common(sens, c, true);
  sens->add_option("--nodes", nodes, "comma-separated nodes to report");
  sens->add_flag("--summary", summary, "per-node maximum absolute sensitivity");

  auto* mcs = app.add_subcommand("mc-sens", "Monte Carlo sensitivity estimates");
  add_common(mcs, c, true);
  mcs->add_option("--method", method, "lw or reject")
      ->check(CLI::IsMember({"lw", "reject", "likelihood-weighting", "rejection"}));
  mcs->add_option("--n", mc.sample_count, "sample count")->check(CLI::PositiveNumber);
  mcs->add_option("--seed", mc.seed, "random seed");
  mcs->add_option("--threads", mc.threads, "worker threads (0 = all cores)");

  auto* fitc = app.add_subcommand("fit", "fit parameters to the document's assessments");
  add_common(fitc, c, false);
  fitc->add_option("--rule", rule_name, "log or quad")->check(CLI::IsMember({"log", "quad"}));
  fitc->add_option("--step", fc.step_size, "step size")->check(CLI::PositiveNumber);
  fitc->add_option("--epochs", fc.max_epochs, "maximum epochs")->check(CLI::NonNegativeNumber);
  fitc->add_option("--restarts", fc.restarts, "number of starts")->check(CLI::PositiveNumber);
  fitc->add_option("--seed", fc.seed, "random seed");
  fitc->add_option("--order", order, "scenario order")->check(CLI::IsMember({"shuffled", "fixed"}));
  fitc->add_option("--threshold", fc.outlier_factor, "outlier factor over the median distance");
  fitc->add_option("--out,-o", out, "write the fitted document here");

  auto* outl = app.add_subcommand("outliers", "flag assessments far from the model");
  add_common(outl, c, false);
  outl->add_option("--rule", rule_name, "log or quad")->check(CLI::IsMember({"log", "quad"}));
  outl->add_option("--threshold", threshold, "factor over the median distance")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const ScoringRule rule = parse_scoring_rule(rule_name);
    if (*validate) return cmd_validate(c);
    if (*query) return cmd_query(c);
    if (*sens) return cmd_sens(c, nodes, summary);
    if (*mcs) {
      mc.method = parse_sampling_method(method);
      return cmd_mc(c, mc);
    }
    if (*fitc) {
      fc.order = order == "fixed" ? ScenarioOrder::FixedCycle : ScenarioOrder::Shuffled;
      return cmd_fit(c, rule, fc, out);
    }
    if (*outl) return cmd_outliers(c, rule, threshold);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "error (" << e.reason() << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
