#include "bnsens/io.hpp"

#include <cmath>

#include "bnsens/errors.hpp"
#include "bnsens/formats.hpp"

namespace bnsens {

using nlohmann::json;

namespace {

const json& need(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw LookupError(std::string("missing field '") + key + "'");
  return j.at(key);
}

std::string need_string(const json& j, const char* key) {
  const json& v = need(j, key);
  if (!v.is_string()) throw LookupError(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

double number_or_nan(const json& j) { return j.is_number() ? j.get<double>() : std::nan(""); }

}  // namespace

json param_json(const Network& net, ParamIndex p) {
  json j;
  j["node"] = net.variable(p.node).id;
  if (is_table(net.params(p.node))) {
    const int states = net.cardinality(p.node);
    j["state"] = net.variable(p.node).states[p.k % states];
    json given = json::array();
    const auto cfg = net.config_of(p.node, p.k / states);
    for (std::size_t i = 0; i < cfg.size(); ++i) given.push_back(net.variable(net.parents(p.node)[i]).states[cfg[i]]);
    j["given"] = given;
  } else if (p.k == 0) {
    j["base"] = true;
  } else {
    j["inhibitor"] = net.variable(net.parents(p.node)[p.k - 1]).id;
  }
  return j;
}

ParamIndex param_from_json(const Network& net, const json& j) {
  const int node = net.index_of(need_string(j, "node"));
  if (is_table(net.params(node))) {
    const int state = net.state_index(node, need_string(j, "state"));
    const json& given = need(j, "given");
    const auto& pa = net.parents(node);
    if (!given.is_array() || given.size() != pa.size())
      throw LookupError("'given' for '" + net.variable(node).id + "' needs " + std::to_string(pa.size()) + " states");
    std::vector<int> cfg;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      if (!given[i].is_string()) throw LookupError("'given' entries must be state names");
      cfg.push_back(net.state_index(pa[i], given[i].get<std::string>()));
    }
    return table_param(net, node, state, cfg);
  }
  if (j.contains("base")) return noisy_or_base(net, node);
  const int parent = net.index_of(need_string(j, "inhibitor"));
  const auto& pa = net.parents(node);
  const auto it = std::find(pa.begin(), pa.end(), parent);
  if (it == pa.end())
    throw LookupError("'" + net.variable(parent).id + "' is not a parent of '" + net.variable(node).id + "'");
  return noisy_or_inhibitor(net, node, static_cast<int>(it - pa.begin()));
}

json evidence_json(const Network& net, const Evidence& e) {
  json j = json::object();
  for (auto [var, state] : e) j[net.variable(var).id] = net.variable(var).states[state];
  return j;
}

Evidence evidence_from_json(const Network& net, const json& j) {
  Evidence e;
  if (j.is_null()) return e;
  if (!j.is_object()) throw LookupError("evidence must be an object of VAR: state");
  for (const auto& [name, state] : j.items()) {
    const int var = net.index_of(name);
    if (!state.is_string()) throw LookupError("evidence for '" + name + "' must be a state name");
    e[var] = net.state_index(var, state.get<std::string>());
  }
  return e;
}

json scenario_json(const Network& net, const Scenario& sc) {
  return {{"evidence", evidence_json(net, sc.evidence)}, {"target", net.variable(sc.target).id}};
}

Scenario scenario_from_json(const Network& net, const json& j) {
  Scenario sc;
  sc.evidence = evidence_from_json(net, j.is_object() && j.contains("evidence") ? j["evidence"] : json());
  sc.target = net.index_of(need_string(j, "target"));
  check_scenario(net, sc);
  return sc;
}

json distribution_json(const Network& net, int var, const Eigen::VectorXd& p) {
  json j = json::object();
  for (int s = 0; s < p.size(); ++s) j[net.variable(var).states[s]] = p(s);
  return j;
}

Eigen::VectorXd distribution_from_json(const Network& net, int var, const json& j) {
  if (!j.is_object()) throw LookupError("distribution must be an object keyed by state");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(net.cardinality(var));
  for (const auto& [state, val] : j.items()) p(net.state_index(var, state)) = number_or_nan(val);
  return p;
}

json assessment_json(const Network& net, const Assessment& a) {
  json j = scenario_json(net, a.scenario);
  j["assessed"] = distribution_json(net, a.scenario.target, a.assessed);
  j["weight"] = a.weight;
  j["kind"] = a.kind == AssessmentKind::Local ? "local" : "holistic";
  j["label"] = a.label;
  return j;
}

Assessment assessment_from_json(const Network& net, const json& j) {
  Assessment a;
  a.scenario = scenario_from_json(net, j);
  a.assessed = distribution_from_json(net, a.scenario.target, need(j, "assessed"));
  if (j.contains("weight")) a.weight = number_or_nan(j["weight"]);
  if (j.contains("label") && j["label"].is_string()) a.label = j["label"].get<std::string>();
  if (j.contains("kind")) {
    const auto k = j["kind"].is_string() ? j["kind"].get<std::string>() : "";
    if (k == "local")
      a.kind = AssessmentKind::Local;
    else if (k != "holistic")
      throw DomainError("bad-assessment", "assessment kind must be \"holistic\" or \"local\"");
  }
  check_assessment(net, a);
  return a;
}

json sensitivity_json(const Network& net, const SensitivityReport& rep) {
  const int t = rep.scenario.target;
  json j;
  j["scenario"] = scenario_json(net, rep.scenario);
  j["target_distribution"] = distribution_json(net, t, rep.target_distribution);
  json entries = json::array();
  for (std::size_t i = 0; i < rep.params.size(); ++i) {
    const Eigen::VectorXd row = rep.derivatives.row(static_cast<Eigen::Index>(i)).transpose();
    entries.push_back({{"param", param_json(net, rep.params[i])},
                       {"label", describe(net, rep.params[i])},
                       {"derivative", distribution_json(net, t, row)}});
  }
  j["entries"] = entries;
  json zeros = json::array(), frozen = json::array();
  for (const auto& p : rep.structural_zero) zeros.push_back(param_json(net, p));
  for (const auto& p : rep.frozen) frozen.push_back(param_json(net, p));
  j["structural_zero"] = zeros;
  j["frozen"] = frozen;
  json nm = json::object();
  for (const auto& [node, v] : rep.node_max) nm[net.variable(node).id] = v;
  j["node_max"] = nm;
  j["propagation_passes"] = rep.propagation_passes;
  return j;
}

SensitivityReport sensitivity_from_json(const Network& net, const json& j) {
  SensitivityReport rep;
  rep.scenario = scenario_from_json(net, need(j, "scenario"));
  const int t = rep.scenario.target;
  rep.target_distribution = distribution_from_json(net, t, need(j, "target_distribution"));
  const json& entries = need(j, "entries");
  rep.derivatives.resize(static_cast<Eigen::Index>(entries.size()), net.cardinality(t));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    rep.params.push_back(param_from_json(net, need(entries[i], "param")));
    rep.derivatives.row(static_cast<Eigen::Index>(i)) =
        distribution_from_json(net, t, need(entries[i], "derivative")).transpose();
  }
  for (const auto& p : need(j, "structural_zero")) rep.structural_zero.insert(param_from_json(net, p));
  for (const auto& p : need(j, "frozen")) rep.frozen.insert(param_from_json(net, p));
  for (const auto& [name, v] : need(j, "node_max").items()) rep.node_max[net.index_of(name)] = number_or_nan(v);
  rep.propagation_passes = need(j, "propagation_passes").get<std::size_t>();
  return rep;
}

json summary_json(const Network& net, int target, const std::map<int, NodeMax>& summary) {
  json j = json::object();
  for (const auto& [node, m] : summary)
    j[net.variable(node).id] = {{"value", m.value},
                                {"param", param_json(net, m.param)},
                                {"label", describe(net, m.param)},
                                {"target_state", net.variable(target).states[m.target_state]}};
  return j;
}

json query_json(const Network& net, const Scenario& sc, const Eigen::VectorXd& dist) {
  return {{"scenario", scenario_json(net, sc)}, {"distribution", distribution_json(net, sc.target, dist)}};
}

json sensitivity_response_json(const Network& net, const SensitivityReport& rep, bool summary) {
  if (!summary) return sensitivity_json(net, rep);
  return {{"scenario", scenario_json(net, rep.scenario)},
          {"target_distribution", distribution_json(net, rep.scenario.target, rep.target_distribution)},
          {"summary", summary_json(net, rep.scenario.target, node_max_summary(rep))}};
}

json monte_carlo_json(const Network& net, const MonteCarloReport& mc) {
  json j = sensitivity_json(net, mc.estimate);
  const int t = mc.estimate.scenario.target;
  auto& entries = j["entries"];
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    entries[i]["standard_error"] = distribution_json(net, t, mc.standard_error.row(r).transpose());
    json undef = json::array();
    for (int s = 0; s < mc.undefined.cols(); ++s)
      if (mc.undefined(r, s)) undef.push_back(net.variable(t).states[s]);
    entries[i]["undefined"] = undef;
  }
  j["sampler"] = {{"method", to_string(mc.config.method)},
                  {"samples", mc.config.sample_count},
                  {"seed", mc.config.seed},
                  {"accepted", mc.accumulators.accepted}};
  return j;
}

json fit_result_json(const std::vector<Assessment>& assessments, const FitResult& res) {
  json j;
  j["objective_trace"] = res.objective_trace;
  j["epochs"] = res.epochs;
  j["converged"] = res.converged;
  j["best_restart"] = res.best_restart;
  j["restart_objectives"] = res.restart_objectives;
  j["final_step"] = res.final_step;
  json dist = json::array();
  for (Eigen::Index i = 0; i < res.distances.size(); ++i) {
    json d = {{"index", i}, {"distance", res.distances(i)}};
    if (static_cast<std::size_t>(i) < assessments.size()) d["label"] = assessments[i].label;
    dist.push_back(d);
  }
  j["distances"] = dist;
  j["outliers"] = res.outliers;
  Document doc;
  doc.network = res.network;
  j["network"] = document_json(doc)["network"];
  return j;
}

}  // namespace bnsens
