#include "bnsens/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include "bnsens/dsep.hpp"
#include "bnsens/errors.hpp"

namespace bnsens {

void check_scenario(const Network& net, const Scenario& sc) {
  if (sc.target < 0 || sc.target >= net.size()) throw LookupError("unknown target variable");
  if (sc.evidence.count(sc.target))
    throw DomainError("target-in-evidence", "target '" + net.variable(sc.target).id + "' is also an evidence variable");
}

std::optional<int> SensitivityReport::row(ParamIndex p) const {
  auto it = std::lower_bound(params.begin(), params.end(), p);
  if (it == params.end() || *it != p) return std::nullopt;
  return static_cast<int>(it - params.begin());
}

Eigen::VectorXd expected_u(const Network& net, int node, const Eigen::MatrixXd& posterior) {
  const int count = net.param_count(node);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(count);
  const auto& prm = net.params(node);
  if (const auto* t = std::get_if<TableParams>(&prm)) {
    const int states = net.cardinality(node);
    for (int k = 0; k < count; ++k) {
      const ParamIndex p{node, k};
      if (is_frozen(net, p)) continue;
      const int r = k / states, x = k % states;
      const double total = t->theta.row(r).sum();
      const double prob = t->theta(r, x) / total;
      const double here = posterior(r, x);
      const double rest = posterior.row(r).sum() - here;
      out(k) = (here > 0 ? here * (1.0 - prob) / (prob * total) : 0.0) - rest / total;
    }
    return out;
  }
  for (int k = 0; k < count; ++k) {
    const ParamIndex p{node, k};
    if (is_frozen(net, p)) continue;
    double acc = 0.0;
    for (int r = 0; r < posterior.rows(); ++r)
      for (int x = 0; x < posterior.cols(); ++x)
        if (posterior(r, x) > 0) acc += posterior(r, x) * u_value(net, p, x, r);
    out(k) = acc;
  }
  return out;
}

std::set<ParamIndex> screen_structural_zeros(const Network& net, const Scenario& sc) {
  check_scenario(net, sc);
  const int n = net.size();
  // Node n + s stands for the parameter vector of node s.
  std::vector<std::vector<int>> aug(2 * n);
  for (int s = 0; s < n; ++s) {
    aug[s] = net.parents(s);
    aug[s].push_back(n + s);
  }
  std::vector<int> observed;
  for (auto [var, state] : sc.evidence) observed.push_back(var);
  // d-connection is symmetric, so one sweep from the target covers every node.
  const auto reach = d_connected(aug, {sc.target}, observed);
  std::set<ParamIndex> out;
  for (int s = 0; s < n; ++s)
    if (!reach[n + s])
      for (int k = 0; k < net.param_count(s); ++k) out.insert({s, k});
  return out;
}

SensitivityReport sensitivities(const InferenceContext& ctx, const Scenario& sc,
                                const std::optional<std::vector<int>>& nodes, bool screen) {
  const Network& net = ctx.network();
  check_scenario(net, sc);
  std::vector<int> wanted;
  if (nodes) {
    wanted = *nodes;
    for (int v : wanted)
      if (v < 0 || v >= net.size()) throw LookupError("unknown node in sensitivity request");
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
  } else {
    for (int v = 0; v < net.size(); ++v) wanted.push_back(v);
  }

  SensitivityReport rep;
  rep.scenario = sc;
  const Calibration base = ctx.propagate(sc.evidence);
  rep.propagation_passes = 1;
  rep.target_distribution = query_marginal(ctx, base, sc.target);

  const auto screened = screen ? screen_structural_zeros(net, sc) : std::set<ParamIndex>{};
  std::vector<int> live_nodes;
  for (int v : wanted) {
    bool live = false;
    for (int k = 0; k < net.param_count(v); ++k) {
      const ParamIndex p{v, k};
      if (is_frozen(net, p)) {
        rep.frozen.insert(p);
        continue;
      }
      rep.params.push_back(p);
      if (screened.count(p))
        rep.structural_zero.insert(p);
      else
        live = true;
    }
    if (live) live_nodes.push_back(v);
  }

  const int states = net.cardinality(sc.target);
  const auto rows = static_cast<Eigen::Index>(rep.params.size());
  Eigen::MatrixXd cond_eu = Eigen::MatrixXd::Zero(rows, states);  // E[U | x_t, e]
  for (int x = 0; x < states; ++x) {
    if (!(rep.target_distribution(x) > 0)) continue;
    Evidence ev = sc.evidence;
    ev[sc.target] = x;
    const Calibration cal = ctx.propagate(ev);
    ++rep.propagation_passes;
    const auto fams = family_posteriors(ctx, cal);
    for (int v : live_nodes) {
      const Eigen::VectorXd eu = expected_u(net, v, fams[v].table);
      for (int k = 0; k < eu.size(); ++k)
        if (auto r = rep.row({v, k}); r && !rep.structural_zero.count({v, k})) cond_eu(*r, x) = eu(k);
    }
  }
  const Eigen::VectorXd uncond_eu = cond_eu * rep.target_distribution;  // E[U | e]
  rep.derivatives = (cond_eu.colwise() - uncond_eu) * rep.target_distribution.asDiagonal();
  for (const auto& p : rep.structural_zero) rep.derivatives.row(*rep.row(p)).setZero();

  for (const auto& [node, m] : node_max_summary(rep)) rep.node_max[node] = m.value;
  return rep;
}

SensitivityReport sensitivities(const Network& net, const Scenario& sc, const std::optional<std::vector<int>>& nodes,
                                bool screen) {
  return sensitivities(compile(net), sc, nodes, screen);
}

double finite_diff_sensitivity(const Network& net, const Scenario& sc, ParamIndex p, int target_state, double h) {
  check_scenario(net, sc);
  if (!(h > 0)) throw DomainError("bad-step", "finite-difference step must be positive");
  if (is_frozen(net, p)) throw FrozenParameter("parameter " + describe(net, p) + " is frozen at the boundary");
  const double v = net.parameter(p);
  auto eval = [&](double value) {
    const Network moved = net.with_parameter(p, value);
    if (!validate_network(moved).ok())
      throw DomainError("perturbation-out-of-domain",
                        "perturbing " + describe(net, p) + " by " + std::to_string(h) + " leaves its domain");
    return query_marginal(compile(moved), sc.evidence, sc.target)(target_state);
  };
  return (eval(v + h) - eval(v - h)) / (2 * h);
}

std::map<int, NodeMax> node_max_summary(const SensitivityReport& report) {
  std::map<int, NodeMax> out;
  for (std::size_t i = 0; i < report.params.size(); ++i) {
    const ParamIndex p = report.params[i];
    for (int x = 0; x < report.derivatives.cols(); ++x) {
      const double a = std::abs(report.derivatives(static_cast<Eigen::Index>(i), x));
      if (std::isnan(a)) continue;
      auto it = out.find(p.node);
      if (it == out.end())
        out.emplace(p.node, NodeMax{a, p, x});
      else if (a > it->second.value)
        it->second = NodeMax{a, p, x};
    }
  }
  return out;
}

}  // namespace bnsens
