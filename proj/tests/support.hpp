#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "bnsens/formats.hpp"
#include "bnsens/sensitivity.hpp"

namespace bnsens::testing {

struct RandomNetOptions {
  int min_nodes = 2;
  int max_nodes = 10;
  int min_states = 2;
  int max_states = 3;
  int max_parents = 3;
  double noisy_or_share = 0.25;  // chance a binary family becomes noisy-OR
};

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

// Random DAG over nodes 0..n-1 (edges only from lower to higher index, then
// shuffled ids) with strictly interior parameters, rescaled to unit rows.
inline Network random_network(std::mt19937_64& rng, const RandomNetOptions& o = {}) {
  const int n = pick(rng, o.min_nodes, o.max_nodes);
  Network net;
  std::vector<int> cards(n);
  for (int i = 0; i < n; ++i) {
    cards[i] = pick(rng, o.min_states, o.max_states);
    Variable v;
    v.id = "X" + std::to_string(i);
    for (int s = 0; s < cards[i]; ++s) v.states.push_back(v.id + "_" + std::to_string(s));
    net.add_variable(v);
  }
  for (int i = 0; i < n; ++i) {
    std::vector<int> cand(i);
    for (int j = 0; j < i; ++j) cand[j] = j;
    std::shuffle(cand.begin(), cand.end(), rng);
    const int k = std::min<int>(i, pick(rng, 0, o.max_parents));
    std::vector<int> pa(cand.begin(), cand.begin() + k);
    std::sort(pa.begin(), pa.end());
    net.set_parents(i, pa);
    bool binary_family = cards[i] == 2 && !pa.empty();
    for (int p : pa) binary_family = binary_family && cards[p] == 2;
    if (binary_family && uniform(rng, 0, 1) < o.noisy_or_share) {
      NoisyOrParams nor;
      nor.base = uniform(rng, 0.05, 0.95);
      nor.inhibitors.resize(static_cast<Eigen::Index>(pa.size()));
      for (auto& x : nor.inhibitors) x = uniform(rng, 0.05, 0.95);
      net.set_params(i, nor);
    } else {
      int rows = 1;
      for (int p : pa) rows *= cards[p];
      TableParams t;
      t.theta.resize(rows, cards[i]);
      for (int r = 0; r < rows; ++r)
        for (int s = 0; s < cards[i]; ++s) t.theta(r, s) = uniform(rng, 0.05, 1.0);
      net.set_params(i, t);
    }
  }
  return scale_to_unit(net);
}

// Target plus up to three evidence variables with random states.
inline Scenario random_scenario(std::mt19937_64& rng, const Network& net) {
  Scenario sc;
  sc.target = pick(rng, 0, net.size() - 1);
  std::vector<int> others;
  for (int v = 0; v < net.size(); ++v)
    if (v != sc.target) others.push_back(v);
  std::shuffle(others.begin(), others.end(), rng);
  const int k = std::min<int>(static_cast<int>(others.size()), pick(rng, 0, 3));
  for (int i = 0; i < k; ++i) sc.evidence[others[i]] = pick(rng, 0, net.cardinality(others[i]) - 1);
  return sc;
}

// Calls f on every full assignment of the network.
inline void for_each_assignment(const Network& net, const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> x(net.size(), 0);
  while (true) {
    f(x);
    int i = 0;
    for (; i < net.size(); ++i) {
      if (++x[i] < net.cardinality(i)) break;
      x[i] = 0;
    }
    if (i == net.size()) return;
  }
}

inline bool consistent(const std::vector<int>& x, const Evidence& e) {
  for (auto [v, s] : e)
    if (x[v] != s) return false;
  return true;
}

// P(target | e) by summing joint_prob over every assignment.
inline Eigen::VectorXd brute_marginal(const Network& net, const Evidence& e, int target) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(net.cardinality(target));
  for_each_assignment(net, [&](const std::vector<int>& x) {
    if (consistent(x, e)) p(x[target]) += joint_prob(net, x);
  });
  return p / p.sum();
}

// P(node, parents | e) indexed (row, state).
inline Eigen::MatrixXd brute_family(const Network& net, const Evidence& e, int node) {
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(net.config_count(node), net.cardinality(node));
  for_each_assignment(net, [&](const std::vector<int>& x) {
    if (consistent(x, e)) f(net.row_of(node, x), x[node]) += joint_prob(net, x);
  });
  return f / f.sum();
}

// Central difference of P(target | e) in one raw parameter, all target
// states at once. Small nets are re-evaluated by brute force, larger ones by
// recompiling the perturbed network.
inline Eigen::VectorXd central_difference(const Network& net, const Scenario& sc, ParamIndex p, double h) {
  double space = 1;
  for (int v = 0; v < net.size(); ++v) space *= net.cardinality(v);
  auto eval = [&](double value) -> Eigen::VectorXd {
    const Network moved = net.with_parameter(p, value);
    if (space <= 2048) return brute_marginal(moved, sc.evidence, sc.target);
    return query_marginal(InferenceContext(moved), sc.evidence, sc.target);
  };
  const double v = net.parameter(p);
  return (eval(v + h) - eval(v - h)) / (2 * h);
}

// Every non-frozen parameter of the network.
inline std::vector<ParamIndex> interior_params(const Network& net) {
  std::vector<ParamIndex> out;
  for (int v = 0; v < net.size(); ++v)
    for (const auto& p : node_parameters(net, v))
      if (!is_frozen(net, p)) out.push_back(p);
  return out;
}

inline Scenario dyspnea_scenario(const Network& net) {
  Scenario sc;
  sc.evidence = parse_evidence(net, "A=t_A,H=t_H");
  sc.target = net.index_of("B");
  return sc;
}

}  // namespace bnsens::testing
