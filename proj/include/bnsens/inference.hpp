#pragma once

// Exact inference on a clique tree built from a min-fill triangulation of the
// moral graph, with Hugin-style collect/distribute propagation.

#include <atomic>
#include <map>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "bnsens/model.hpp"

namespace bnsens {

// variable index -> observed state index
using Evidence = std::map<int, int>;

// Discrete potential over a sorted set of variables. The first variable
// varies fastest in `values`.
struct Factor {
  std::vector<int> vars;
  std::vector<int> cards;
  Eigen::ArrayXd values;

  static Factor constant(double v);
  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
  // Sums out every variable not in `keep` (which must be a subset of vars).
  Factor marginal(const std::vector<int>& keep) const;
  // Zeroes entries inconsistent with the evidence.
  void reduce(const Evidence& e);
};

Factor operator*(const Factor& a, const Factor& b);
// a / b with 0/0 = 0; b.vars must be a subset of a.vars.
Factor divide(const Factor& a, const Factor& b);

// The local distribution of `node` as a factor over {node} + parents.
Factor family_factor(const Network& net, int node);

// P(node, parents | evidence) laid out like TableParams::theta:
// table(row, state).
struct FamilyPosterior {
  int node = 0;
  Eigen::MatrixXd table;
};

class InferenceContext;

// Clique beliefs after one propagation, each normalized to sum to one.
struct Calibration {
  std::vector<Factor> beliefs;
  double evidence_probability = 1.0;
};

class InferenceContext {
 public:
  // Throws InvalidNetwork if the network does not validate.
  explicit InferenceContext(Network net);

  const Network& network() const { return net_; }
  const std::vector<std::vector<int>>& cliques() const { return cliques_; }
  // Undirected tree edges between clique indices.
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  int family_clique(int node) const { return family_clique_.at(node); }
  int home_clique(int node) const { return home_clique_.at(node); }

  // Runs one collect/distribute pass. Throws ZeroProbabilityEvidence.
  Calibration propagate(const Evidence& e) const;

  // Number of propagate() calls made on this context (and its copies).
  std::size_t propagation_count() const { return counter_->load(); }

 private:
  Network net_;
  std::vector<std::vector<int>> cliques_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<int> family_clique_;
  std::vector<int> home_clique_;  // smallest clique holding a variable
  std::vector<Factor> initial_;   // product of assigned family factors
  // Rooted traversal: parent_[c] is -1 for the root; order_ lists cliques
  // root-first.
  std::vector<int> parent_;
  std::vector<int> order_;
  std::shared_ptr<std::atomic<std::size_t>> counter_ = std::make_shared<std::atomic<std::size_t>>(0);
};

InferenceContext compile(const Network& net);

// Exact P(target | e). Throws DomainError if the target is observed,
// ZeroProbabilityEvidence if P(e) = 0.
Eigen::VectorXd query_marginal(const InferenceContext& ctx, const Evidence& e, int target);
Eigen::VectorXd query_marginal(const InferenceContext& ctx, const Calibration& cal, int target);

std::vector<FamilyPosterior> family_posteriors(const InferenceContext& ctx, const Evidence& e);
std::vector<FamilyPosterior> family_posteriors(const InferenceContext& ctx, const Calibration& cal);

// Brute-force marginal by summing the joint over every consistent assignment.
// Limited to 2^24 joint configurations.
Eigen::VectorXd enumerate_oracle(const Network& net, const Evidence& e, int target);

// Resolves "A=t_A,H=t_H" style text against a network.
Evidence parse_evidence(const Network& net, const std::string& text);

}  // namespace bnsens
