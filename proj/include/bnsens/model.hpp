#pragma once

// Discrete Bayesian networks with per-node parameter vectors.
//
// A node's local distribution P(x_i | x_parents, theta_i) is either an
// unrestricted table (theta is a nonnegative matrix, one row per parent
// configuration, normalized row-wise on evaluation) or a binary noisy-OR
// (one inhibitor per parent plus a base inhibitor).
//
// Parent configurations are tuples of parent state indices in declared
// parent order. They map to a row index with the first parent most
// significant, so rows enumerate the tuples lexicographically.
//
// Every network exposes one flat parameter vector. Node parameters are laid
// out in declared node order; inside a table node the entry for
// (state x, row r) sits at k = r * states + x; inside a noisy-OR node k = 0 is
// the base inhibitor and k = j + 1 the inhibitor of parent position j.

#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace bnsens {

struct Variable {
  std::string id;
  std::vector<std::string> states;

  int cardinality() const { return static_cast<int>(states.size()); }
  std::optional<int> find_state(std::string_view name) const;
};

// theta(row, state); row sums need not be one.
struct TableParams {
  Eigen::MatrixXd theta;
};

// Child and parents binary with state 0 = true, state 1 = false.
//   P(true  | x) = 1 - base * prod_{j: x_j true} inhibitors[j]
//   P(false | x) =     base * prod_{j: x_j true} inhibitors[j]
struct NoisyOrParams {
  double base = 1.0;
  Eigen::VectorXd inhibitors;
};

using Parameterization = std::variant<TableParams, NoisyOrParams>;

inline bool is_table(const Parameterization& p) { return std::holds_alternative<TableParams>(p); }

// The k-th component of node's parameter vector.
struct ParamIndex {
  int node = 0;
  int k = 0;

  friend auto operator<=>(const ParamIndex&, const ParamIndex&) = default;
};

class Network {
 public:
  Network() = default;

  // Construction. Structural problems (cycles, arity mismatches) are not
  // rejected here; validate_network reports them.
  int add_variable(Variable v);
  void set_parents(int node, std::vector<int> parents);
  void set_params(int node, Parameterization p);

  int size() const { return static_cast<int>(variables_.size()); }
  const Variable& variable(int node) const { return variables_.at(node); }
  const std::vector<Variable>& variables() const { return variables_; }
  const std::vector<int>& parents(int node) const { return parents_.at(node); }
  const Parameterization& params(int node) const { return params_.at(node); }
  int cardinality(int node) const { return variables_.at(node).cardinality(); }

  std::optional<int> find(std::string_view id) const;
  // Throws LookupError naming the missing variable.
  int index_of(std::string_view id) const;
  int state_index(int node, std::string_view state) const;

  std::vector<int> children(int node) const;

  // Number of parent configurations (rows) of a node.
  int config_count(int node) const;
  int config_index(int node, std::span<const int> parent_states) const;
  std::vector<int> config_of(int node, int row) const;
  // Row selected by a full assignment of the network.
  int row_of(int node, std::span<const int> assignment) const;

  int param_count(int node) const;
  int param_offset(int node) const;
  int total_params() const;
  int flat(ParamIndex p) const { return param_offset(p.node) + p.k; }
  ParamIndex unflat(int i) const;

  double parameter(ParamIndex p) const;
  Eigen::VectorXd parameter_vector() const;
  Network with_parameter(ParamIndex p, double value) const;
  Network with_parameters(const Eigen::Ref<const Eigen::VectorXd>& theta) const;

  // Throws InvalidNetwork when the parent graph has a cycle.
  std::vector<int> topological_order() const;

 private:
  std::vector<Variable> variables_;
  std::vector<std::vector<int>> parents_;
  std::vector<Parameterization> params_;
  std::unordered_map<std::string, int> by_id_;
};

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationResult validate_network(const Network& net);
// Throws InvalidNetwork with every violation.
void require_valid(const Network& net);

// Table params for (child state, parent configuration).
ParamIndex table_param(const Network& net, int node, int state, std::span<const int> config);
ParamIndex noisy_or_base(const Network& net, int node);
ParamIndex noisy_or_inhibitor(const Network& net, int node, int parent_position);
// Human-readable label, e.g. "B[t_B | A=t_A]" or "H[inhibitor C]".
std::string describe(const Network& net, ParamIndex p);
std::vector<ParamIndex> node_parameters(const Network& net, int node);

double local_prob(const Network& net, int node, int state, std::span<const int> config);
double local_prob_row(const Network& net, int node, int state, int row);
// Conditional probability table, one row per parent configuration.
Eigen::MatrixXd local_distribution(const Network& net, int node);

// Product of local probabilities; assignment holds one state per variable.
double joint_prob(const Network& net, std::span<const int> assignment);

// A parameter on the boundary of its domain: a table entry whose normalized
// value is exactly 0 or 1, or a noisy-OR value of exactly 0 or 1.
bool is_frozen(const Network& net, ParamIndex p);

// d/dtheta_p log P(node = state | row). Throws FrozenParameter.
double u_value(const Network& net, ParamIndex p, int state, int row);

// Every table row rescaled to unit sum; noisy-OR nodes untouched.
Network scale_to_unit(const Network& net);

}  // namespace bnsens
