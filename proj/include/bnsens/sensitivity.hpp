#pragma once

// Analytic derivatives of a target posterior with respect to individual
// network parameters:
//
//   dP(x_t | e) / dtheta = P(x_t | e) * (E[U | x_t, e] - E[U | e])
//
// where U = d/dtheta log P(x_s | x_parents). E[U | x_t, e] comes from the
// family posteriors of one propagation per target state; E[U | e] is their
// average under P(x_t | e), taken from one further unconditioned propagation.

#include <map>
#include <optional>
#include <set>
#include <vector>

#include <Eigen/Core>

#include "bnsens/inference.hpp"
#include "bnsens/model.hpp"

namespace bnsens {

struct Scenario {
  Evidence evidence;
  int target = 0;
};

// Throws DomainError if the target is observed or out of range.
void check_scenario(const Network& net, const Scenario& sc);

struct SensitivityReport {
  Scenario scenario;
  // P(x_t | e) for each target state.
  Eigen::VectorXd target_distribution;
  // Rows of `derivatives`; interior parameters of the requested nodes,
  // including structurally screened ones (whose rows are exactly zero).
  std::vector<ParamIndex> params;
  Eigen::MatrixXd derivatives;  // params x target states
  std::set<ParamIndex> structural_zero;
  std::set<ParamIndex> frozen;
  std::map<int, double> node_max;
  std::size_t propagation_passes = 0;

  // Row of `p` in `derivatives`, if present.
  std::optional<int> row(ParamIndex p) const;
};

// E[U_p | posterior] for every parameter of `node`, where `posterior` is the
// family table (row, state). Frozen parameters yield 0.
Eigen::VectorXd expected_u(const Network& net, int node, const Eigen::MatrixXd& posterior);

std::set<ParamIndex> screen_structural_zeros(const Network& net, const Scenario& sc);

// Every derivative of P(X_t | e) for the requested nodes (all when empty).
// With `screen`, d-separated parameters are reported as exact zeros without
// evaluating their expectations.
SensitivityReport sensitivities(const InferenceContext& ctx, const Scenario& sc,
                                const std::optional<std::vector<int>>& nodes = std::nullopt, bool screen = true);
SensitivityReport sensitivities(const Network& net, const Scenario& sc,
                                const std::optional<std::vector<int>>& nodes = std::nullopt, bool screen = true);

// Central difference of P(x_t | e) in raw parameter coordinates, each side
// evaluated by exact inference. Throws DomainError if a perturbed network is
// invalid.
double finite_diff_sensitivity(const Network& net, const Scenario& sc, ParamIndex p, int target_state, double h);

struct NodeMax {
  double value = 0.0;
  ParamIndex param;
  int target_state = 0;
};

// Largest |derivative| per node over its parameters and target states.
std::map<int, NodeMax> node_max_summary(const SensitivityReport& report);

}  // namespace bnsens
