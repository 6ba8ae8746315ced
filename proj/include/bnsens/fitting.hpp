#pragma once

// Fitting network parameters to directly assessed target distributions.
//
// The distance between a model distribution P and an assessment P* is
//   d(P, P*) = sum_t h(P_t, P*_t) P*_t
// with
//   logarithmic: h = log P* - log P          (d is the KL divergence)
//   quadratic:   h = P*(1 - P*) + (P - P*)^2
// and the gradient with respect to a parameter is
//   sum_t dh/dP(P_t, P*_t) * dP_t/dtheta * P*_t.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bnsens/errors.hpp"
#include "bnsens/sensitivity.hpp"

namespace bnsens {

enum class ScoringRule { Logarithmic, Quadratic };

std::string to_string(ScoringRule r);
// "log" | "logarithmic" | "quad" | "quadratic"
ScoringRule parse_scoring_rule(const std::string& s);

template <typename Scalar>
Scalar score_h(ScoringRule rule, Scalar p, Scalar p_star) {
  using std::log;
  if (rule == ScoringRule::Logarithmic) return log(p_star) - log(p);
  return p_star * (Scalar(1) - p_star) + (p - p_star) * (p - p_star);
}

// dh/dP
template <typename Scalar>
Scalar score_dh(ScoringRule rule, Scalar p, Scalar p_star) {
  if (rule == ScoringRule::Logarithmic) return Scalar(-1) / p;
  return Scalar(2) * (p - p_star);
}

// Terms with P*_t = 0 contribute nothing. Throws DomainError when the
// logarithmic rule meets P_t = 0 < P*_t.
template <typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar score_distance(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& p_star,
                                         ScoringRule rule) {
  using Scalar = typename DerivedP::Scalar;
  if (p.size() != p_star.size()) throw DomainError("size-mismatch", "distributions have different sizes");
  Scalar d(0);
  for (Eigen::Index t = 0; t < p.size(); ++t) {
    const Scalar q = p_star(t);
    if (q == Scalar(0)) continue;
    if (rule == ScoringRule::Logarithmic && !(p(t) > Scalar(0)))
      throw DomainError("support-violation", "model assigns zero probability where the assessment does not");
    d += score_h(rule, Scalar(p(t)), q) * q;
  }
  return d;
}

enum class AssessmentKind { Holistic, Local };

struct Assessment {
  Scenario scenario;
  Eigen::VectorXd assessed;  // P*(x_t | e)
  double weight = 1.0;
  AssessmentKind kind = AssessmentKind::Holistic;
  std::string label;
};

// Throws DomainError describing the first problem.
void check_assessment(const Network& net, const Assessment& a);

// A judged local conditional distribution of `node` given a parent
// configuration, expressed as a scenario.
Assessment local_assessment(const Network& net, int node, const std::vector<int>& config, Eigen::VectorXd assessed,
                            double weight = 1.0);

// Model distribution P(x_t | e) for an assessment's scenario.
Eigen::VectorXd model_distribution(const InferenceContext& ctx, const Assessment& a);

// Gradient over the flat parameter vector via per-state sensitivities.
// Frozen entries are zero; with `screen`, d-separated parameters are skipped.
Eigen::VectorXd distance_gradient(const InferenceContext& ctx, const Assessment& a, ScoringRule rule,
                                  bool screen = true);

// Logarithmic rule only: E[U | e] - E_Q[U | e], with Q the model reweighted
// so that the target follows the assessment.
Eigen::VectorXd log_gradient_by_expectations(const InferenceContext& ctx, const Assessment& a);

struct Objective {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::VectorXd distances;  // unweighted, one per assessment
};

Objective aggregate_objective(const Network& net, const std::vector<Assessment>& assessments, ScoringRule rule,
                              bool screen = true);

// Adds `delta` to every unfrozen parameter, then clamps tables to >= floor
// (rows rescaled to unit sum) and noisy-OR values to [floor, 1 - floor].
Network apply_update(const Network& net, const Eigen::VectorXd& delta, double floor);

enum class ScenarioOrder { FixedCycle, Shuffled };

struct FitConfig {
  double step_size = 0.05;
  int max_epochs = 500;
  // Objective change between epochs, relative once the objective exceeds 1.
  double convergence_tol = 1e-10;
  int restarts = 1;
  ScenarioOrder order = ScenarioOrder::Shuffled;
  std::uint64_t seed = 0;
  double parameter_floor = 1e-6;
  // When an epoch raises the objective, undo it and halve the step.
  bool halve_on_increase = true;
  bool screen = true;
  // Relative jitter of the starting values of restarts after the first.
  double restart_jitter = 0.2;
  // Outlier: final distance > factor * median and > min_distance.
  double outlier_factor = 3.0;
  double outlier_min_distance = 1e-3;
  // Set aside the worst outlier and refit from the start, repeatedly, until
  // none remain; set-aside assessments stay in `outliers`.
  bool set_aside_outliers = false;
  // Called after every accepted epoch with the restart index and the trace so far.
  std::function<void(int restart, const std::vector<double>& trace)> on_epoch;
};

struct FitResult {
  Network network;
  std::vector<double> objective_trace;  // epoch 0 is the starting objective
  Eigen::VectorXd distances;            // per assessment, final network
  std::vector<std::size_t> outliers;
  int best_restart = 0;
  std::vector<double> restart_objectives;
  int epochs = 0;
  double final_step = 0.0;
  bool converged = false;
};

class FitDiverged : public DomainError {
 public:
  FitDiverged(int epoch, std::size_t assessment)
      : DomainError("fit-diverged", "objective became non-finite at epoch " + std::to_string(epoch) +
                                        " on assessment #" + std::to_string(assessment)),
        epoch_(epoch),
        assessment_(assessment) {}
  int epoch() const { return epoch_; }
  std::size_t assessment() const { return assessment_; }

 private:
  int epoch_;
  std::size_t assessment_;
};

FitResult fit(const Network& net, const std::vector<Assessment>& assessments, ScoringRule rule, const FitConfig& cfg);

// Indices whose distance exceeds factor * median and min_distance.
std::vector<std::size_t> flag_outliers(const Eigen::VectorXd& distances, double factor, double min_distance = 1e-3);

}  // namespace bnsens
