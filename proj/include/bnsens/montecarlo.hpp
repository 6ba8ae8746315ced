#pragma once

// Sampling estimates of parameter sensitivities.
//
// Each draw yields a full realization x and a weight w. For every interior
// parameter the accumulators collect, per target state x_t,
//   A(x_t) += w * U(x_s, x_parents),   B(x_t) += w,
// so that E[U | x_t, e] ~ A(x_t) / B(x_t) and E[U | e] ~ sum A / sum B.
//
// Random numbers: SplitMix64. Sample i of a run seeded with S uses its own
// stream seeded with mix(S ^ mix(i + 1)), so results do not depend on how the
// sample range is split across threads. Samples are accumulated in fixed
// blocks of 4096 and blocks are merged in index order.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bnsens/sensitivity.hpp"

namespace bnsens {

enum class SamplingMethod { LogicRejection, LikelihoodWeighting };

std::string to_string(SamplingMethod m);
// Accepts "reject", "rejection", "logic-rejection", "lw", "likelihood-weighting".
SamplingMethod parse_sampling_method(const std::string& s);

struct SamplerConfig {
  SamplingMethod method = SamplingMethod::LikelihoodWeighting;
  std::uint64_t sample_count = 100000;
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0 = hardware concurrency
};

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t state_;
};

struct WeightedSample {
  std::vector<int> assignment;
  double weight = 1.0;
};

// Ancestral sampling in topological order. Rejection samples every node and
// gives weight 0 on an evidence mismatch; likelihood weighting clamps evidence
// nodes and multiplies their local probabilities into the weight.
WeightedSample draw_sample(const Network& net, const Evidence& e, SamplingMethod method, SplitMix64& rng);

// Per (parameter, target state) sums. Rows follow `params`.
struct Accumulators {
  std::vector<ParamIndex> params;
  Eigen::MatrixXd a;    // sum w U
  Eigen::VectorXd b;    // sum w, per target state (shared by all parameters)
  Eigen::MatrixXd wu2;  // sum w^2 U^2
  Eigen::MatrixXd w2u;  // sum w^2 U
  Eigen::VectorXd w2;   // sum w^2, per target state
  std::uint64_t draws = 0;
  std::uint64_t accepted = 0;  // draws with w > 0

  Accumulators() = default;
  Accumulators(std::vector<ParamIndex> params, int target_states);
  void merge(const Accumulators& other);
};

struct MonteCarloReport {
  SensitivityReport estimate;  // target_distribution holds B-proportions
  Eigen::MatrixXd standard_error;
  // True where B(x_t) = 0: the derivative for that target state is undefined
  // and set to NaN.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> undefined;
  SamplerConfig config;
  Accumulators accumulators;
};

// Throws DomainError("no-accepted-samples") when every weight is zero.
MonteCarloReport estimate_sensitivities(const Network& net, const Scenario& sc, const SamplerConfig& cfg);

// Plug-in estimates and ratio-estimator standard errors from accumulators.
MonteCarloReport finish_estimate(const Network& net, const Scenario& sc, Accumulators acc);

}  // namespace bnsens
