#include <gtest/gtest.h>

#include <cmath>

#include "bnsens/inference.hpp"
#include "support.hpp"

using namespace bnsens;
using namespace bnsens::testing;

namespace {

const Network& dyspnea() {
  static const Network net = dyspnea_document().network;
  return net;
}

ParamIndex param(const Network& net, const std::string& node, const std::string& state,
                 const std::vector<std::string>& given) {
  const int v = net.index_of(node);
  std::vector<int> cfg;
  for (std::size_t i = 0; i < given.size(); ++i) cfg.push_back(net.state_index(net.parents(v)[i], given[i]));
  return table_param(net, v, net.state_index(v, state), cfg);
}

double entry(const SensitivityReport& rep, ParamIndex p, int state) {
  return rep.derivatives(*rep.row(p), state);
}

// E[U | e] by brute force over the joint, straight from the definition.
double brute_expected_u(const Network& net, const Evidence& e, ParamIndex p) {
  double num = 0, den = 0;
  for_each_assignment(net, [&](const std::vector<int>& x) {
    if (!consistent(x, e)) return;
    const double w = joint_prob(net, x);
    den += w;
    num += w * u_value(net, p, x[p.node], net.row_of(p.node, x));
  });
  return num / den;
}

}  // namespace

TEST(Sensitivity, DyspneaEntryForBGivenA) {
  const auto& net = dyspnea();
  const Scenario sc = dyspnea_scenario(net);
  const auto rep = sensitivities(net, sc);
  const ParamIndex p = param(net, "B", "t_B", {"t_A"});
  // P(t_B|e) (E[U|t_B,e] - E[U|e]) with every term from brute-force enumeration.
  const double pt = brute_marginal(net, sc.evidence, sc.target)(0);
  Evidence cond = sc.evidence;
  cond[sc.target] = 0;
  const double hand = pt * (brute_expected_u(net, cond, p) - brute_expected_u(net, sc.evidence, p));
  EXPECT_NEAR(brute_expected_u(net, cond, p), 19.0, 1e-12);
  EXPECT_NEAR(entry(rep, p, 0), hand, 1e-12);
  EXPECT_NEAR(entry(rep, p, 0), 1.601, 5e-4);
  EXPECT_NEAR(entry(rep, p, 0), central_difference(net, sc, p, 1e-5)(0), 1e-6);
}

TEST(Sensitivity, DyspneaZerosAndFrozen) {
  const auto& net = dyspnea();
  const auto rep = sensitivities(net, dyspnea_scenario(net));
  for (const char* node : {"A", "D"})
    for (const auto& p : node_parameters(net, net.index_of(node))) {
      EXPECT_TRUE(rep.structural_zero.count(p)) << describe(net, p);
      EXPECT_EQ(rep.derivatives.row(*rep.row(p)).cwiseAbs().maxCoeff(), 0.0);
    }
  // Node C is a deterministic OR: every entry frozen, none differentiated.
  for (const auto& p : node_parameters(net, net.index_of("C"))) {
    EXPECT_TRUE(rep.frozen.count(p));
    EXPECT_FALSE(rep.row(p).has_value());
  }
  EXPECT_EQ(rep.propagation_passes, 3u);
}

TEST(Sensitivity, DyspneaAgreesWithFiniteDifferences) {
  const auto& net = dyspnea();
  const Scenario sc = dyspnea_scenario(net);
  const auto rep = sensitivities(net, sc);
  for (std::size_t i = 0; i < rep.params.size(); ++i) {
    const Eigen::VectorXd fd = central_difference(net, sc, rep.params[i], 1e-5);
    for (int x = 0; x < 2; ++x)
      EXPECT_NEAR(rep.derivatives(static_cast<Eigen::Index>(i), x), fd(x), 1e-6) << describe(net, rep.params[i]);
  }
}

TEST(Sensitivity, SummaryReproducesPublishedTable) {
  const auto& net = dyspnea();
  const auto summary = node_max_summary(sensitivities(net, dyspnea_scenario(net)));
  auto at = [&](const char* id) { return summary.at(net.index_of(id)).value; };
  EXPECT_NEAR(at("B"), 1.60, 0.02);
  EXPECT_NEAR(at("E"), 0.041, 0.002);
  EXPECT_NEAR(at("F"), 0.019, 0.002);
  EXPECT_NEAR(at("G"), 0.038, 0.002);
  EXPECT_NEAR(at("H"), 0.088, 0.002);
  EXPECT_EQ(at("A"), 0.0);
  EXPECT_EQ(at("D"), 0.0);
  EXPECT_GE(at("B") / at("H"), 17.0);
  EXPECT_LE(at("B") / at("H"), 19.0);
  EXPECT_EQ(summary.at(net.index_of("B")).param, param(net, "B", "t_B", {"t_A"}));
  EXPECT_FALSE(summary.count(net.index_of("C")));
}

TEST(Sensitivity, SummaryTiesPickSmallestKey) {
  EXPECT_TRUE(node_max_summary(SensitivityReport{}).empty());
  const auto& net = dyspnea();
  const auto rep = sensitivities(net, dyspnea_scenario(net));
  // Every A entry is 0: the witness is the first parameter and first state.
  const auto a = node_max_summary(rep).at(net.index_of("A"));
  EXPECT_EQ(a.param, (ParamIndex{net.index_of("A"), 0}));
  EXPECT_EQ(a.target_state, 0);
  // For a binary target each parameter's two entries tie; state 0 wins.
  EXPECT_EQ(node_max_summary(rep).at(net.index_of("B")).target_state, 0);
}

TEST(Sensitivity, NodeFilter) {
  const auto& net = dyspnea();
  const auto rep = sensitivities(net, dyspnea_scenario(net), std::vector<int>{net.index_of("E")});
  for (const auto& p : rep.params) EXPECT_EQ(p.node, net.index_of("E"));
  EXPECT_EQ(rep.params.size(), 4u);
  const auto full = sensitivities(net, dyspnea_scenario(net));
  for (const auto& p : rep.params) EXPECT_EQ(rep.derivatives.row(*rep.row(p)), full.derivatives.row(*full.row(p)));
  EXPECT_THROW(sensitivities(net, dyspnea_scenario(net), std::vector<int>{99}), LookupError);
}

TEST(Sensitivity, ZeroSumOverTargetStates) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const Network net = random_network(rng);
    const auto rep = sensitivities(net, random_scenario(rng, net));
    for (Eigen::Index i = 0; i < rep.derivatives.rows(); ++i) EXPECT_NEAR(rep.derivatives.row(i).sum(), 0.0, 1e-9);
  }
}

TEST(Sensitivity, RandomNetsMatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  RandomNetOptions o;
  o.max_nodes = 7;
  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Network net = random_network(rng, o);
    const Scenario sc = random_scenario(rng, net);
    const auto rep = sensitivities(net, sc);
    for (std::size_t i = 0; i < rep.params.size(); ++i) {
      const Eigen::VectorXd fd = central_difference(net, sc, rep.params[i], 1e-5);
      for (int x = 0; x < fd.size(); ++x, ++checked)
        EXPECT_NEAR(rep.derivatives(static_cast<Eigen::Index>(i), x), fd(x), 1e-6);
    }
  }
  EXPECT_GT(checked, 200);
}

TEST(Sensitivity, ExpectedUMatchesDefinition) {
  std::mt19937_64 rng(8);
  RandomNetOptions o;
  o.max_nodes = 6;
  o.noisy_or_share = 0.5;
  for (int trial = 0; trial < 15; ++trial) {
    const Network net = random_network(rng, o);
    const Scenario sc = random_scenario(rng, net);
    for (int v = 0; v < net.size(); ++v) {
      const Eigen::VectorXd eu = expected_u(net, v, brute_family(net, sc.evidence, v));
      for (int k = 0; k < eu.size(); ++k)
        EXPECT_NEAR(eu(k), brute_expected_u(net, sc.evidence, {v, k}), 1e-10);
    }
  }
}

TEST(Screening, SoundOnRandomNets) {
  std::mt19937_64 rng(606);
  int screened = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const Network net = random_network(rng);
    const Scenario sc = random_scenario(rng, net);
    const auto zeros = screen_structural_zeros(net, sc);
    const auto rep = sensitivities(net, sc, std::nullopt, false);
    for (const auto& p : zeros) {
      if (is_frozen(net, p)) continue;
      EXPECT_LE(rep.derivatives.row(*rep.row(p)).cwiseAbs().maxCoeff(), 1e-12) << describe(net, p);
      ++screened;
    }
  }
  EXPECT_GT(screened, 50);
}

TEST(Screening, RootTargetWithoutEvidence) {
  // R -> X, S isolated, Y -> X. Without evidence only R's own prior matters.
  Network net;
  for (const char* id : {"R", "S", "Y", "X"}) net.add_variable({id, {"a", "b"}});
  for (int v = 0; v < 3; ++v) net.set_params(v, TableParams{Eigen::MatrixXd::Constant(1, 2, 0.5)});
  net.set_parents(3, {0, 2});
  Eigen::MatrixXd x(4, 2);
  x << 0.9, 0.1, 0.6, 0.4, 0.3, 0.7, 0.2, 0.8;
  net.set_params(3, TableParams{x});
  const auto zeros = screen_structural_zeros(net, {{}, 0});
  EXPECT_FALSE(zeros.count({0, 0}));
  for (int v = 1; v < 4; ++v)
    for (int k = 0; k < net.param_count(v); ++k) EXPECT_TRUE(zeros.count({v, k}));
  // Observing the common child opens the path from Y's parameters.
  const auto opened = screen_structural_zeros(net, {{{3, 0}}, 0});
  EXPECT_FALSE(opened.count({2, 0}));
  EXPECT_TRUE(opened.count({1, 0}));
}

TEST(Screening, DyspneaBarrenAndObservedRoot) {
  const auto& net = dyspnea();
  const auto zeros = screen_structural_zeros(net, dyspnea_scenario(net));
  for (const char* node : {"A", "D"})
    for (int k = 0; k < net.param_count(net.index_of(node)); ++k) EXPECT_TRUE(zeros.count({net.index_of(node), k}));
  for (const char* node : {"B", "E", "F", "G", "H"}) EXPECT_FALSE(zeros.count({net.index_of(node), 0}));
}

TEST(Screening, PassCountIndependentOfParameters) {
  const auto& net = dyspnea();
  for (const char* t : {"B", "F", "D"}) {
    Scenario sc{parse_evidence(net, "A=t_A,H=t_H"), net.index_of(t)};
    const InferenceContext ctx(net);
    const auto before = ctx.propagation_count();
    const auto rep = sensitivities(ctx, sc);
    EXPECT_EQ(rep.propagation_passes, static_cast<std::size_t>(net.cardinality(sc.target)) + 1);
    EXPECT_EQ(ctx.propagation_count() - before, rep.propagation_passes);
  }
}

TEST(Sensitivity, ImpossibleTargetStateSkipsItsPass) {
  const auto& net = dyspnea();
  // C is true whenever B is: P(f_C | t_B) = 0.
  const Scenario sc{parse_evidence(net, "B=t_B"), net.index_of("C")};
  const auto rep = sensitivities(net, sc);
  EXPECT_EQ(rep.target_distribution(1), 0.0);
  EXPECT_EQ(rep.propagation_passes, 2u);
  EXPECT_TRUE(rep.derivatives.allFinite());
}

TEST(FiniteDiff, OracleBehaviour) {
  const auto& net = dyspnea();
  const Scenario sc = dyspnea_scenario(net);
  const ParamIndex b = param(net, "B", "t_B", {"t_A"});
  const auto rep = sensitivities(net, sc);
  EXPECT_NEAR(finite_diff_sensitivity(net, sc, b, 0, 1e-5), entry(rep, b, 0), 1e-6);
  EXPECT_NEAR(finite_diff_sensitivity(net, sc, b, 0, 1e-5), -finite_diff_sensitivity(net, sc, b, 1, 1e-5), 1e-9);
  for (const auto& p : rep.structural_zero) EXPECT_LE(std::abs(finite_diff_sensitivity(net, sc, p, 0, 1e-5)), 1e-9);
  EXPECT_THROW(finite_diff_sensitivity(net, sc, param(net, "C", "t_C", {"t_B", "t_E"}), 0, 1e-5), FrozenParameter);
  EXPECT_THROW(finite_diff_sensitivity(net, sc, b, 0, 0.0), DomainError);
  try {
    finite_diff_sensitivity(net, sc, b, 0, 0.5);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_EQ(e.reason(), "perturbation-out-of-domain");
  }
}

TEST(JointDerivative, EqualsJointTimesU) {
  std::mt19937_64 rng(99);
  RandomNetOptions o;
  o.max_nodes = 6;
  o.noisy_or_share = 0.5;
  for (int trial = 0; trial < 10; ++trial) {
    const Network net = random_network(rng, o);
    for (const auto& p : interior_params(net)) {
      const double v = net.parameter(p), h = 1e-5;
      const Network up = net.with_parameter(p, v + h), dn = net.with_parameter(p, v - h);
      for_each_assignment(net, [&](const std::vector<int>& x) {
        const double fd = (joint_prob(up, x) - joint_prob(dn, x)) / (2 * h);
        EXPECT_NEAR(fd, joint_prob(net, x) * u_value(net, p, x[p.node], net.row_of(p.node, x)), 1e-8);
      });
    }
  }
}
