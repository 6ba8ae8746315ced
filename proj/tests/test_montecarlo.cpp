#include <gtest/gtest.h>

#include <cmath>

#include "bnsens/montecarlo.hpp"
#include "support.hpp"

using namespace bnsens;
using namespace bnsens::testing;

namespace {

const Network& dyspnea() {
  static const Network net = dyspnea_document().network;
  return net;
}

SamplerConfig config(SamplingMethod m, std::uint64_t n, std::uint64_t seed, unsigned threads = 0) {
  SamplerConfig c;
  c.method = m;
  c.sample_count = n;
  c.seed = seed;
  c.threads = threads;
  return c;
}

}  // namespace

TEST(SplitMix, ReferenceSequence) {
  // First outputs for seed 0 as published with the generator.
  SplitMix64 rng(0);
  EXPECT_EQ(rng.next(), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(rng.next(), 0x6e789e6aa1b965f4ULL);
  EXPECT_EQ(rng.next(), 0x06c45d188009454fULL);
  SplitMix64 u(42);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    EXPECT_GE(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
}

TEST(MethodNames, ParseAndPrint) {
  EXPECT_EQ(parse_sampling_method("lw"), SamplingMethod::LikelihoodWeighting);
  EXPECT_EQ(parse_sampling_method("reject"), SamplingMethod::LogicRejection);
  EXPECT_EQ(parse_sampling_method(to_string(SamplingMethod::LogicRejection)), SamplingMethod::LogicRejection);
  EXPECT_THROW(parse_sampling_method("gibbs"), DomainError);
}

TEST(DrawSample, RejectionMismatchHasZeroWeight) {
  const auto& net = dyspnea();
  const auto e = parse_evidence(net, "A=t_A");
  SplitMix64 rng(1);
  int zero = 0, one = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto s = draw_sample(net, e, SamplingMethod::LogicRejection, rng);
    if (s.assignment[net.index_of("A")] == 0) {
      EXPECT_EQ(s.weight, 1.0);
      ++one;
    } else {
      EXPECT_EQ(s.weight, 0.0);
      ++zero;
    }
  }
  EXPECT_GT(zero, one);
}

TEST(DrawSample, LikelihoodWeights) {
  const auto& net = dyspnea();
  SplitMix64 rng(2);
  EXPECT_EQ(draw_sample(net, {}, SamplingMethod::LikelihoodWeighting, rng).weight, 1.0);
  const auto e = parse_evidence(net, "A=t_A");
  for (int i = 0; i < 50; ++i) {
    const auto s = draw_sample(net, e, SamplingMethod::LikelihoodWeighting, rng);
    EXPECT_EQ(s.assignment[net.index_of("A")], 0);
    EXPECT_DOUBLE_EQ(s.weight, 0.01);
  }
  // Weight is the product of the clamped nodes' local probabilities.
  const auto eh = parse_evidence(net, "A=t_A,H=t_H");
  for (int i = 0; i < 50; ++i) {
    const auto s = draw_sample(net, eh, SamplingMethod::LikelihoodWeighting, rng);
    const int h = net.index_of("H");
    const double expect = 0.01 * local_prob_row(net, h, 0, net.row_of(h, s.assignment));
    EXPECT_NEAR(s.weight, expect, 1e-15);
  }
}

TEST(MonteCarlo, DeterministicAndPartitionIndependent) {
  const auto& net = dyspnea();
  const Scenario sc = dyspnea_scenario(net);
  const auto a = estimate_sensitivities(net, sc, config(SamplingMethod::LikelihoodWeighting, 20000, 7, 1));
  const auto b = estimate_sensitivities(net, sc, config(SamplingMethod::LikelihoodWeighting, 20000, 7, 4));
  const auto c = estimate_sensitivities(net, sc, config(SamplingMethod::LikelihoodWeighting, 20000, 7, 0));
  EXPECT_EQ(a.accumulators.a, b.accumulators.a);
  EXPECT_EQ(a.accumulators.b, b.accumulators.b);
  EXPECT_EQ(a.accumulators.wu2, c.accumulators.wu2);
  EXPECT_EQ(a.estimate.derivatives, c.estimate.derivatives);
  EXPECT_EQ(a.standard_error, c.standard_error);
  const auto d = estimate_sensitivities(net, sc, config(SamplingMethod::LikelihoodWeighting, 20000, 8, 1));
  EXPECT_NE(a.accumulators.a, d.accumulators.a);
}

TEST(MonteCarlo, MergeIsAssociative) {
  const auto& net = dyspnea();
  const Scenario sc = dyspnea_scenario(net);
  const auto r = estimate_sensitivities(net, sc, config(SamplingMethod::LikelihoodWeighting, 5000, 3, 1));
  Accumulators x = r.accumulators, y = r.accumulators, z = r.accumulators;
  Accumulators left = x;
  left.merge(y);
  left.merge(z);
  Accumulators yz = y;
  yz.merge(z);
  Accumulators right = x;
  right.merge(yz);
  EXPECT_LT((left.a - right.a).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(left.draws, 3 * r.accumulators.draws);
}

TEST(MonteCarlo, EstimatesFollowFromAccumulators) {
  const auto& net = dyspnea();
  const Scenario sc = dyspnea_scenario(net);
  const auto r = estimate_sensitivities(net, sc, config(SamplingMethod::LikelihoodWeighting, 30000, 5));
  const auto& acc = r.accumulators;
  const Eigen::VectorXd p = acc.b / acc.b.sum();
  EXPECT_LT((p - r.estimate.target_distribution).cwiseAbs().maxCoeff(), 1e-14);
  for (Eigen::Index i = 0; i < acc.a.rows(); ++i) {
    const double pooled = acc.a.row(i).sum() / acc.b.sum();
    double weighted = 0;
    for (Eigen::Index t = 0; t < acc.b.size(); ++t) weighted += (acc.b(t) / acc.b.sum()) * (acc.a(i, t) / acc.b(t));
    EXPECT_NEAR(pooled, weighted, 1e-9 * std::max(1.0, std::abs(pooled)));
    const auto row = r.estimate.row(acc.params[static_cast<std::size_t>(i)]);
    ASSERT_TRUE(row.has_value());
    for (Eigen::Index t = 0; t < acc.b.size(); ++t)
      EXPECT_NEAR(r.estimate.derivatives(*row, t), p(t) * (acc.a(i, t) / acc.b(t) - pooled), 1e-9);
  }
}

TEST(MonteCarlo, DyspneaWithinThreeStandardErrors) {
  const auto& net = dyspnea();
  const Scenario sc = dyspnea_scenario(net);
  const auto exact = sensitivities(net, sc);
  for (auto m : {SamplingMethod::LikelihoodWeighting, SamplingMethod::LogicRejection}) {
    const auto r = estimate_sensitivities(net, sc, config(m, 100000, 11));
    int inside = 0, total = 0;
    for (std::size_t i = 0; i < r.estimate.params.size(); ++i) {
      const auto row = exact.row(r.estimate.params[i]);
      ASSERT_TRUE(row.has_value());
      for (int t = 0; t < 2; ++t, ++total) {
        const double err = std::abs(r.estimate.derivatives(static_cast<Eigen::Index>(i), t) - exact.derivatives(*row, t));
        if (err <= 3 * r.standard_error(static_cast<Eigen::Index>(i), t) + 1e-12) ++inside;
      }
    }
    EXPECT_GE(inside, 0.9 * total) << to_string(m);
    const auto b = *r.estimate.row(table_param(net, net.index_of("B"), 0, std::vector<int>{0}));
    EXPECT_NEAR(r.estimate.derivatives(b, 0), 1.601, 4 * r.standard_error(b, 0)) << to_string(m);
  }
}

TEST(MonteCarlo, NoAcceptedSamples) {
  const auto& net = dyspnea();
  const Scenario sc{parse_evidence(net, "B=f_B,E=f_E,C=t_C"), net.index_of("A")};
  for (auto m : {SamplingMethod::LikelihoodWeighting, SamplingMethod::LogicRejection}) {
    try {
      estimate_sensitivities(net, sc, config(m, 500, 1));
      FAIL();
    } catch (const DomainError& e) {
      EXPECT_EQ(e.reason(), "no-accepted-samples");
      EXPECT_NE(std::string(e.what()).find(to_string(m)), std::string::npos);
      EXPECT_NE(std::string(e.what()).find("500"), std::string::npos);
    }
  }
}

TEST(MonteCarlo, UnseenTargetStateIsUndefined) {
  const auto& net = dyspnea();
  const Scenario sc{parse_evidence(net, "B=t_B"), net.index_of("C")};
  const auto r = estimate_sensitivities(net, sc, config(SamplingMethod::LikelihoodWeighting, 2000, 4));
  ASSERT_GT(r.undefined.rows(), 0);
  for (Eigen::Index i = 0; i < r.undefined.rows(); ++i) {
    EXPECT_FALSE(r.undefined(i, 0));
    EXPECT_TRUE(r.undefined(i, 1));
    EXPECT_TRUE(std::isnan(r.estimate.derivatives(i, 1)));
  }
  EXPECT_EQ(r.estimate.target_distribution(1), 0.0);
}

TEST(MonteCarlo, RejectsEmptyRun) {
  const auto& net = dyspnea();
  EXPECT_THROW(estimate_sensitivities(net, dyspnea_scenario(net), config(SamplingMethod::LikelihoodWeighting, 0, 1)),
               DomainError);
}
