// Copyright 2026 The DMD-MPC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dmdmpc/losses.h"

#include <cmath>
#include <limits>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.h"

namespace dmdmpc {
namespace {

using testing::Code;
using testing::ThrownCode;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Batch with one rollout per sequence and the given cost function.
template <typename CostFn>
RolloutBatch SampleBatch(const HorizonParams& params, int n, Rng& rng,
                         CostFn cost) {
  RolloutBatch batch;
  batch.sequences = SampleControls(params, n, rng);
  for (const auto& s : batch.sequences) batch.costs.push_back(cost(s));
  return batch;
}

HorizonParams ScalarGaussian(double mean, double std_dev) {
  return HorizonParams({GaussianParams::Isotropic(Vector::Constant(1, mean), std_dev)});
}

double Square(const ControlSequence& s) { return s.value(0)[0] * s.value(0)[0]; }

// --- thresholds and weights -----------------------------------------------

TEST(AdaptiveThresholdTest, Examples) {
  const std::vector<double> four = {4, 1, 3, 2};
  EXPECT_EQ(AdaptiveThreshold(four, 0.5), 2.0);
  const std::vector<double> one = {5};
  EXPECT_EQ(AdaptiveThreshold(one, 0.001), 5.0);
  const std::vector<double> same = {3, 3, 3};
  EXPECT_EQ(AdaptiveThreshold(same, 1.0), 3.0);
}

TEST(AdaptiveThresholdTest, DefaultFractionKeepsExactlyOneOfThousand) {
  std::vector<double> costs(1000);
  for (int i = 0; i < 1000; ++i) costs[i] = 1000 - i;
  EXPECT_EQ(AdaptiveThreshold(costs, 1e-3), 1.0);
  EXPECT_EQ(AdaptiveThreshold(costs, 2e-3), 2.0);
}

TEST(AdaptiveThresholdTest, RejectsBadFraction) {
  const std::vector<double> costs = {1, 2};
  EXPECT_ANY_THROW(AdaptiveThreshold(costs, 0.0));
  EXPECT_ANY_THROW(AdaptiveThreshold(costs, 1.5));
}

TEST(UtilityWeightsTest, ExponentialExamples) {
  const std::vector<double> equal = {7, 7, 7, 7};
  const Vector w = UtilityWeights(equal, ExpUtility{3.0});
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(w[i], 0.25);
  const double lambda = 2.5;
  const std::vector<double> costs = {0.0, lambda * std::log(3.0)};
  const Vector v = UtilityWeights(costs, ExpUtility{lambda});
  EXPECT_NEAR(v[0], 0.75, 1e-15);
  EXPECT_NEAR(v[1], 0.25, 1e-15);
}

TEST(UtilityWeightsTest, IndicatorExample) {
  const std::vector<double> costs = {1, 2, 3};
  const Vector w = UtilityWeights(costs, ProbLowCost{FixedThreshold{2.0}});
  EXPECT_EQ(w[0], 0.5);
  EXPECT_EQ(w[1], 0.5);
  EXPECT_EQ(w[2], 0.0);
}

TEST(UtilityWeightsTest, ExponentialSurvivesHugeCosts) {
  const std::vector<double> costs = {1e6, 1e6 + 1.0};
  const Vector w = UtilityWeights(costs, ExpUtility{1.0});
  EXPECT_NEAR(w[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(UtilityWeightsTest, DegenerateAndInvalid) {
  const std::vector<double> costs = {5, 6};
  EXPECT_EQ(ThrownCode([&] { UtilityWeights(costs, ProbLowCost{FixedThreshold{1.0}}); }),
            Code(ErrorCode::kDegenerateEstimate));
  EXPECT_EQ(ThrownCode([&] { UtilityWeights(costs, ExpectedCost{}); }),
            Code(ErrorCode::kInvalidArgument));
  EXPECT_EQ(ThrownCode([&] { UtilityWeights(costs, ExpUtility{0.0}); }),
            Code(ErrorCode::kInvalidArgument));
  const std::vector<double> all_inf = {kInf, kInf};
  EXPECT_EQ(ThrownCode([&] { UtilityWeights(all_inf, ExpUtility{1.0}); }),
            Code(ErrorCode::kDegenerateEstimate));
}

TEST(UtilityWeightsTest, InfiniteCostsGetZeroWeight) {
  const std::vector<double> costs = {1.0, kInf, 2.0};
  const Vector e = UtilityWeights(costs, ExpUtility{1.0});
  EXPECT_EQ(e[1], 0.0);
  const Vector p = UtilityWeights(costs, ProbLowCost{EliteFraction{1.0}});
  EXPECT_EQ(p[1], 0.0);
  EXPECT_EQ(p[0], 0.5);
}

TEST(UtilityWeightsTest, ExponentialShiftInvariance) {
  Rng rng(1);
  std::uniform_int_distribution<int> cost(0, 40);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(20), b(20);
    const double shift = cost(rng) * 8.0;
    for (int i = 0; i < 20; ++i) {
      a[i] = cost(rng);
      b[i] = a[i] + shift;
    }
    EXPECT_EQ(UtilityWeights(a, ExpUtility{4.0}), UtilityWeights(b, ExpUtility{4.0}));
  }
}

TEST(UtilityWeightsTest, ExponentialScaleNeedsMatchingLambda) {
  const std::vector<double> a = {1.0, 2.0, 4.0};
  const std::vector<double> b = {3.0, 6.0, 12.0};
  const Vector wa = UtilityWeights(a, ExpUtility{2.0});
  EXPECT_LT(testing::MaxAbsDiff(wa, UtilityWeights(b, ExpUtility{6.0})), 1e-15);
  EXPECT_GT(testing::MaxAbsDiff(wa, UtilityWeights(b, ExpUtility{2.0})), 1e-3);
}

TEST(UtilityWeightsTest, IndicatorInvariantUnderMonotoneTransform) {
  Rng rng(2);
  std::uniform_real_distribution<double> uni(0.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(30), b(30);
    for (int i = 0; i < 30; ++i) {
      a[i] = uni(rng);
      b[i] = std::exp(a[i]) + 3.0 * a[i];
    }
    const double c_max = uni(rng);
    EXPECT_EQ(UtilityWeights(a, ProbLowCost{EliteFraction{0.2}}),
              UtilityWeights(b, ProbLowCost{EliteFraction{0.2}}));
    EXPECT_EQ(
        UtilityWeights(a, ProbLowCost{FixedThreshold{c_max}}),
        UtilityWeights(b, ProbLowCost{FixedThreshold{std::exp(c_max) + 3.0 * c_max}}));
  }
}

TEST(UtilityWeightsTest, WeightsFormAConvexCombination) {
  Rng rng(3);
  std::exponential_distribution<double> expo(0.1);
  const std::vector<LossSpec> losses = {ExpUtility{0.5}, ExpUtility{50.0},
                                        ProbLowCost{EliteFraction{0.1}},
                                        ProbLowCost{EliteFraction{1.0}}};
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> costs(100);
    for (double& c : costs) c = expo(rng);
    for (const LossSpec& loss : losses) {
      const Vector w = UtilityWeights(costs, loss);
      EXPECT_NEAR(w.sum(), 1.0, 1e-9);
      EXPECT_GE(w.minCoeff(), 0.0);
      EXPECT_LE(w.maxCoeff(), 1.0);
    }
  }
}

// --- gradient estimates ---------------------------------------------------

TEST(EstimateGradientTest, SingleSampleWithBaselineIsZero) {
  Rng rng(4);
  const HorizonParams p = testing::RandomGaussianHorizon(3, 2, rng);
  const RolloutBatch batch = SampleBatch(p, 1, rng, [](const auto&) { return 42.0; });
  for (Coordinates c : {Coordinates::kGaussianNatural, Coordinates::kGaussianMean}) {
    const GradientEstimate est = EstimateGradient(batch, p, ExpectedCost{}, c);
    EXPECT_TRUE(est.direction.IsZero());
    EXPECT_EQ(est.baseline, 42.0);
    EXPECT_EQ(est.loss_value, 42.0);
  }
}

TEST(EstimateGradientTest, EqualCostsGiveMinusMeanScore) {
  Rng rng(5);
  const HorizonParams p = testing::RandomGaussianHorizon(2, 2, rng);
  const RolloutBatch batch = SampleBatch(p, 7, rng, [](const auto&) { return 3.0; });
  for (const LossSpec& loss :
       {LossSpec(ExpUtility{1.0}), LossSpec(ProbLowCost{EliteFraction{1.0}})}) {
    for (Coordinates c : {Coordinates::kGaussianNatural, Coordinates::kGaussianMean}) {
      const GradientEstimate est = EstimateGradient(batch, p, loss, c);
      HorizonGradient expected = HorizonGradient::Zero(p, c);
      for (const auto& s : batch.sequences) expected.Axpy(-1.0 / 7, LogProbGrad(p, s, c));
      HorizonGradient diff = est.direction;
      diff.Axpy(-1.0, expected);
      EXPECT_LT(std::sqrt(diff.SquaredNorm()), 1e-12);
      EXPECT_NEAR(est.effective_sample_size, 7.0, 1e-12);
    }
  }
}

TEST(EstimateGradientTest, MatchesExplicitScoreSum) {
  Rng rng(6);
  const HorizonParams g = testing::RandomGaussianHorizon(3, 2, rng);
  const HorizonParams c = testing::RandomCategoricalHorizon(3, 3, rng);
  auto cost = [&](const ControlSequence& s) {
    return s.discrete() ? 1.0 + s.index(0) + 2.0 * s.index(2)
                        : s.values().squaredNorm() + s.value(1)[0];
  };
  for (const HorizonParams* p : {&g, &c}) {
    const RolloutBatch batch = SampleBatch(*p, 25, rng, cost);
    const std::vector<Coordinates> coords =
        p->family() == Family::kGaussian
            ? std::vector<Coordinates>{Coordinates::kGaussianNatural,
                                       Coordinates::kGaussianMean}
            : std::vector<Coordinates>{Coordinates::kCategoricalExpectation};
    for (Coordinates co : coords) {
      for (const LossSpec& loss :
           {LossSpec(ExpectedCost{true}), LossSpec(ExpectedCost{false}),
            LossSpec(ExpUtility{2.0}), LossSpec(ProbLowCost{EliteFraction{0.3}})}) {
        const GradientEstimate est = EstimateGradient(batch, *p, loss, co);
        HorizonGradient expected = HorizonGradient::Zero(*p, co);
        const bool utility = IsUtilityLoss(loss);
        for (int i = 0; i < batch.size(); ++i) {
          const double a = utility ? -est.weights[i] : est.weights[i];
          expected.Axpy(a, LogProbGrad(*p, batch.sequences[i], co));
        }
        HorizonGradient diff = est.direction;
        diff.Axpy(-1.0, expected);
        EXPECT_LT(std::sqrt(diff.SquaredNorm()),
                  1e-10 * std::max(1.0, std::sqrt(expected.SquaredNorm())));
      }
    }
  }
}

TEST(EstimateGradientTest, ExpectedCostWeightsAndBaseline) {
  Rng rng(7);
  const HorizonParams p = ScalarGaussian(0.0, 1.0);
  RolloutBatch batch;
  batch.sequences = SampleControls(p, 4, rng);
  batch.costs = {1.0, 2.0, 3.0, 6.0};
  const GradientEstimate with = EstimateGradient(batch, p, ExpectedCost{true});
  EXPECT_EQ(with.baseline, 3.0);
  EXPECT_EQ(with.weights[0], -0.5);
  EXPECT_EQ(with.weights[3], 0.75);
  EXPECT_EQ(with.loss_value, 3.0);
  const GradientEstimate without = EstimateGradient(batch, p, ExpectedCost{false});
  EXPECT_EQ(without.baseline, 0.0);
  EXPECT_EQ(without.weights[0], 0.25);
}

TEST(EstimateGradientTest, LossValueEstimates) {
  Rng rng(8);
  const HorizonParams p = ScalarGaussian(0.0, 1.0);
  RolloutBatch batch;
  batch.sequences = SampleControls(p, 4, rng);
  batch.costs = {1.0, 2.0, 3.0, 4.0};
  EXPECT_NEAR(EstimateGradient(batch, p, ProbLowCost{FixedThreshold{2.5}}).loss_value,
              -std::log(0.5), 1e-15);
  const double lambda = 1.5;
  double mean_u = 0.0;
  for (double c : batch.costs) mean_u += std::exp(-c / lambda) / 4.0;
  EXPECT_NEAR(EstimateGradient(batch, p, ExpUtility{lambda}).loss_value,
              -std::log(mean_u), 1e-12);
}

TEST(EstimateGradientTest, InfiniteCostRejectedForExpectedCost) {
  Rng rng(9);
  const HorizonParams p = ScalarGaussian(0.0, 1.0);
  RolloutBatch batch;
  batch.sequences = SampleControls(p, 2, rng);
  batch.costs = {1.0, kInf};
  EXPECT_EQ(ThrownCode([&] { EstimateGradient(batch, p, ExpectedCost{}); }),
            Code(ErrorCode::kDegenerateEstimate));
  EXPECT_NO_THROW(EstimateGradient(batch, p, ExpUtility{1.0}));
}

TEST(EstimateGradientTest, ShapeChecks) {
  Rng rng(10);
  const HorizonParams p = ScalarGaussian(0.0, 1.0);
  RolloutBatch batch;
  batch.sequences = SampleControls(p, 2, rng);
  batch.costs = {1.0};
  EXPECT_EQ(ThrownCode([&] { EstimateGradient(batch, p, ExpectedCost{}); }),
            Code(ErrorCode::kShapeMismatch));
  batch.costs = {1.0, 2.0};
  EXPECT_EQ(ThrownCode([&] {
              EstimateGradient(batch, p, ExpectedCost{},
                               Coordinates::kCategoricalExpectation);
            }),
            Code(ErrorCode::kUnsupported));
}

// E[u^2] under N(m, s^2): l = m^2 + s^2, dl/dm = 2m, and in natural
// coordinates Cov(u^2, (u, u^2)) = (2 m s^2, 4 m^2 s^2 + 2 s^4).
TEST(EstimateGradientTest, QuadraticTaskMatchesClosedForm) {
  const double m = 0.7, s = 1.3;
  const HorizonParams p = ScalarGaussian(m, s);
  Rng rng(11);
  const RolloutBatch batch = SampleBatch(p, 100000, rng, Square);
  const GradientEstimate mean_est =
      EstimateGradient(batch, p, ExpectedCost{}, Coordinates::kGaussianMean);
  EXPECT_NEAR(mean_est.direction.steps[0].vec[0], 2 * m, 0.02 * 2 * m);
  const GradientEstimate nat =
      EstimateGradient(batch, p, ExpectedCost{}, Coordinates::kGaussianNatural);
  EXPECT_NEAR(nat.direction.steps[0].vec[0], 2 * m * s * s, 0.02 * 2 * m * s * s);
  const double second = 4 * m * m * s * s + 2 * s * s * s * s;
  EXPECT_NEAR(nat.direction.steps[0].mat(0, 0), second, 0.03 * second);
  EXPECT_NEAR(mean_est.loss_value, m * m + s * s, 0.02 * (m * m + s * s));
}

TEST(EstimateGradientTest, BaselineReducesVariance) {
  const double m = 1.0;
  const HorizonParams p = ScalarGaussian(m, 1.0);
  Rng rng(12);
  double sum[2] = {0, 0}, sum_sq[2] = {0, 0};
  const int resamples = 1000;
  for (int r = 0; r < resamples; ++r) {
    const RolloutBatch batch = SampleBatch(p, 64, rng, Square);
    for (int b = 0; b < 2; ++b) {
      const double g = EstimateGradient(batch, p, ExpectedCost{b == 1},
                                        Coordinates::kGaussianMean)
                           .direction.steps[0].vec[0];
      sum[b] += g;
      sum_sq[b] += g * g;
    }
  }
  double var[2];
  for (int b = 0; b < 2; ++b) {
    const double mean = sum[b] / resamples;
    var[b] = sum_sq[b] / resamples - mean * mean;
    // Both are consistent for 2m.
    EXPECT_NEAR(mean, 2 * m, 4 * std::sqrt(var[b] / resamples));
  }
  EXPECT_LT(var[1], var[0]);
}

TEST(EstimateGradientTest, CategoricalExpectedCostDirection) {
  // One step, three categories, cost = index. g_k = E[(C - b) 1{u=k}] / p_k,
  // which converges to k - E[C].
  const Vector probs = (Vector(3) << 0.2, 0.3, 0.5).finished();
  const HorizonParams p = HorizonParams::Repeat(CategoricalParams(probs), 1);
  Rng rng(13);
  const RolloutBatch batch = SampleBatch(
      p, 200000, rng, [](const ControlSequence& s) { return double(s.index(0)); });
  const GradientEstimate est = EstimateGradient(batch, p, ExpectedCost{});
  const double mean_cost = 0.3 + 1.0;
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(est.direction.steps[0].vec[k], k - mean_cost, 0.02);
  }
}

}  // namespace
}  // namespace dmdmpc
