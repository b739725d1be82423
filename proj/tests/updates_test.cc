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

#include "dmdmpc/updates.h"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "test_util.h"

namespace dmdmpc {
namespace {

using testing::Code;
using testing::KlProxOracle;
using testing::MaxAbsDiff;
using testing::RandomVector;
using testing::ThrownCode;

Vector Vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

HorizonParams ScalarMeans(std::initializer_list<double> means, double var = 1.0) {
  std::vector<BasicParams> steps;
  for (double m : means) {
    steps.emplace_back(GaussianParams(Vector::Constant(1, m), Matrix::Constant(1, 1, var)));
  }
  return HorizonParams(std::move(steps));
}

HorizonGradient MeanGradient(const HorizonParams& p, std::initializer_list<double> g) {
  return StackedMeanGradient(p, Vec(g));
}

HorizonGradient CategoricalGradient(std::initializer_list<Vector> g) {
  HorizonGradient out{Coordinates::kCategoricalExpectation, {}};
  for (const Vector& v : g) out.steps.push_back({v, {}});
  return out;
}

// Random batch with random costs, one rollout per sequence.
RolloutBatch RandomBatch(const HorizonParams& p, int n, Rng& rng) {
  RolloutBatch batch;
  batch.sequences = SampleControls(p, n, rng);
  std::uniform_real_distribution<double> uni(0.0, 5.0);
  for (int i = 0; i < n; ++i) batch.costs.push_back(uni(rng));
  return batch;
}

double MaxParamDiff(const HorizonParams& a, const HorizonParams& b) {
  double worst = 0.0;
  for (int h = 0; h < a.horizon(); ++h) {
    if (a.family() == Family::kGaussian) {
      worst = std::max({worst, MaxAbsDiff(a.gaussian(h).mean(), b.gaussian(h).mean()),
                        MaxAbsDiff(a.gaussian(h).covariance(),
                                   b.gaussian(h).covariance())});
    } else {
      worst = std::max(worst, MaxAbsDiff(a.categorical(h).probs(),
                                         b.categorical(h).probs()));
    }
  }
  return worst;
}

// --- schedules and projections ---------------------------------------------

TEST(StepScheduleTest, ConstantAndIndexed) {
  EXPECT_EQ(StepSchedule::Constant(0.1).at(7), 0.1);
  const StepSchedule s = StepSchedule::Indexed({1.0, 0.5, 0.25});
  EXPECT_EQ(s.at(0), 1.0);
  EXPECT_EQ(s.at(2), 0.25);
  EXPECT_EQ(s.at(50), 0.25);
  EXPECT_ANY_THROW(StepSchedule::Constant(0.0));
  EXPECT_ANY_THROW(StepSchedule::Indexed({0.1, -1.0}));
  EXPECT_ANY_THROW(StepSchedule::Indexed({}));
}

TEST(ProjectionTest, SimplexExamples) {
  EXPECT_LT(MaxAbsDiff(ProjectOntoSimplex(Vec({0.6, 0.6})), Vec({0.5, 0.5})), 1e-15);
  EXPECT_LT(MaxAbsDiff(ProjectOntoSimplex(Vec({2.0, 0.0, -1.0})), Vec({1.0, 0.0, 0.0})),
            1e-15);
  const Vector inside = Vec({0.2, 0.3, 0.5});
  EXPECT_LT(MaxAbsDiff(ProjectOntoSimplex(inside), inside), 1e-15);
}

// The Euclidean projection is the closest simplex point: compare against a
// dense grid search on m = 3.
TEST(ProjectionTest, SimplexMatchesGridSearch) {
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector v = RandomVector(3, rng);
    const Vector proj = ProjectOntoSimplex(v);
    const int steps = 400;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= steps; ++i) {
      for (int j = 0; i + j <= steps; ++j) {
        const Vector t = Vec({double(i) / steps, double(j) / steps,
                              double(steps - i - j) / steps});
        best = std::min(best, (t - v).squaredNorm());
      }
    }
    EXPECT_LE((proj - v).squaredNorm(), best + 1e-12);
  }
}

TEST(ProjectionTest, Box) {
  const Projection box = BoxProjection(-1.0, 1.0);
  EXPECT_EQ(box(Vec({1.4, -3.0, 0.2})), Vec({1.0, -1.0, 0.2}));
  EXPECT_ANY_THROW(BoxProjection(1.0, -1.0));
}

// --- generic step -----------------------------------------------------------

TEST(DmdStepTest, ZeroStepOrZeroGradientIsIdentity) {
  Rng rng(2);
  const HorizonParams g = testing::RandomGaussianHorizon(3, 2, rng);
  const HorizonParams c = testing::RandomCategoricalHorizon(3, 3, rng);
  const RolloutBatch gb = RandomBatch(g, 10, rng);
  const RolloutBatch cb = RandomBatch(c, 10, rng);
  const HorizonGradient natural =
      EstimateGradient(gb, g, ExpUtility{1.0}, Coordinates::kGaussianNatural).direction;
  const HorizonGradient mean =
      EstimateGradient(gb, g, ExpUtility{1.0}, Coordinates::kGaussianMean).direction;
  const HorizonGradient cat = EstimateGradient(cb, c, ExpUtility{1.0}).direction;
  const Matrix a = testing::RandomSpd(6, rng);
  const std::vector<std::pair<DivergenceSpec, const HorizonGradient*>> gaussian_cases = {
      {QuadraticIdentity{}, &mean}, {QuadraticIdentity{}, &natural},
      {QuadraticFisher{}, &mean},   {QuadraticCustom{a}, &mean},
      {KLNatural{true}, &natural},  {KLNatural{false}, &natural}};
  for (const auto& [div, grad] : gaussian_cases) {
    EXPECT_EQ(MaxParamDiff(DmdStep(g, *grad, div, 0.0), g), 0.0);
    EXPECT_EQ(MaxParamDiff(DmdStep(g, HorizonGradient::Zero(g, grad->coordinates), div, 0.7), g),
              0.0);
  }
  for (const DivergenceSpec& div :
       {DivergenceSpec(QuadraticIdentity{}), DivergenceSpec(QuadraticFisher{}),
        DivergenceSpec(KLExpectation{})}) {
    EXPECT_EQ(MaxParamDiff(DmdStep(c, cat, div, 0.0), c), 0.0);
    EXPECT_EQ(MaxParamDiff(DmdStep(c, HorizonGradient::Zero(c, cat.coordinates), div, 0.3), c),
              0.0);
  }
}

TEST(DmdStepTest, QuadraticIdentityIsPlainGradientStep) {
  const HorizonParams p = ScalarMeans({1.0, -2.0});
  const HorizonParams out =
      DmdStep(p, MeanGradient(p, {0.5, -1.0}), QuadraticIdentity{}, 0.2);
  EXPECT_DOUBLE_EQ(out.gaussian(0).mean()[0], 0.9);
  EXPECT_DOUBLE_EQ(out.gaussian(1).mean()[0], -1.8);
}

TEST(DmdStepTest, QuadraticIdentityInNaturalCoordinates) {
  const HorizonParams p = ScalarMeans({1.0}, 2.0);
  HorizonGradient g = HorizonGradient::Zero(p, Coordinates::kGaussianNatural);
  g.steps[0].vec[0] = 1.0;
  g.steps[0].mat(0, 0) = 0.5;
  const HorizonParams out = DmdStep(p, g, QuadraticIdentity{}, 0.1);
  // eta = (0.5, -0.25) -> (0.4, -0.3): variance 1/0.6, mean 0.4/0.6
  EXPECT_NEAR(out.gaussian(0).covariance()(0, 0), 1.0 / 0.6, 1e-14);
  EXPECT_NEAR(out.gaussian(0).mean()[0], 0.4 / 0.6, 1e-14);
  g.steps[0].mat(0, 0) = -10.0;
  EXPECT_EQ(ThrownCode([&] { DmdStep(p, g, QuadraticIdentity{}, 0.1); }),
            Code(ErrorCode::kInfeasibleStep));
}

TEST(DmdStepTest, ShapeAndCombinationErrors) {
  const HorizonParams p = ScalarMeans({0.0, 0.0});
  const HorizonParams q = ScalarMeans({0.0});
  EXPECT_EQ(ThrownCode([&] { DmdStep(p, MeanGradient(q, {1.0}), QuadraticIdentity{}, 0.1); }),
            Code(ErrorCode::kShapeMismatch));
  EXPECT_EQ(ThrownCode([&] { DmdStep(p, MeanGradient(p, {1, 1}), KLExpectation{}, 0.1); }),
            Code(ErrorCode::kUnsupported));
  EXPECT_EQ(ThrownCode([&] { DmdStep(p, MeanGradient(p, {1, 1}), KLNatural{}, 0.1); }),
            Code(ErrorCode::kUnsupported));
  EXPECT_EQ(ThrownCode([&] { DmdStep(p, MeanGradient(p, {1, 1}), QuadraticIdentity{}, -1.0); }),
            Code(ErrorCode::kInvalidArgument));
  const Matrix not_spd = -Matrix::Identity(2, 2);
  EXPECT_EQ(ThrownCode([&] {
              DmdStep(p, MeanGradient(p, {1, 1}), QuadraticCustom{not_spd}, 0.1);
            }),
            Code(ErrorCode::kNotPositiveDefinite));
}

// --- projected and natural gradient ------------------------------------------

TEST(ProjectedGradientStepTest, BoxClamp) {
  const HorizonParams p = ScalarMeans({0.9});
  const HorizonParams out = ProjectedGradientStep(p, MeanGradient(p, {-0.5}), 1.0,
                                                  BoxProjection(-1.0, 1.0));
  EXPECT_EQ(out.gaussian(0).mean()[0], 1.0);
  const HorizonParams interior = ProjectedGradientStep(
      p, MeanGradient(p, {0.1}), 1.0, BoxProjection(-1.0, 1.0));
  EXPECT_DOUBLE_EQ(interior.gaussian(0).mean()[0], 0.8);
}

TEST(ProjectedGradientStepTest, CategoricalUsesSimplexProjection) {
  const HorizonParams p = HorizonParams::Repeat(CategoricalParams(Vec({0.5, 0.5})), 1);
  const HorizonParams out =
      ProjectedGradientStep(p, CategoricalGradient({Vec({-0.1, -0.1})}), 1.0);
  EXPECT_LT(MaxAbsDiff(out.categorical(0).probs(), Vec({0.5, 0.5})), 1e-15);
  const HorizonParams moved =
      ProjectedGradientStep(p, CategoricalGradient({Vec({1.0, -1.0})}), 1.0);
  EXPECT_LT(MaxAbsDiff(moved.categorical(0).probs(), Vec({0.0, 1.0})), 1e-15);
}

TEST(NaturalGradientStepTest, GaussianMeanUsesCovariance) {
  Rng rng(3);
  const HorizonParams p = testing::RandomGaussianHorizon(2, 3, rng);
  const Vector g = RandomVector(6, rng);
  const HorizonParams out = NaturalGradientStep(p, StackedMeanGradient(p, g), 0.3);
  for (int h = 0; h < 2; ++h) {
    const Vector expected =
        p.gaussian(h).mean() - 0.3 * p.gaussian(h).covariance() * g.segment(3 * h, 3);
    EXPECT_LT(MaxAbsDiff(out.gaussian(h).mean(), expected), 1e-12);
  }
  const HorizonParams ident = ScalarMeans({1.0, 2.0});
  const HorizonGradient gi = MeanGradient(ident, {0.5, 0.25});
  EXPECT_LT(MaxParamDiff(NaturalGradientStep(ident, gi, 0.4),
                         ProjectedGradientStep(ident, gi, 0.4)),
            1e-15);
  EXPECT_LT(MaxParamDiff(DmdStep(p, StackedMeanGradient(p, g), QuadraticFisher{}, 0.3), out),
            1e-15);
}

// Mean = A z for a fixed invertible A. The natural step in z uses the Fisher
// information A^T Sigma^-1 A and the chain-rule gradient A^T g; mapped back it
// must give the same distribution as the step in m.
TEST(NaturalGradientStepTest, InvariantUnderLinearReparameterization) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const GaussianParams g(RandomVector(3, rng), testing::RandomSpd(3, rng));
    const HorizonParams p({g});
    const Matrix a = testing::RandomMatrix(3, 3, rng) + 3.0 * Matrix::Identity(3, 3);
    const Vector grad_m = RandomVector(3, rng);
    const double gamma = 0.2;
    const Vector z = a.lu().solve(g.mean());
    const Matrix fisher_z = a.transpose() * g.Precision() * a;
    const Vector z_new = z - gamma * fisher_z.ldlt().solve(a.transpose() * grad_m);
    const HorizonParams out = NaturalGradientStep(p, StackedMeanGradient(p, grad_m), gamma);
    EXPECT_LT(MaxAbsDiff(out.gaussian(0).mean(), a * z_new), 1e-8);
  }
}

TEST(NaturalGradientStepTest, CategoricalFisher) {
  const HorizonParams p = HorizonParams::Repeat(CategoricalParams(Vec({0.2, 0.8})), 1);
  const Matrix f = FisherInformation(p, 0, Coordinates::kCategoricalExpectation);
  EXPECT_DOUBLE_EQ(f(0, 0), 5.0);
  EXPECT_DOUBLE_EQ(f(1, 1), 1.25);
  // theta - gamma theta .* g = (0.2 - 0.1 * 0.2 * 1, 0.8 + 0.1 * 0.8 * 0.25) = (0.18, 0.82)
  const HorizonParams out =
      NaturalGradientStep(p, CategoricalGradient({Vec({1.0, -0.25})}), 0.1);
  EXPECT_LT(MaxAbsDiff(out.categorical(0).probs(), Vec({0.18, 0.82})), 1e-15);
  const HorizonParams zero =
      HorizonParams::Repeat(CategoricalParams(Vec({0.0, 1.0})), 1);
  EXPECT_EQ(ThrownCode([&] {
              FisherInformation(zero, 0, Coordinates::kCategoricalExpectation);
            }),
            Code(ErrorCode::kNotPositiveDefinite));
}

// --- quadratic exact --------------------------------------------------------

TEST(QuadraticExactStepTest, Examples) {
  const HorizonParams p = ScalarMeans({3.0, -1.0});
  const QuadraticLoss identity{Matrix::Identity(2, 2), Vector::Zero(2), 0.0};
  EXPECT_EQ(StackMeans(QuadraticExactStep(p, identity)), Vector::Zero(2));
  const HorizonParams s = ScalarMeans({3.0});
  const QuadraticLoss scalar{Matrix::Constant(1, 1, 2.0), Vector::Constant(1, 1.0), 0.0};
  EXPECT_DOUBLE_EQ(QuadraticExactStep(s, scalar).gaussian(0).mean()[0], -0.5);
}

TEST(QuadraticExactStepTest, AgreesWithCustomDivergenceStep) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const HorizonParams p = testing::RandomGaussianHorizon(3, 2, rng);
    const QuadraticLoss loss{testing::RandomSpd(6, rng), RandomVector(6, rng), 0.0};
    const HorizonParams exact = QuadraticExactStep(p, loss);
    const Vector theta = StackMeans(p);
    const HorizonParams generic =
        DmdStep(p, StackedMeanGradient(p, loss.Gradient(theta)),
                QuadraticCustom{loss.hessian}, 1.0);
    EXPECT_LT(MaxParamDiff(exact, generic), 1e-10);
    EXPECT_LT(loss.Gradient(StackMeans(exact)).norm(), 1e-8);
  }
}

// --- exponentiated gradient -------------------------------------------------

TEST(ExponentiatedGradientTest, Examples) {
  const HorizonParams p = HorizonParams::Repeat(CategoricalParams(Vec({0.5, 0.5})), 1);
  const HorizonParams out = ExponentiatedGradientStep(
      p, CategoricalGradient({Vec({std::log(2.0), 0.0})}), 1.0);
  EXPECT_LT(MaxAbsDiff(out.categorical(0).probs(), Vec({1.0 / 3, 2.0 / 3})), 1e-15);
  const HorizonParams same =
      ExponentiatedGradientStep(p, CategoricalGradient({Vec({0.0, 0.0})}), 1.0);
  EXPECT_EQ(same.categorical(0).probs(), p.categorical(0).probs());
}

TEST(ExponentiatedGradientTest, LargeExponentsStayOnSimplex) {
  const HorizonParams p =
      HorizonParams::Repeat(CategoricalParams(Vec({0.2, 0.3, 0.5})), 2);
  const HorizonParams out = ExponentiatedGradientStep(
      p, CategoricalGradient({Vec({1e6, -1e6, 0.0}), Vec({-2e3, -2e3, 5e2})}), 1.0);
  for (int h = 0; h < 2; ++h) {
    EXPECT_NEAR(out.categorical(h).probs().sum(), 1.0, 1e-12);
    EXPECT_TRUE(out.categorical(h).probs().allFinite());
  }
  EXPECT_NEAR(out.categorical(0).probs()[1], 1.0, 1e-12);
}

TEST(ExponentiatedGradientTest, MatchesNumericKlProx) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Vector p = testing::RandomSimplex(3, rng);
    const Vector g = RandomVector(3, rng, 2.0);
    const double gamma = 0.5;
    const HorizonParams params = HorizonParams::Repeat(CategoricalParams(p), 1);
    const Vector ours =
        ExponentiatedGradientStep(params, CategoricalGradient({g}), gamma)
            .categorical(0)
            .probs();
    const Vector oracle = KlProxOracle(p, gamma * g);
    EXPECT_LT(MaxAbsDiff(ours, oracle), 1e-6);
    EXPECT_NEAR(ours.sum(), 1.0, 1e-9);
    // KL(theta || theta~) <= gamma <g, theta~ - theta>
    const double kl = (ours.array() * (ours.array() / p.array()).log()).sum();
    EXPECT_LE(kl, gamma * g.dot(p - ours) + 1e-12);
  }
}

// --- moment steps and special cases -----------------------------------------

TEST(GaussianMomentStepTest, Examples) {
  const HorizonParams p = ScalarMeans({0.0});
  const std::vector<ControlSequence> one = {
      ControlSequence::Continuous(Matrix::Constant(1, 1, 3.0))};
  EXPECT_EQ(GaussianMomentStep(p, one, Vec({1.0}), 1.0, false).gaussian(0).mean()[0], 3.0);
  const std::vector<ControlSequence> two = {
      ControlSequence::Continuous(Matrix::Constant(1, 1, 1.0)),
      ControlSequence::Continuous(Matrix::Constant(1, 1, 3.0))};
  EXPECT_DOUBLE_EQ(
      GaussianMomentStep(p, two, Vec({0.5, 0.5}), 0.5, false).gaussian(0).mean()[0], 1.0);
  EXPECT_ANY_THROW(GaussianMomentStep(p, two, Vec({0.5, 0.5}), 1.5, false));
  EXPECT_ANY_THROW(GaussianMomentStep(p, two, Vec({0.5, 0.6}), 0.5, false));
}

TEST(GaussianMomentStepTest, CovarianceRecovery) {
  const HorizonParams p = ScalarMeans({0.0}, 2.0);
  const std::vector<ControlSequence> two = {
      ControlSequence::Continuous(Matrix::Constant(1, 1, 1.0)),
      ControlSequence::Continuous(Matrix::Constant(1, 1, 3.0))};
  const HorizonParams out = GaussianMomentStep(p, two, Vec({0.5, 0.5}), 0.5, true);
  // m = 1; S = 0.5 * 2 + 0.5 * 5 = 3.5; Sigma = 2.5
  EXPECT_DOUBLE_EQ(out.gaussian(0).mean()[0], 1.0);
  EXPECT_DOUBLE_EQ(out.gaussian(0).covariance()(0, 0), 2.5);
}

TEST(CemStepTest, AllEliteGivesEmpiricalMoments) {
  Rng rng(7);
  const HorizonParams p = testing::RandomGaussianHorizon(2, 2, rng);
  const RolloutBatch batch = RandomBatch(p, 40, rng);
  const HorizonParams out = CemStep(p, batch, 10.0);
  for (int h = 0; h < 2; ++h) {
    Vector mean = Vector::Zero(2);
    Matrix second = Matrix::Zero(2, 2);
    for (const auto& s : batch.sequences) {
      mean += s.value(h) / 40.0;
      second += s.value(h) * s.value(h).transpose() / 40.0;
    }
    EXPECT_LT(MaxAbsDiff(out.gaussian(h).mean(), mean), 1e-12);
    EXPECT_LT(MaxAbsDiff(out.gaussian(h).covariance(), second - mean * mean.transpose()),
              1e-12);
  }
}

TEST(CemStepTest, SingleEliteIsInfeasibleAndEmptyIsDegenerate) {
  Rng rng(8);
  const HorizonParams p = testing::RandomGaussianHorizon(2, 1, rng);
  RolloutBatch batch = RandomBatch(p, 5, rng);
  batch.costs = {5, 1, 4, 3, 2};
  EXPECT_EQ(ThrownCode([&] { CemStep(p, batch, 1.0); }), Code(ErrorCode::kInfeasibleStep));
  EXPECT_EQ(ThrownCode([&] { CemStep(p, batch, 0.5); }),
            Code(ErrorCode::kDegenerateEstimate));
}

TEST(MppiStepTest, Examples) {
  const HorizonParams p = ScalarMeans({0.0});
  const double lambda = 2.0;
  RolloutBatch batch;
  batch.sequences = {ControlSequence::Continuous(Matrix::Constant(1, 1, 4.0)),
                     ControlSequence::Continuous(Matrix::Constant(1, 1, -8.0))};
  batch.costs = {0.0, lambda * std::log(3.0)};
  EXPECT_NEAR(MppiStep(p, batch, lambda).gaussian(0).mean()[0], 0.75 * 4 - 0.25 * 8,
              1e-14);
  batch.costs = {1.0, 1.0};
  EXPECT_DOUBLE_EQ(MppiStep(p, batch, lambda).gaussian(0).mean()[0], -2.0);
  EXPECT_EQ(MppiStep(p, batch, lambda).gaussian(0).covariance()(0, 0), 1.0);
}

TEST(SpecialCaseTest, DmdReducesToMppiAndCem) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const HorizonParams p = testing::RandomGaussianHorizon(3, 2, rng);
    const RolloutBatch batch = RandomBatch(p, 30, rng);
    const double lambda = 0.5 + trial * 0.1;
    const GradientEstimate eu =
        EstimateGradient(batch, p, ExpUtility{lambda}, Coordinates::kGaussianNatural);
    EXPECT_LT(MaxParamDiff(DmdStep(p, eu.direction, KLNatural{false}, 1.0),
                           MppiStep(p, batch, lambda)),
              1e-12);
    EXPECT_LT(MaxParamDiff(MppiStep(p, batch, lambda, 0.4),
                           GaussianMomentStep(p, batch.sequences, eu.weights, 0.4, false)),
              1e-12);
    const double c_max = AdaptiveThreshold(batch.costs, 0.5);
    const GradientEstimate plc = EstimateGradient(
        batch, p, ProbLowCost{FixedThreshold{c_max}}, Coordinates::kGaussianNatural);
    EXPECT_LT(MaxParamDiff(DmdStep(p, plc.direction, KLNatural{true}, 1.0),
                           CemStep(p, batch, c_max)),
              1e-12);
  }
}

// mu - gamma g with g recomputed from the raw samples:
// g = -sum_i w_i ((u_i, u_i u_i^T) - (m, S)).
TEST(KlMomentStepTest, KlNaturalStepMovesExpectationParameters) {
  Rng rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const HorizonParams p = testing::RandomGaussianHorizon(2, 3, rng);
    const RolloutBatch batch = RandomBatch(p, 50, rng);
    const GradientEstimate est =
        EstimateGradient(batch, p, ExpUtility{1.0}, Coordinates::kGaussianNatural);
    const double gamma = 0.05 + 0.03 * trial;
    const HorizonParams out = DmdStep(p, est.direction, KLNatural{true}, gamma);
    const Vector w = UtilityWeights(batch.costs, ExpUtility{1.0});
    for (int h = 0; h < 2; ++h) {
      const GaussianParams& g = p.gaussian(h);
      Vector g1 = Vector::Zero(3);
      Matrix g2 = Matrix::Zero(3, 3);
      for (int i = 0; i < batch.size(); ++i) {
        const Vector u = batch.sequences[i].value(h);
        g1 -= w[i] * (u - g.mean());
        g2 -= w[i] * (u * u.transpose() - g.SecondMoment());
      }
      const GaussianExpectation mu = ToExpectation(out.gaussian(h));
      EXPECT_LT(MaxAbsDiff(mu.mean, g.mean() - gamma * g1), 1e-9);
      EXPECT_LT(MaxAbsDiff(mu.second_moment, g.SecondMoment() - gamma * g2), 1e-9);
    }
  }
}

TEST(KlNaturalStepTest, InfeasibleCovarianceIsReported) {
  const HorizonParams p = ScalarMeans({0.0});
  HorizonGradient g = HorizonGradient::Zero(p, Coordinates::kGaussianNatural);
  g.steps[0].mat(0, 0) = 2.0;  // S = 1 - gamma * 2 < 0 for gamma = 1
  EXPECT_EQ(ThrownCode([&] { DmdStep(p, g, KLNatural{true}, 1.0); }),
            Code(ErrorCode::kInfeasibleStep));
  EXPECT_NO_THROW(DmdStep(p, g, KLNatural{false}, 1.0));
}

}  // namespace
}  // namespace dmdmpc
