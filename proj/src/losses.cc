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

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dmdmpc/error.h"
#include "overloaded.h"

namespace dmdmpc {

void ValidateLoss(const LossSpec& loss) {
  std::visit(Overloaded{
      [](const ExpectedCost&) {},
      [](const ProbLowCost& p) {
        std::visit(Overloaded{
            [](const FixedThreshold& t) {
              Require(std::isfinite(t.c_max), ErrorCode::kInvalidArgument,
                      "fixed threshold must be finite");
            },
            [](const EliteFraction& e) {
              Require(e.fraction > 0.0 && e.fraction <= 1.0,
                      ErrorCode::kInvalidArgument,
                      "elite fraction must lie in (0, 1]");
            }}, p.threshold);
      },
      [](const ExpUtility& e) {
        Require(e.lambda > 0.0 && std::isfinite(e.lambda),
                ErrorCode::kInvalidArgument, "lambda must be positive");
      }}, loss);
}

bool IsUtilityLoss(const LossSpec& loss) {
  return !std::holds_alternative<ExpectedCost>(loss);
}

double AdaptiveThreshold(std::span<const double> costs, double elite_fraction) {
  Require(!costs.empty(), ErrorCode::kInvalidArgument,
          "adaptive threshold: no costs");
  Require(elite_fraction > 0.0 && elite_fraction <= 1.0,
          ErrorCode::kInvalidArgument, "elite fraction must lie in (0, 1]");
  const auto n = static_cast<long>(costs.size());
  // The small slack keeps products like 1e-3 * 1000 from rounding up to 2.
  long elites = static_cast<long>(std::ceil(elite_fraction * n - 1e-9));
  elites = std::clamp(elites, 1L, n);
  std::vector<double> sorted(costs.begin(), costs.end());
  std::nth_element(sorted.begin(), sorted.begin() + (elites - 1), sorted.end());
  return sorted[elites - 1];
}

double ResolveThreshold(const ProbLowCost& loss, std::span<const double> costs) {
  return std::visit(Overloaded{
      [](const FixedThreshold& t) { return t.c_max; },
      [&](const EliteFraction& e) { return AdaptiveThreshold(costs, e.fraction); }},
      loss.threshold);
}

namespace {

// Unnormalized utilities together with the log of the shift that was factored
// out (exp utility: min C / lambda, indicator: 0).
struct Utilities {
  Vector values;
  double log_shift = 0.0;
};

Utilities ComputeUtilities(std::span<const double> costs, const LossSpec& loss) {
  Require(!costs.empty(), ErrorCode::kInvalidArgument, "utility: no costs");
  const auto n = static_cast<Eigen::Index>(costs.size());
  Utilities u;
  u.values.resize(n);
  if (const auto* plc = std::get_if<ProbLowCost>(&loss)) {
    const double c_max = ResolveThreshold(*plc, costs);
    for (Eigen::Index i = 0; i < n; ++i) {
      u.values[i] = std::isfinite(costs[i]) && costs[i] <= c_max ? 1.0 : 0.0;
    }
  } else if (const auto* eu = std::get_if<ExpUtility>(&loss)) {
    double c_min = std::numeric_limits<double>::infinity();
    for (double c : costs) {
      if (!std::isnan(c)) c_min = std::min(c_min, c);
    }
    if (!std::isfinite(c_min)) {
      Fail(ErrorCode::kDegenerateEstimate,
           "exponential utility: every sampled cost is infinite");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const double c = costs[i];
      u.values[i] = std::isnan(c) ? 0.0 : std::exp(-(c - c_min) / eu->lambda);
    }
    u.log_shift = c_min / eu->lambda;
  } else {
    Fail(ErrorCode::kInvalidArgument, "expected cost has no utility weights");
  }
  if (!(u.values.sum() > 0.0)) {
    Fail(ErrorCode::kDegenerateEstimate,
         "all sampled utilities are zero (every cost above the threshold)");
  }
  return u;
}

}  // namespace

Vector UtilityWeights(std::span<const double> costs, const LossSpec& loss) {
  ValidateLoss(loss);
  const Utilities u = ComputeUtilities(costs, loss);
  return u.values / u.values.sum();
}

void AccumulateScore(const HorizonParams& params, const ControlSequence& seq,
                     Coordinates coordinates, double alpha,
                     HorizonGradient& dst) {
  Require(dst.coordinates == coordinates && dst.horizon() == params.horizon() &&
              seq.horizon() == params.horizon(),
          ErrorCode::kShapeMismatch, "score accumulation shape mismatch");
  for (int h = 0; h < params.horizon(); ++h) {
    StepGradient& out = dst.steps[h];
    switch (coordinates) {
      case Coordinates::kGaussianNatural: {
        const GaussianParams& g = params.gaussian(h);
        const auto u = seq.value(h);
        out.vec.noalias() += alpha * (u - g.mean());
        out.mat.noalias() += alpha * (u * u.transpose() - g.SecondMoment());
        break;
      }
      case Coordinates::kGaussianMean: {
        const GaussianParams& g = params.gaussian(h);
        out.vec.noalias() += alpha * g.cholesky().solve(seq.value(h) - g.mean());
        break;
      }
      case Coordinates::kCategoricalExpectation: {
        const CategoricalParams& c = params.categorical(h);
        const int u = seq.index(h);
        Require(c.probs()[u] > 0.0, ErrorCode::kInvalidArgument,
                "control has probability zero");
        const double p = std::max(c.probs()[u], kProbabilityFloor);
        out.vec[u] += alpha / p;
        break;
      }
    }
  }
}

namespace {

// direction += sum_i alpha_i grad log pi(seq_i). The weighted sums of the
// sufficient statistics are formed first and the parameter terms subtracted
// once per step.
void AccumulateWeightedScores(const HorizonParams& params,
                              const std::vector<ControlSequence>& sequences,
                              const Vector& alpha, HorizonGradient& direction) {
  const int horizon = params.horizon();
  const int d = params.control_dim();
  if (direction.coordinates == Coordinates::kCategoricalExpectation) {
    for (size_t i = 0; i < sequences.size(); ++i) {
      const double a = alpha[static_cast<Eigen::Index>(i)];
      if (a == 0.0) continue;
      for (int h = 0; h < horizon; ++h) {
        const int u = sequences[i].index(h);
        const double p = params.categorical(h).probs()[u];
        Require(p > 0.0, ErrorCode::kInvalidArgument,
                "control has probability zero");
        direction.steps[h].vec[u] += a / std::max(p, kProbabilityFloor);
      }
    }
    return;
  }
  const bool natural = direction.coordinates == Coordinates::kGaussianNatural;
  const double alpha_sum = alpha.sum();
  std::vector<Vector> first(horizon, Vector::Zero(d));
  std::vector<Matrix> second(natural ? horizon : 0, Matrix::Zero(d, d));
  for (size_t i = 0; i < sequences.size(); ++i) {
    const double a = alpha[static_cast<Eigen::Index>(i)];
    if (a == 0.0) continue;
    const ControlSequence& seq = sequences[i];
    for (int h = 0; h < horizon; ++h) {
      const auto u = seq.value(h);
      first[h].noalias() += a * u;
      if (natural) second[h].selfadjointView<Eigen::Lower>().rankUpdate(u, a);
    }
  }
  for (int h = 0; h < horizon; ++h) {
    const GaussianParams& g = params.gaussian(h);
    StepGradient& out = direction.steps[h];
    if (natural) {
      out.vec += first[h] - alpha_sum * g.mean();
      const Matrix full = second[h].selfadjointView<Eigen::Lower>();
      out.mat += full - alpha_sum * g.SecondMoment();
    } else {
      out.vec += g.cholesky().solve(first[h] - alpha_sum * g.mean());
    }
  }
}

void CheckSequences(const HorizonParams& params,
                    const std::vector<ControlSequence>& sequences) {
  const bool discrete = params.family() == Family::kCategorical;
  for (const ControlSequence& seq : sequences) {
    Require(seq.horizon() == params.horizon() && seq.discrete() == discrete,
            ErrorCode::kShapeMismatch, "sequence does not match the horizon");
    if (!discrete) {
      Require(seq.value(0).size() == params.control_dim(),
              ErrorCode::kShapeMismatch, "control dimension mismatch");
    } else {
      for (int h = 0; h < seq.horizon(); ++h) {
        Require(seq.index(h) >= 0 && seq.index(h) < params.control_dim(),
                ErrorCode::kShapeMismatch, "category index out of range");
      }
    }
  }
}

}  // namespace

GradientEstimate EstimateGradient(const RolloutBatch& batch,
                                  const HorizonParams& params,
                                  const LossSpec& loss,
                                  Coordinates coordinates) {
  ValidateLoss(loss);
  const int n = batch.size();
  Require(n >= 1, ErrorCode::kInvalidArgument, "gradient: empty batch");
  Require(static_cast<int>(batch.sequences.size()) == n,
          ErrorCode::kShapeMismatch, "gradient: batch sequences/costs mismatch");
  Require((params.family() == Family::kGaussian) ==
              (coordinates != Coordinates::kCategoricalExpectation),
          ErrorCode::kUnsupported,
          "gradient coordinates do not match the distribution family");
  CheckSequences(params, batch.sequences);

  GradientEstimate est{HorizonGradient::Zero(params, coordinates), Vector(n)};
  const std::span<const double> costs(batch.costs);

  if (const auto* ec = std::get_if<ExpectedCost>(&loss)) {
    double mean = 0.0;
    for (double c : costs) {
      if (!std::isfinite(c)) {
        Fail(ErrorCode::kDegenerateEstimate,
             "expected cost: a rollout produced a non-finite cost");
      }
      mean += c;
    }
    mean /= n;
    est.baseline = ec->use_baseline ? mean : 0.0;
    for (int i = 0; i < n; ++i) est.weights[i] = (costs[i] - est.baseline) / n;
    est.effective_sample_size = n;
    est.loss_value = mean;
    AccumulateWeightedScores(params, batch.sequences, est.weights,
                             est.direction);
    return est;
  }

  const Utilities u = ComputeUtilities(costs, loss);
  const double total = u.values.sum();
  est.weights = u.values / total;
  est.effective_sample_size = 1.0 / est.weights.squaredNorm();
  est.loss_value = u.log_shift - std::log(total / n);
  AccumulateWeightedScores(params, batch.sequences, -est.weights,
                           est.direction);
  return est;
}

}  // namespace dmdmpc
