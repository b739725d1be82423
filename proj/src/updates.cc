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

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>

#include "dmdmpc/error.h"
#include "overloaded.h"

namespace dmdmpc {
namespace {

void CheckGradient(const HorizonParams& params, const HorizonGradient& grad) {
  Require(grad.horizon() == params.horizon(), ErrorCode::kShapeMismatch,
          "gradient horizon does not match the parameters");
  const bool categorical =
      grad.coordinates == Coordinates::kCategoricalExpectation;
  Require(categorical == (params.family() == Family::kCategorical),
          ErrorCode::kShapeMismatch,
          "gradient coordinates do not match the distribution family");
  const int d = params.control_dim();
  for (const StepGradient& s : grad.steps) {
    Require(s.vec.size() == d, ErrorCode::kShapeMismatch,
            "gradient step dimension mismatch");
    if (grad.coordinates == Coordinates::kGaussianNatural) {
      Require(s.mat.rows() == d && s.mat.cols() == d, ErrorCode::kShapeMismatch,
              "gradient step dimension mismatch");
    }
  }
}

void CheckGamma(double gamma) {
  Require(gamma >= 0.0 && std::isfinite(gamma), ErrorCode::kInvalidArgument,
          "step size must be finite and non-negative");
}

// Builds a Gaussian from a recovered covariance, mapping an SPD failure to an
// infeasible step.
GaussianParams FeasibleGaussian(Vector mean, const Matrix& covariance,
                                int step) {
  try {
    return GaussianParams(std::move(mean),
                          0.5 * (covariance + covariance.transpose()));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNotPositiveDefinite) throw;
    Fail(ErrorCode::kInfeasibleStep,
         "recovered covariance is not positive definite at horizon step " +
             std::to_string(step));
  }
}

HorizonParams MapSteps(const HorizonParams& params,
                       const std::function<BasicParams(int)>& step_fn) {
  std::vector<BasicParams> steps;
  steps.reserve(params.horizon());
  for (int h = 0; h < params.horizon(); ++h) steps.push_back(step_fn(h));
  return HorizonParams(std::move(steps));
}

HorizonParams KLNaturalStep(const HorizonParams& params,
                            const HorizonGradient& grad, double gamma,
                            bool update_covariance) {
  Require(grad.coordinates == Coordinates::kGaussianNatural,
          ErrorCode::kUnsupported,
          "KL natural step needs a gradient in natural coordinates");
  return MapSteps(params, [&](int h) -> BasicParams {
    const GaussianParams& g = params.gaussian(h);
    const StepGradient& d = grad.steps[h];
    Vector mean = g.mean() - gamma * d.vec;
    if (!update_covariance) return GaussianParams(std::move(mean), g.covariance());
    const Matrix second = g.SecondMoment() - gamma * d.mat;
    const Matrix cov = second - mean * mean.transpose();
    return FeasibleGaussian(std::move(mean), cov, h);
  });
}

HorizonParams NaturalParameterStep(const HorizonParams& params,
                                   const HorizonGradient& grad, double gamma) {
  return MapSteps(params, [&](int h) -> BasicParams {
    GaussianNatural eta = ToNatural(params.gaussian(h));
    eta.linear -= gamma * grad.steps[h].vec;
    eta.quadratic -= gamma * grad.steps[h].mat;
    try {
      return FromNatural(eta);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNotPositiveDefinite) throw;
      Fail(ErrorCode::kInfeasibleStep,
           "natural parameter left the feasible set at horizon step " +
               std::to_string(h));
    }
  });
}

HorizonParams QuadraticCustomStep(const HorizonParams& params,
                                  const HorizonGradient& grad,
                                  const Matrix& a, double gamma) {
  Require(grad.coordinates == Coordinates::kGaussianMean,
          ErrorCode::kUnsupported,
          "custom quadratic divergence needs gradients in mean coordinates");
  const int m = params.control_dim();
  const int total = params.horizon() * m;
  Require(a.rows() == total && a.cols() == total, ErrorCode::kShapeMismatch,
          "custom divergence matrix must match the stacked mean dimension");
  Require((a - a.transpose()).cwiseAbs().maxCoeff() <=
              1e-10 * std::max(1.0, a.cwiseAbs().maxCoeff()),
          ErrorCode::kInvalidArgument, "custom divergence matrix not symmetric");
  Eigen::LLT<Matrix> llt(a);
  Require(llt.info() == Eigen::Success, ErrorCode::kNotPositiveDefinite,
          "custom divergence matrix must be positive definite");
  Vector g(total);
  for (int h = 0; h < params.horizon(); ++h) {
    g.segment(h * m, m) = grad.steps[h].vec;
  }
  return WithMeans(params, StackMeans(params) - gamma * llt.solve(g));
}

}  // namespace

// ---------------------------------------------------------------------------
// StepSchedule

StepSchedule::StepSchedule(std::vector<double> gammas)
    : gammas_(std::move(gammas)) {
  Require(!gammas_.empty(), ErrorCode::kInvalidArgument,
          "step schedule is empty");
  for (double g : gammas_) {
    Require(g > 0.0 && std::isfinite(g), ErrorCode::kInvalidArgument,
            "step sizes must be positive");
  }
}

StepSchedule StepSchedule::Constant(double gamma) {
  return StepSchedule(std::vector<double>{gamma});
}

StepSchedule StepSchedule::Indexed(std::vector<double> gammas) {
  return StepSchedule(std::move(gammas));
}

double StepSchedule::at(int t) const {
  Require(t >= 0, ErrorCode::kInvalidArgument, "negative round index");
  return gammas_[std::min<size_t>(t, gammas_.size() - 1)];
}

// ---------------------------------------------------------------------------
// Projections

Vector ProjectOntoSimplex(const Vector& v) {
  Require(v.size() >= 1, ErrorCode::kInvalidArgument, "empty vector");
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0;
  double tau = 0.0;
  for (size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double candidate = (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) tau = candidate;
  }
  Vector out = (v.array() - tau).max(0.0);
  return out / out.sum();
}

Projection BoxProjection(double lo, double hi) {
  Require(lo <= hi, ErrorCode::kInvalidArgument, "box bounds out of order");
  return [lo, hi](const Vector& v) -> Vector {
    return v.cwiseMax(lo).cwiseMin(hi);
  };
}

// ---------------------------------------------------------------------------
// Steps

HorizonParams DmdStep(const HorizonParams& params, const HorizonGradient& grad,
                      const DivergenceSpec& divergence, double gamma) {
  CheckGamma(gamma);
  CheckGradient(params, grad);
  if (gamma == 0.0 || grad.IsZero()) return params;
  const Coordinates coords = grad.coordinates;
  return std::visit(Overloaded{
      [&](const QuadraticIdentity&) {
        if (coords == Coordinates::kGaussianNatural) {
          return NaturalParameterStep(params, grad, gamma);
        }
        return ProjectedGradientStep(params, grad, gamma);
      },
      [&](const QuadraticFisher&) {
        Require(coords != Coordinates::kGaussianNatural, ErrorCode::kUnsupported,
                "Fisher divergence is not implemented for natural coordinates");
        return NaturalGradientStep(params, grad, gamma);
      },
      [&](const QuadraticCustom& c) {
        return QuadraticCustomStep(params, grad, c.a, gamma);
      },
      [&](const KLExpectation&) {
        Require(coords == Coordinates::kCategoricalExpectation,
                ErrorCode::kUnsupported,
                "KL in expectation parameters is implemented for categoricals");
        return ExponentiatedGradientStep(params, grad, gamma);
      },
      [&](const KLNatural& k) {
        return KLNaturalStep(params, grad, gamma, k.update_covariance);
      }}, divergence);
}

HorizonParams ProjectedGradientStep(const HorizonParams& params,
                                    const HorizonGradient& grad, double gamma,
                                    const Projection& projection) {
  CheckGamma(gamma);
  CheckGradient(params, grad);
  const Projection project =
      projection ? projection
                 : (params.family() == Family::kCategorical
                        ? Projection(ProjectOntoSimplex)
                        : Projection([](const Vector& v) { return v; }));
  if (params.family() == Family::kCategorical) {
    return MapSteps(params, [&](int h) -> BasicParams {
      Vector theta =
          project(params.categorical(h).probs() - gamma * grad.steps[h].vec);
      // Clip round-off so the result passes the simplex validation.
      theta = theta.cwiseMax(0.0);
      return CategoricalParams(theta / theta.sum());
    });
  }
  Require(grad.coordinates == Coordinates::kGaussianMean,
          ErrorCode::kUnsupported,
          "projected gradient step needs gradients in mean coordinates");
  return MapSteps(params, [&](int h) -> BasicParams {
    const GaussianParams& g = params.gaussian(h);
    return GaussianParams(project(g.mean() - gamma * grad.steps[h].vec),
                          g.covariance());
  });
}

Matrix FisherInformation(const HorizonParams& params, int h,
                         Coordinates coordinates) {
  Require(h >= 0 && h < params.horizon(), ErrorCode::kInvalidArgument,
          "horizon index out of range");
  switch (coordinates) {
    case Coordinates::kGaussianMean:
      return params.gaussian(h).Precision();
    case Coordinates::kCategoricalExpectation: {
      const Vector& p = params.categorical(h).probs();
      Require((p.array() > 0.0).all(), ErrorCode::kNotPositiveDefinite,
              "singular Fisher block: zero-probability category");
      return p.cwiseInverse().asDiagonal();
    }
    case Coordinates::kGaussianNatural:
      break;
  }
  Fail(ErrorCode::kUnsupported,
       "Fisher information is not implemented for natural coordinates");
}

HorizonParams NaturalGradientStep(const HorizonParams& params,
                                  const HorizonGradient& grad, double gamma) {
  CheckGamma(gamma);
  CheckGradient(params, grad);
  switch (grad.coordinates) {
    case Coordinates::kGaussianMean:
      return MapSteps(params, [&](int h) -> BasicParams {
        const GaussianParams& g = params.gaussian(h);
        Eigen::LLT<Matrix> fisher(FisherInformation(params, h, grad.coordinates));
        Require(fisher.info() == Eigen::Success, ErrorCode::kNotPositiveDefinite,
                "singular Fisher block");
        return GaussianParams(g.mean() - gamma * fisher.solve(grad.steps[h].vec),
                              g.covariance());
      });
    case Coordinates::kCategoricalExpectation:
      // F^-1 g = theta .* g; zero-probability entries stay at zero.
      return MapSteps(params, [&](int h) -> BasicParams {
        const Vector& p = params.categorical(h).probs();
        Vector theta = ProjectOntoSimplex(
            p - gamma * p.cwiseProduct(grad.steps[h].vec));
        theta = theta.cwiseMax(0.0);
        return CategoricalParams(theta / theta.sum());
      });
    case Coordinates::kGaussianNatural:
      break;
  }
  Fail(ErrorCode::kUnsupported,
       "natural gradient step is not implemented for natural coordinates");
}

HorizonParams QuadraticExactStep(const HorizonParams& params,
                                 const QuadraticLoss& loss) {
  Require(params.family() == Family::kGaussian, ErrorCode::kUnsupported,
          "quadratic exact step needs a Gaussian horizon");
  Require(loss.linear.size() == params.horizon() * params.control_dim(),
          ErrorCode::kShapeMismatch,
          "quadratic loss does not match the stacked mean dimension");
  return WithMeans(params, loss.Minimizer());
}

HorizonParams ExponentiatedGradientStep(const HorizonParams& params,
                                        const HorizonGradient& grad,
                                        double gamma) {
  CheckGamma(gamma);
  CheckGradient(params, grad);
  Require(params.family() == Family::kCategorical, ErrorCode::kUnsupported,
          "exponentiated gradient needs a categorical horizon");
  return MapSteps(params, [&](int h) -> BasicParams {
    const Vector& p = params.categorical(h).probs();
    const Vector& g = grad.steps[h].vec;
    Vector logits(p.size());
    double max_logit = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      logits[i] = p[i] > 0.0 ? std::log(p[i]) - gamma * g[i]
                             : -std::numeric_limits<double>::infinity();
      max_logit = std::max(max_logit, logits[i]);
    }
    Vector theta = (logits.array() - max_logit).exp();
    return CategoricalParams(theta / theta.sum());
  });
}

HorizonParams GaussianMomentStep(const HorizonParams& params,
                                 std::span<const ControlSequence> sequences,
                                 const Vector& weights, double gamma,
                                 bool update_covariance) {
  Require(params.family() == Family::kGaussian, ErrorCode::kUnsupported,
          "moment step needs a Gaussian horizon");
  Require(gamma > 0.0 && gamma <= 1.0, ErrorCode::kInvalidArgument,
          "moment step needs gamma in (0, 1]");
  Require(static_cast<Eigen::Index>(sequences.size()) == weights.size() &&
              weights.size() >= 1,
          ErrorCode::kShapeMismatch, "one weight per sequence required");
  Require(std::abs(weights.sum() - 1.0) <= 1e-9, ErrorCode::kInvalidArgument,
          "moment step weights must sum to one");
  const int d = params.control_dim();
  for (const ControlSequence& s : sequences) {
    Require(!s.discrete() && s.horizon() == params.horizon() &&
                s.value(0).size() == d,
            ErrorCode::kShapeMismatch, "sequence does not match the horizon");
  }
  return MapSteps(params, [&](int h) -> BasicParams {
    const GaussianParams& g = params.gaussian(h);
    Vector mean_acc = Vector::Zero(d);
    Matrix second_acc = Matrix::Zero(d, d);
    for (size_t i = 0; i < sequences.size(); ++i) {
      const double w = weights[static_cast<Eigen::Index>(i)];
      if (w == 0.0) continue;
      const auto u = sequences[i].value(h);
      mean_acc.noalias() += w * u;
      if (update_covariance) second_acc.noalias() += w * (u * u.transpose());
    }
    Vector mean = (1.0 - gamma) * g.mean() + gamma * mean_acc;
    if (!update_covariance) return GaussianParams(std::move(mean), g.covariance());
    const Matrix second = (1.0 - gamma) * g.SecondMoment() + gamma * second_acc;
    const Matrix cov = second - mean * mean.transpose();
    return FeasibleGaussian(std::move(mean), cov, h);
  });
}

HorizonParams CemStep(const HorizonParams& params, const RolloutBatch& batch,
                      double c_max) {
  const Vector weights =
      UtilityWeights(batch.costs, ProbLowCost{FixedThreshold{c_max}});
  return GaussianMomentStep(params, batch.sequences, weights, 1.0, true);
}

HorizonParams MppiStep(const HorizonParams& params, const RolloutBatch& batch,
                       double lambda, double gamma) {
  const Vector weights = UtilityWeights(batch.costs, ExpUtility{lambda});
  return GaussianMomentStep(params, batch.sequences, weights, gamma, false);
}

HorizonGradient StackedMeanGradient(const HorizonParams& params,
                                    const Vector& stacked) {
  const int m = params.control_dim();
  Require(params.family() == Family::kGaussian, ErrorCode::kUnsupported,
          "stacked mean gradient needs a Gaussian horizon");
  Require(stacked.size() == params.horizon() * m, ErrorCode::kShapeMismatch,
          "stacked gradient dimension mismatch");
  HorizonGradient grad = HorizonGradient::Zero(params, Coordinates::kGaussianMean);
  for (int h = 0; h < params.horizon(); ++h) {
    grad.steps[h].vec = stacked.segment(h * m, m);
  }
  return grad;
}

}  // namespace dmdmpc
