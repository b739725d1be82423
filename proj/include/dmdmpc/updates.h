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

// Proximal updates theta = argmin <gamma g, theta> + D(theta || theta~) for the
// supported divergences, and the CEM / MPPI reference updates.

#ifndef DMDMPC_UPDATES_H_
#define DMDMPC_UPDATES_H_

#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "dmdmpc/analytic.h"
#include "dmdmpc/core.h"
#include "dmdmpc/losses.h"
#include "dmdmpc/simulation.h"

namespace dmdmpc {

// 1/2 ||theta - theta~||^2 in the gradient's coordinates.
struct QuadraticIdentity {};
// 1/2 (theta - theta~)^T F (theta - theta~), F the Fisher information.
struct QuadraticFisher {};
// 1/2 (theta - theta~)^T A (theta - theta~) over the stacked Gaussian means.
struct QuadraticCustom {
  Matrix a;
};
// KL(theta || theta~) on categorical probabilities (exponentiated gradient).
struct KLExpectation {};
// KL between Gaussians, i.e. the Bregman divergence of the log-partition in
// natural parameters. With update_covariance false only the mean moves.
struct KLNatural {
  bool update_covariance = true;
};

using DivergenceSpec = std::variant<QuadraticIdentity, QuadraticFisher,
                                    QuadraticCustom, KLExpectation, KLNatural>;

class StepSchedule {
 public:
  static StepSchedule Constant(double gamma);
  // Round t uses gammas[t]; rounds past the end reuse the last entry.
  static StepSchedule Indexed(std::vector<double> gammas);

  double at(int t) const;
  bool constant() const { return gammas_.size() == 1; }

 private:
  explicit StepSchedule(std::vector<double> gammas);
  std::vector<double> gammas_;
};

// Euclidean projection applied to each step's parameter vector.
using Projection = std::function<Vector(const Vector&)>;

Vector ProjectOntoSimplex(const Vector& v);
Projection BoxProjection(double lo, double hi);

// Dispatches to the updates below. gamma == 0 or a zero gradient returns the
// parameters unchanged. Throws kInfeasibleStep when the result leaves the
// parameter set and kUnsupported for divergence / coordinate pairs without a
// closed form.
HorizonParams DmdStep(const HorizonParams& params, const HorizonGradient& grad,
                      const DivergenceSpec& divergence, double gamma);

// projection(theta~ - gamma g) per step. Gaussian: mean coordinates.
// Categorical: probability vectors (an empty projection means the simplex).
HorizonParams ProjectedGradientStep(const HorizonParams& params,
                                    const HorizonGradient& grad, double gamma,
                                    const Projection& projection = {});

// Per-step closed-form Fisher information in the given coordinates.
// kGaussianMean: Sigma^-1. kCategoricalExpectation: diag(1 / theta).
Matrix FisherInformation(const HorizonParams& params, int h,
                         Coordinates coordinates);

// theta~ - gamma F^-1 g. Categorical results are projected onto the simplex.
HorizonParams NaturalGradientStep(const HorizonParams& params,
                                  const HorizonGradient& grad, double gamma);

// Exact minimizer -R^-1 r of a quadratic loss over the stacked means;
// covariances are kept.
HorizonParams QuadraticExactStep(const HorizonParams& params,
                                 const QuadraticLoss& loss);

HorizonParams ExponentiatedGradientStep(const HorizonParams& params,
                                        const HorizonGradient& grad,
                                        double gamma);

// Convex combination of sufficient statistics:
//   m <- (1 - gamma) m~ + gamma sum_i w_i u_i
//   S <- (1 - gamma) S~ + gamma sum_i w_i u_i u_i^T   (update_covariance)
// Requires gamma in (0, 1] and weights summing to one.
HorizonParams GaussianMomentStep(const HorizonParams& params,
                                 std::span<const ControlSequence> sequences,
                                 const Vector& weights, double gamma,
                                 bool update_covariance);

// Elite moments: indicator weights on cost <= c_max, gamma = 1.
HorizonParams CemStep(const HorizonParams& params, const RolloutBatch& batch,
                      double c_max);

// Mean-only update with exponential-utility weights.
HorizonParams MppiStep(const HorizonParams& params, const RolloutBatch& batch,
                       double lambda, double gamma = 1.0);

// Gradient with respect to the stacked means, as per-step mean coordinates.
HorizonGradient StackedMeanGradient(const HorizonParams& params,
                                    const Vector& stacked);

}  // namespace dmdmpc

#endif  // DMDMPC_UPDATES_H_
