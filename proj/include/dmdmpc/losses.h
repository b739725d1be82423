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

// Per-round losses and their sampled likelihood-ratio gradients.
//
//   expected cost:        l(theta) = E[C]
//   probability of low:   l(theta) = -log P(C <= C_max)
//   exponential utility:  l(theta) = -log E[exp(-C / lambda)]
//
// The utility losses share the estimator -sum_i w_i grad log pi(u_i) with
// w_i = U(C_i) / sum_j U(C_j).

#ifndef DMDMPC_LOSSES_H_
#define DMDMPC_LOSSES_H_

#include <span>
#include <variant>

#include "dmdmpc/core.h"
#include "dmdmpc/simulation.h"

namespace dmdmpc {

struct ExpectedCost {
  // Subtract the empirical mean cost before weighting the scores.
  bool use_baseline = true;
};

struct FixedThreshold {
  double c_max;
};

// C_max is the largest cost among the ceil(fraction * n) cheapest samples.
struct EliteFraction {
  double fraction;
};

struct ProbLowCost {
  std::variant<FixedThreshold, EliteFraction> threshold;
};

struct ExpUtility {
  double lambda;
};

using LossSpec = std::variant<ExpectedCost, ProbLowCost, ExpUtility>;

void ValidateLoss(const LossSpec& loss);
bool IsUtilityLoss(const LossSpec& loss);

double AdaptiveThreshold(std::span<const double> costs, double elite_fraction);

// Threshold actually used by an indicator loss on these costs.
double ResolveThreshold(const ProbLowCost& loss, std::span<const double> costs);

// Normalized utility weights (sum to one). Throws kDegenerateEstimate when
// every utility is zero, kInvalidArgument for ExpectedCost.
Vector UtilityWeights(std::span<const double> costs, const LossSpec& loss);

struct GradientEstimate {
  HorizonGradient direction;
  // Utility losses: the normalized weights w_i. Expected cost: the score
  // coefficients (C_i - b) / n.
  Vector weights;
  double baseline = 0.0;
  double effective_sample_size = 0.0;
  // Sample estimate of l(theta) at the sampling distribution.
  double loss_value = 0.0;
};

GradientEstimate EstimateGradient(const RolloutBatch& batch,
                                  const HorizonParams& params,
                                  const LossSpec& loss,
                                  Coordinates coordinates);

inline GradientEstimate EstimateGradient(const RolloutBatch& batch,
                                         const HorizonParams& params,
                                         const LossSpec& loss) {
  return EstimateGradient(batch, params, loss,
                          DefaultCoordinates(params.family()));
}

// dst += alpha * grad log pi(seq), without materializing the score.
void AccumulateScore(const HorizonParams& params, const ControlSequence& seq,
                     Coordinates coordinates, double alpha,
                     HorizonGradient& dst);

}  // namespace dmdmpc

#endif  // DMDMPC_LOSSES_H_
