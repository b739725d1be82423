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

// Control distributions over a planning horizon. A horizon distribution is a
// product of independent per-step distributions, all from the same family:
// multivariate Gaussians over R^m or categoricals over {0, ..., m-1}.

#ifndef DMDMPC_CORE_H_
#define DMDMPC_CORE_H_

#include <optional>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace dmdmpc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Random source used everywhere a seeded stream is required.
using Rng = std::mt19937_64;

// Probabilities below this floor are clamped (then renormalized) before any
// log-probability evaluation.
inline constexpr double kProbabilityFloor = 1e-12;

// Gaussian N(mean, covariance). The Cholesky factor is computed once at
// construction; a covariance that does not factor is rejected.
class GaussianParams {
 public:
  GaussianParams(Vector mean, Matrix covariance);

  // Isotropic covariance std^2 I.
  static GaussianParams Isotropic(Vector mean, double std_dev);

  int dim() const { return static_cast<int>(mean_.size()); }
  const Vector& mean() const { return mean_; }
  const Matrix& covariance() const { return covariance_; }
  const Eigen::LLT<Matrix>& cholesky() const { return llt_; }

  Matrix SecondMoment() const;
  Matrix Precision() const;
  double LogDeterminant() const;

 private:
  Vector mean_;
  Matrix covariance_;
  Eigen::LLT<Matrix> llt_;
};

// Categorical distribution given by its probability vector (the expectation
// parameter of the one-hot sufficient statistic).
class CategoricalParams {
 public:
  explicit CategoricalParams(Vector probs);

  static CategoricalParams Uniform(int num_categories);

  int size() const { return static_cast<int>(probs_.size()); }
  const Vector& probs() const { return probs_; }

  // Probabilities with the floor applied and renormalized.
  Vector Guarded() const;

 private:
  Vector probs_;
};

using BasicParams = std::variant<GaussianParams, CategoricalParams>;

enum class Family { kGaussian, kCategorical };

Family FamilyOf(const BasicParams& params);

// The decision variable: one basic distribution per planning step.
class HorizonParams {
 public:
  explicit HorizonParams(std::vector<BasicParams> steps);

  static HorizonParams Repeat(const BasicParams& params, int horizon);

  int horizon() const { return static_cast<int>(steps_.size()); }
  Family family() const { return family_; }
  // Control dimension (Gaussian) or number of categories (categorical).
  int control_dim() const { return control_dim_; }

  const std::vector<BasicParams>& steps() const { return steps_; }
  const BasicParams& step(int h) const { return steps_[h]; }
  const GaussianParams& gaussian(int h) const;
  const CategoricalParams& categorical(int h) const;

 private:
  std::vector<BasicParams> steps_;
  Family family_;
  int control_dim_;
};

// A single planned control: a real vector or a category index.
struct ControlRef {
  std::span<const double> value;
  int index = -1;
};

class ControlSequence {
 public:
  // Columns of `controls` are the per-step control vectors (m x H).
  static ControlSequence Continuous(Matrix controls);
  static ControlSequence Discrete(std::vector<int> indices);

  int horizon() const;
  bool discrete() const { return discrete_; }

  ControlRef at(int h) const;
  Eigen::Map<const Vector> value(int h) const;
  int index(int h) const { return indices_[h]; }

  const Matrix& values() const { return values_; }
  const std::vector<int>& indices() const { return indices_; }

  bool operator==(const ControlSequence& other) const;

 private:
  bool discrete_ = false;
  Matrix values_;
  std::vector<int> indices_;
};

// Fill rule for the tail step when shifting: repeat the previous last step, or
// reset it to a default distribution.
struct ShiftPolicy {
  std::optional<BasicParams> fill;

  static ShiftPolicy RepeatLast() { return {}; }
  static ShiftPolicy Default(BasicParams params) { return {std::move(params)}; }
};

// Advance the plan by one step: step h takes step h+1, the tail is filled
// according to `policy`.
HorizonParams Shift(const HorizonParams& params, const ShiftPolicy& policy);

// n open-loop control sequences, independent across samples and steps.
std::vector<ControlSequence> SampleControls(const HorizonParams& params, int n,
                                            Rng& rng);

// Gaussian: the mean sequence. Categorical: per-step argmax, ties to the
// lowest index.
ControlSequence Mode(const HorizonParams& params);

// Coordinates in which a gradient (or score) is expressed.
//  kGaussianNatural: natural parameter (S^-1 m, -1/2 S^-1); the score is
//    phi(u) - mu = (u - m, u u^T - S) with S the second moment.
//  kGaussianMean: the mean with the covariance held fixed; score
//    Sigma^-1 (u - m).
//  kCategoricalExpectation: the probability vector; score e_u / theta.
enum class Coordinates { kGaussianNatural, kGaussianMean, kCategoricalExpectation };

Coordinates DefaultCoordinates(Family family);

struct StepGradient {
  Vector vec;
  Matrix mat;  // Only used by kGaussianNatural.
};

struct HorizonGradient {
  Coordinates coordinates;
  std::vector<StepGradient> steps;

  static HorizonGradient Zero(const HorizonParams& params,
                              Coordinates coordinates);

  int horizon() const { return static_cast<int>(steps.size()); }
  // this += alpha * other
  void Axpy(double alpha, const HorizonGradient& other);
  void Scale(double alpha);
  double SquaredNorm() const;
  bool IsZero() const;
};

double LogProb(const HorizonParams& params, const ControlSequence& seq);

// Score function grad_theta log pi_theta(seq) in the requested coordinates.
HorizonGradient LogProbGrad(const HorizonParams& params,
                            const ControlSequence& seq,
                            Coordinates coordinates);

// Exponential-family duality for the Gaussian with sufficient statistic
// (u, u u^T).
struct GaussianExpectation {
  Vector mean;
  Matrix second_moment;
};

struct GaussianNatural {
  Vector linear;     // Sigma^-1 m
  Matrix quadratic;  // -1/2 Sigma^-1
};

GaussianExpectation ToExpectation(const GaussianParams& params);
GaussianNatural ToNatural(const GaussianParams& params);
GaussianParams FromExpectation(const GaussianExpectation& mu);
GaussianParams FromNatural(const GaussianNatural& eta);

// Categorical natural parameter: log-probabilities (defined up to a constant).
Vector ToNatural(const CategoricalParams& params);
CategoricalParams FromNatural(const Vector& log_probs);

}  // namespace dmdmpc

#endif  // DMDMPC_CORE_H_
