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

#include "dmdmpc/core.h"

#include <cmath>
#include <numbers>
#include <string>

#include "dmdmpc/error.h"

namespace dmdmpc {
namespace {

bool IsSymmetric(const Matrix& a) {
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

}  // namespace

// ---------------------------------------------------------------------------
// GaussianParams

GaussianParams::GaussianParams(Vector mean, Matrix covariance)
    : mean_(std::move(mean)) {
  Require(mean_.size() >= 1, ErrorCode::kInvalidArgument,
          "gaussian: dimension must be at least 1");
  Require(covariance.rows() == mean_.size() && covariance.cols() == mean_.size(),
          ErrorCode::kShapeMismatch, "gaussian: covariance shape mismatch");
  Require(mean_.allFinite() && covariance.allFinite(),
          ErrorCode::kInvalidArgument, "gaussian: non-finite parameters");
  Require(IsSymmetric(covariance), ErrorCode::kInvalidArgument,
          "gaussian: covariance is not symmetric");
  covariance_ = 0.5 * (covariance + covariance.transpose());
  llt_.compute(covariance_);
  Require(llt_.info() == Eigen::Success, ErrorCode::kNotPositiveDefinite,
          "gaussian: covariance is not positive definite");
}

GaussianParams GaussianParams::Isotropic(Vector mean, double std_dev) {
  const auto m = mean.size();
  return GaussianParams(std::move(mean),
                        std_dev * std_dev * Matrix::Identity(m, m));
}

Matrix GaussianParams::SecondMoment() const {
  return covariance_ + mean_ * mean_.transpose();
}

Matrix GaussianParams::Precision() const {
  return llt_.solve(Matrix::Identity(dim(), dim()));
}

double GaussianParams::LogDeterminant() const {
  const Matrix& l = llt_.matrixLLT();
  return 2.0 * l.diagonal().array().log().sum();
}

// ---------------------------------------------------------------------------
// CategoricalParams

CategoricalParams::CategoricalParams(Vector probs) : probs_(std::move(probs)) {
  Require(probs_.size() >= 1, ErrorCode::kInvalidArgument,
          "categorical: need at least one category");
  Require(probs_.allFinite() && (probs_.array() >= 0.0).all(),
          ErrorCode::kInvalidArgument, "categorical: negative probability");
  Require(std::abs(probs_.sum() - 1.0) <= 1e-9, ErrorCode::kInvalidArgument,
          "categorical: probabilities must sum to 1");
}

CategoricalParams CategoricalParams::Uniform(int num_categories) {
  Require(num_categories >= 1, ErrorCode::kInvalidArgument,
          "categorical: need at least one category");
  return CategoricalParams(Vector::Constant(num_categories, 1.0 / num_categories));
}

Vector CategoricalParams::Guarded() const {
  if ((probs_.array() >= kProbabilityFloor).all()) return probs_;
  Vector guarded = probs_.cwiseMax(kProbabilityFloor);
  return guarded / guarded.sum();
}

Family FamilyOf(const BasicParams& params) {
  return std::holds_alternative<GaussianParams>(params) ? Family::kGaussian
                                                        : Family::kCategorical;
}

namespace {

int DimOf(const BasicParams& params) {
  return std::visit([](const auto& p) {
    if constexpr (std::is_same_v<std::decay_t<decltype(p)>, GaussianParams>) {
      return p.dim();
    } else {
      return p.size();
    }
  }, params);
}

}  // namespace

// ---------------------------------------------------------------------------
// HorizonParams

HorizonParams::HorizonParams(std::vector<BasicParams> steps)
    : steps_(std::move(steps)) {
  Require(!steps_.empty(), ErrorCode::kInvalidArgument,
          "horizon must be at least 1");
  family_ = FamilyOf(steps_.front());
  control_dim_ = DimOf(steps_.front());
  for (const auto& step : steps_) {
    Require(FamilyOf(step) == family_, ErrorCode::kInvalidArgument,
            "horizon steps must share one distribution family");
    Require(DimOf(step) == control_dim_, ErrorCode::kShapeMismatch,
            "horizon steps must share one control dimension");
  }
}

HorizonParams HorizonParams::Repeat(const BasicParams& params, int horizon) {
  Require(horizon >= 1, ErrorCode::kInvalidArgument,
          "horizon must be at least 1");
  return HorizonParams(std::vector<BasicParams>(horizon, params));
}

const GaussianParams& HorizonParams::gaussian(int h) const {
  Require(family_ == Family::kGaussian, ErrorCode::kUnsupported,
          "expected gaussian horizon parameters");
  return std::get<GaussianParams>(steps_[h]);
}

const CategoricalParams& HorizonParams::categorical(int h) const {
  Require(family_ == Family::kCategorical, ErrorCode::kUnsupported,
          "expected categorical horizon parameters");
  return std::get<CategoricalParams>(steps_[h]);
}

// ---------------------------------------------------------------------------
// ControlSequence

ControlSequence ControlSequence::Continuous(Matrix controls) {
  ControlSequence seq;
  seq.discrete_ = false;
  seq.values_ = std::move(controls);
  return seq;
}

ControlSequence ControlSequence::Discrete(std::vector<int> indices) {
  ControlSequence seq;
  seq.discrete_ = true;
  seq.indices_ = std::move(indices);
  return seq;
}

int ControlSequence::horizon() const {
  return discrete_ ? static_cast<int>(indices_.size())
                   : static_cast<int>(values_.cols());
}

ControlRef ControlSequence::at(int h) const {
  if (discrete_) return {{}, indices_[h]};
  return {std::span<const double>(values_.col(h).data(),
                                  static_cast<size_t>(values_.rows())),
          -1};
}

Eigen::Map<const Vector> ControlSequence::value(int h) const {
  return Eigen::Map<const Vector>(values_.col(h).data(), values_.rows());
}

bool ControlSequence::operator==(const ControlSequence& other) const {
  if (discrete_ != other.discrete_) return false;
  if (discrete_) return indices_ == other.indices_;
  return values_.rows() == other.values_.rows() &&
         values_.cols() == other.values_.cols() && values_ == other.values_;
}

// ---------------------------------------------------------------------------
// Operations

HorizonParams Shift(const HorizonParams& params, const ShiftPolicy& policy) {
  const int horizon = params.horizon();
  std::vector<BasicParams> steps;
  steps.reserve(horizon);
  for (int h = 1; h < horizon; ++h) steps.push_back(params.step(h));
  if (policy.fill) {
    steps.push_back(*policy.fill);
  } else {
    steps.push_back(params.step(horizon - 1));
  }
  return HorizonParams(std::move(steps));
}

std::vector<ControlSequence> SampleControls(const HorizonParams& params, int n,
                                            Rng& rng) {
  Require(n >= 1, ErrorCode::kInvalidArgument, "sample count must be >= 1");
  const int horizon = params.horizon();
  const int m = params.control_dim();
  std::vector<ControlSequence> out;
  out.reserve(n);
  if (params.family() == Family::kGaussian) {
    std::normal_distribution<double> normal;
    Vector z(m);
    for (int i = 0; i < n; ++i) {
      Matrix values(m, horizon);
      for (int h = 0; h < horizon; ++h) {
        const GaussianParams& g = params.gaussian(h);
        for (int j = 0; j < m; ++j) z[j] = normal(rng);
        values.col(h) = g.mean() + g.cholesky().matrixL() * z;
      }
      out.push_back(ControlSequence::Continuous(std::move(values)));
    }
  } else {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
      std::vector<int> indices(horizon);
      for (int h = 0; h < horizon; ++h) {
        const Vector& p = params.categorical(h).probs();
        const double u = uniform(rng);
        double cumulative = 0.0;
        int chosen = m - 1;
        for (int j = 0; j < m; ++j) {
          cumulative += p[j];
          if (u < cumulative) {
            chosen = j;
            break;
          }
        }
        // Rounding can leave u above the final cumulative sum; never land on a
        // zero-probability category.
        while (p[chosen] <= 0.0 && chosen > 0) --chosen;
        indices[h] = chosen;
      }
      out.push_back(ControlSequence::Discrete(std::move(indices)));
    }
  }
  return out;
}

ControlSequence Mode(const HorizonParams& params) {
  const int horizon = params.horizon();
  if (params.family() == Family::kGaussian) {
    Matrix values(params.control_dim(), horizon);
    for (int h = 0; h < horizon; ++h) values.col(h) = params.gaussian(h).mean();
    return ControlSequence::Continuous(std::move(values));
  }
  std::vector<int> indices(horizon);
  for (int h = 0; h < horizon; ++h) {
    const Vector& p = params.categorical(h).probs();
    int best = 0;
    for (int j = 1; j < p.size(); ++j) {
      if (p[j] > p[best]) best = j;  // strict: ties keep the lowest index
    }
    indices[h] = best;
  }
  return ControlSequence::Discrete(std::move(indices));
}

Coordinates DefaultCoordinates(Family family) {
  return family == Family::kGaussian ? Coordinates::kGaussianNatural
                                     : Coordinates::kCategoricalExpectation;
}

// ---------------------------------------------------------------------------
// HorizonGradient

HorizonGradient HorizonGradient::Zero(const HorizonParams& params,
                                      Coordinates coordinates) {
  const int m = params.control_dim();
  HorizonGradient g{coordinates, {}};
  g.steps.resize(params.horizon());
  for (auto& step : g.steps) {
    step.vec = Vector::Zero(m);
    if (coordinates == Coordinates::kGaussianNatural) step.mat = Matrix::Zero(m, m);
  }
  return g;
}

void HorizonGradient::Axpy(double alpha, const HorizonGradient& other) {
  Require(other.coordinates == coordinates && other.horizon() == horizon(),
          ErrorCode::kShapeMismatch, "gradient shape mismatch");
  for (size_t h = 0; h < steps.size(); ++h) {
    steps[h].vec.noalias() += alpha * other.steps[h].vec;
    if (steps[h].mat.size() > 0) steps[h].mat.noalias() += alpha * other.steps[h].mat;
  }
}

void HorizonGradient::Scale(double alpha) {
  for (auto& step : steps) {
    step.vec *= alpha;
    step.mat *= alpha;
  }
}

double HorizonGradient::SquaredNorm() const {
  double total = 0.0;
  for (const auto& step : steps) total += step.vec.squaredNorm() + step.mat.squaredNorm();
  return total;
}

bool HorizonGradient::IsZero() const {
  for (const auto& step : steps) {
    if (!step.vec.isZero(0.0)) return false;
    if (step.mat.size() > 0 && !step.mat.isZero(0.0)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Log-probability and score

namespace {

void CheckSequence(const HorizonParams& params, const ControlSequence& seq) {
  Require(seq.horizon() == params.horizon(), ErrorCode::kShapeMismatch,
          "control sequence length does not match the horizon");
  const bool discrete = params.family() == Family::kCategorical;
  Require(seq.discrete() == discrete, ErrorCode::kShapeMismatch,
          "control sequence type does not match the distribution family");
  if (discrete) {
    for (int h = 0; h < seq.horizon(); ++h) {
      const int u = seq.index(h);
      Require(u >= 0 && u < params.control_dim(), ErrorCode::kInvalidArgument,
              "category index out of range");
      Require(params.categorical(h).probs()[u] > 0.0, ErrorCode::kInvalidArgument,
              "control has probability zero at step " + std::to_string(h));
    }
  } else {
    Require(seq.values().rows() == params.control_dim(), ErrorCode::kShapeMismatch,
            "control dimension mismatch");
  }
}

}  // namespace

double LogProb(const HorizonParams& params, const ControlSequence& seq) {
  CheckSequence(params, seq);
  double total = 0.0;
  if (params.family() == Family::kGaussian) {
    const double log_two_pi = std::log(2.0 * std::numbers::pi);
    for (int h = 0; h < params.horizon(); ++h) {
      const GaussianParams& g = params.gaussian(h);
      const Vector diff = seq.value(h) - g.mean();
      const Vector white = g.cholesky().matrixL().solve(diff);
      total += -0.5 * white.squaredNorm() - 0.5 * g.LogDeterminant() -
               0.5 * g.dim() * log_two_pi;
    }
  } else {
    for (int h = 0; h < params.horizon(); ++h) {
      total += std::log(params.categorical(h).Guarded()[seq.index(h)]);
    }
  }
  return total;
}

HorizonGradient LogProbGrad(const HorizonParams& params,
                            const ControlSequence& seq,
                            Coordinates coordinates) {
  CheckSequence(params, seq);
  const bool gaussian = params.family() == Family::kGaussian;
  Require(gaussian == (coordinates != Coordinates::kCategoricalExpectation),
          ErrorCode::kUnsupported,
          "gradient coordinates do not match the distribution family");
  HorizonGradient grad{coordinates, {}};
  grad.steps.resize(params.horizon());
  for (int h = 0; h < params.horizon(); ++h) {
    StepGradient& out = grad.steps[h];
    switch (coordinates) {
      case Coordinates::kGaussianNatural: {
        const GaussianParams& g = params.gaussian(h);
        const auto u = seq.value(h);
        out.vec = u - g.mean();
        out.mat = u * u.transpose() - g.SecondMoment();
        break;
      }
      case Coordinates::kGaussianMean: {
        const GaussianParams& g = params.gaussian(h);
        out.vec = g.cholesky().solve(seq.value(h) - g.mean());
        break;
      }
      case Coordinates::kCategoricalExpectation: {
        const Vector p = params.categorical(h).Guarded();
        out.vec = Vector::Zero(p.size());
        const int u = seq.index(h);
        out.vec[u] = 1.0 / p[u];
        break;
      }
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Duality

GaussianExpectation ToExpectation(const GaussianParams& params) {
  return {params.mean(), params.SecondMoment()};
}

GaussianNatural ToNatural(const GaussianParams& params) {
  const Matrix precision = params.Precision();
  return {precision * params.mean(), -0.5 * precision};
}

GaussianParams FromExpectation(const GaussianExpectation& mu) {
  Require(mu.second_moment.rows() == mu.mean.size() &&
              mu.second_moment.cols() == mu.mean.size(),
          ErrorCode::kShapeMismatch, "expectation parameter shape mismatch");
  Matrix cov = mu.second_moment - mu.mean * mu.mean.transpose();
  cov = 0.5 * (cov + cov.transpose());
  return GaussianParams(mu.mean, cov);
}

GaussianParams FromNatural(const GaussianNatural& eta) {
  Require(eta.quadratic.rows() == eta.linear.size() &&
              eta.quadratic.cols() == eta.linear.size(),
          ErrorCode::kShapeMismatch, "natural parameter shape mismatch");
  Matrix precision = -2.0 * eta.quadratic;
  precision = 0.5 * (precision + precision.transpose());
  Eigen::LLT<Matrix> llt(precision);
  Require(llt.info() == Eigen::Success, ErrorCode::kNotPositiveDefinite,
          "natural parameter does not define a valid covariance");
  const auto m = eta.linear.size();
  Matrix cov = llt.solve(Matrix::Identity(m, m));
  cov = 0.5 * (cov + cov.transpose());
  Vector mean = cov * eta.linear;
  return GaussianParams(std::move(mean), std::move(cov));
}

Vector ToNatural(const CategoricalParams& params) {
  return params.Guarded().array().log().matrix();
}

CategoricalParams FromNatural(const Vector& log_probs) {
  Require(log_probs.size() >= 1 && log_probs.allFinite(),
          ErrorCode::kInvalidArgument, "invalid categorical natural parameter");
  Vector p = (log_probs.array() - log_probs.maxCoeff()).exp().matrix();
  return CategoricalParams(p / p.sum());
}

}  // namespace dmdmpc
