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

#include "dmdmpc/simulation.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <tbb/parallel_for.h>

#include "dmdmpc/error.h"

namespace dmdmpc {

Vector DynamicsModel::Step(const Vector& state, ControlRef control,
                           std::span<const double> noise) const {
  Vector next(state_dim());
  Step(state, control, noise, next);
  return next;
}

// ---------------------------------------------------------------------------
// Cartpole

void CartpoleConfig::Validate() const {
  Require(cart_mass > 0 && tip_mass > 0 && pole_length_true > 0 &&
              pole_length_model > 0 && dt > 0 && gravity > 0,
          ErrorCode::kInvalidArgument,
          "cartpole: masses, lengths, gravity and dt must be positive");
  Require(control_min < control_max, ErrorCode::kInvalidArgument,
          "cartpole: control_min must be below control_max");
  Require(control_noise_std >= 0, ErrorCode::kInvalidArgument,
          "cartpole: negative noise std");
  Require(angle_threshold > 0, ErrorCode::kInvalidArgument,
          "cartpole: angle threshold must be positive");
}

namespace {

inline void CartpoleEuler(const CartpoleConfig& c, double length,
                          const double* x, double force, double* out) {
  const double phi = x[1];
  const double v = x[2];
  const double phidot = x[3];
  const double s = std::sin(phi);
  const double co = std::cos(phi);
  const double mp = c.tip_mass;
  const double denom = c.cart_mass + mp * s * s;
  const double accel =
      (force + mp * s * (length * phidot * phidot + c.gravity * co)) / denom;
  const double angular_accel =
      (-force * co - mp * length * phidot * phidot * co * s -
       (c.cart_mass + mp) * c.gravity * s) /
      (length * denom);
  out[0] = x[0] + c.dt * v;
  out[1] = phi + c.dt * phidot;
  out[2] = v + c.dt * accel;
  out[3] = phidot + c.dt * angular_accel;
}

inline double AppliedForce(const CartpoleConfig& c, double commanded,
                           double noise_draw) {
  return std::clamp(commanded, c.control_min, c.control_max) +
         c.control_noise_std * noise_draw;
}

}  // namespace

Vector CartpoleStep(const CartpoleConfig& config, double pole_length,
                    const Vector& state, double force, double noise_draw) {
  Require(state.size() == 4, ErrorCode::kShapeMismatch,
          "cartpole: state must have 4 entries");
  Require(std::isfinite(force), ErrorCode::kInvalidArgument,
          "cartpole: force must be finite");
  Vector next(4);
  CartpoleEuler(config, pole_length, state.data(),
                AppliedForce(config, force, noise_draw), next.data());
  return next;
}

double CartpoleEnergy(const CartpoleConfig& c, double length,
                      const Vector& x) {
  const double v = x[2];
  const double phidot = x[3];
  const double mp = c.tip_mass;
  const double kinetic = 0.5 * (c.cart_mass + mp) * v * v +
                         mp * length * v * phidot * std::cos(x[1]) +
                         0.5 * mp * length * length * phidot * phidot;
  const double potential = -mp * c.gravity * length * std::cos(x[1]);
  return kinetic + potential;
}

CartpoleDynamics::CartpoleDynamics(CartpoleConfig config, double pole_length,
                                   bool noisy)
    : config_(std::move(config)), pole_length_(pole_length), noisy_(noisy) {
  config_.Validate();
  Require(pole_length_ > 0, ErrorCode::kInvalidArgument,
          "cartpole: pole length must be positive");
}

double CartpoleDynamics::Force(ControlRef control) const {
  if (control.index >= 0) {
    Require(control.index < static_cast<int>(config_.discrete_forces.size()),
            ErrorCode::kInvalidArgument, "cartpole: discrete force index out of range");
    return config_.discrete_forces[control.index];
  }
  Require(control.value.size() == 1, ErrorCode::kShapeMismatch,
          "cartpole: control must be a scalar force");
  return control.value[0];
}

void CartpoleDynamics::Step(const Eigen::Ref<const Vector>& state,
                            ControlRef control, std::span<const double> noise,
                            Eigen::Ref<Vector> next) const {
  const double draw = noisy_ ? noise[0] : 0.0;
  CartpoleEuler(config_, pole_length_, state.data(),
                AppliedForce(config_, Force(control), draw), next.data());
}

double CartpoleStageCost(const Eigen::Ref<const Vector>& x,
                         double angle_threshold) {
  const double angle_error = x[1] - std::numbers::pi;
  const double penalty = std::abs(angle_error) >= angle_threshold ? 1000.0 : 0.0;
  return 10.0 * x[0] * x[0] + 500.0 * angle_error * angle_error + x[2] * x[2] +
         15.0 * x[3] * x[3] + penalty;
}

double CartpoleCost::Stage(const Eigen::Ref<const Vector>& state,
                           ControlRef) const {
  return CartpoleStageCost(state, angle_threshold_);
}

double CartpoleCost::Terminal(const Eigen::Ref<const Vector>& state) const {
  return CartpoleStageCost(state, angle_threshold_);
}

// ---------------------------------------------------------------------------
// Linear time-invariant

LtiDynamics::LtiDynamics(Matrix a, Matrix b, Matrix w)
    : a_(std::move(a)), b_(std::move(b)) {
  const auto n = a_.rows();
  Require(a_.cols() == n && b_.rows() == n && w.rows() == n && w.cols() == n,
          ErrorCode::kShapeMismatch, "lti: inconsistent dimensions");
  if (w.isZero(0.0)) {
    noise_dim_ = 0;
    return;
  }
  Eigen::LLT<Matrix> llt(0.5 * (w + w.transpose()));
  Require(llt.info() == Eigen::Success, ErrorCode::kNotPositiveDefinite,
          "lti: noise covariance must be positive definite or zero");
  noise_factor_ = llt.matrixL();
  noise_dim_ = static_cast<int>(n);
}

void LtiDynamics::Step(const Eigen::Ref<const Vector>& state,
                       ControlRef control, std::span<const double> noise,
                       Eigen::Ref<Vector> next) const {
  Require(control.index < 0 && control.value.size() ==
                                   static_cast<size_t>(b_.cols()),
          ErrorCode::kShapeMismatch, "lti: control dimension mismatch");
  const Eigen::Map<const Vector> u(control.value.data(), b_.cols());
  next.noalias() = a_ * state + b_ * u;
  if (noise_dim_ > 0) {
    const Eigen::Map<const Vector> w(noise.data(), noise_dim_);
    next.noalias() += noise_factor_ * w;
  }
}

QuadraticCost::QuadraticCost(Matrix q, Matrix r, Matrix q_end)
    : q_(std::move(q)), r_(std::move(r)), q_end_(std::move(q_end)) {
  Require(q_.rows() == q_.cols() && q_end_.rows() == q_.rows() &&
              q_end_.cols() == q_.cols() && r_.rows() == r_.cols(),
          ErrorCode::kShapeMismatch, "quadratic cost: inconsistent dimensions");
}

double QuadraticCost::Stage(const Eigen::Ref<const Vector>& x,
                            ControlRef control) const {
  Require(control.index < 0 && control.value.size() ==
                                   static_cast<size_t>(r_.rows()),
          ErrorCode::kShapeMismatch, "quadratic cost: control dimension mismatch");
  const Eigen::Map<const Vector> u(control.value.data(), r_.rows());
  return 0.5 * x.dot(q_ * x) + 0.5 * u.dot(r_ * u);
}

double QuadraticCost::Terminal(const Eigen::Ref<const Vector>& x) const {
  return 0.5 * x.dot(q_end_ * x);
}

// ---------------------------------------------------------------------------
// Rollouts

namespace {

// Fills `trajectory` (state_dim x (H+1)) and returns the accumulated cost, or
// +inf if a non-finite state shows up.
double RollOutInto(const DynamicsModel& model, const CostModel& cost,
                   const Vector& x0, const ControlSequence& seq,
                   std::span<const double> noise, Matrix& trajectory) {
  const int horizon = seq.horizon();
  const int noise_dim = model.noise_dim();
  trajectory.resize(model.state_dim(), horizon + 1);
  trajectory.col(0) = x0;
  double total = 0.0;
  for (int h = 0; h < horizon; ++h) {
    const ControlRef u = seq.at(h);
    total += cost.Stage(trajectory.col(h), u);
    model.Step(trajectory.col(h), u,
               noise.subspan(static_cast<size_t>(h) * noise_dim, noise_dim),
               trajectory.col(h + 1));
    if (!trajectory.col(h + 1).allFinite()) {
      return std::numeric_limits<double>::infinity();
    }
  }
  total += cost.Terminal(trajectory.col(horizon));
  return std::isfinite(total) ? total : std::numeric_limits<double>::infinity();
}

}  // namespace

Rollout RollOut(const DynamicsModel& model, const CostModel& cost,
                const Vector& x0, const ControlSequence& seq,
                std::span<const double> noise) {
  Require(seq.horizon() >= 1, ErrorCode::kInvalidArgument,
          "rollout: horizon must be at least 1");
  Require(x0.size() == model.state_dim(), ErrorCode::kShapeMismatch,
          "rollout: initial state dimension mismatch");
  Require(noise.size() >= static_cast<size_t>(seq.horizon()) * model.noise_dim(),
          ErrorCode::kShapeMismatch, "rollout: not enough noise draws");
  Rollout out;
  out.cost = RollOutInto(model, cost, x0, seq, noise, out.trajectory);
  out.valid = std::isfinite(out.cost);
  return out;
}

double TrajectoryCost(const CostModel& cost, const Matrix& trajectory,
                      const ControlSequence& seq) {
  const int horizon = seq.horizon();
  Require(trajectory.cols() == horizon + 1, ErrorCode::kShapeMismatch,
          "trajectory length does not match the control sequence");
  double total = 0.0;
  for (int h = 0; h < horizon; ++h) total += cost.Stage(trajectory.col(h), seq.at(h));
  return total + cost.Terminal(trajectory.col(horizon));
}

std::vector<Vector> DrawCommonNoise(const DynamicsModel& model, int horizon,
                                    int dynamics_samples, uint64_t crn_seed) {
  std::vector<Vector> noise(dynamics_samples);
  Rng rng(crn_seed);
  std::normal_distribution<double> normal;
  const int count = horizon * model.noise_dim();
  for (auto& block : noise) {
    block.resize(count);
    for (int i = 0; i < count; ++i) block[i] = normal(rng);
  }
  return noise;
}

RolloutBatch RollOutBatch(const DynamicsModel& model, const CostModel& cost,
                          const Vector& x0,
                          std::span<const ControlSequence> sequences,
                          uint64_t crn_seed, const BatchOptions& options) {
  Require(!sequences.empty(), ErrorCode::kInvalidArgument,
          "rollout batch: no control sequences");
  Require(options.dynamics_samples >= 1, ErrorCode::kInvalidArgument,
          "rollout batch: dynamics_samples must be >= 1");
  Require(x0.size() == model.state_dim(), ErrorCode::kShapeMismatch,
          "rollout batch: initial state dimension mismatch");
  const int horizon = sequences.front().horizon();
  for (const auto& seq : sequences) {
    Require(seq.horizon() == horizon, ErrorCode::kShapeMismatch,
            "rollout batch: sequences differ in horizon");
  }
  const int k_samples = model.deterministic() ? 1 : options.dynamics_samples;
  // Materialized before fan-out so results do not depend on scheduling.
  const std::vector<Vector> noise =
      DrawCommonNoise(model, horizon, k_samples, crn_seed);

  const int total = static_cast<int>(sequences.size()) * k_samples;
  RolloutBatch batch;
  batch.sequences.reserve(total);
  for (const auto& seq : sequences) {
    for (int k = 0; k < k_samples; ++k) batch.sequences.push_back(seq);
  }
  batch.costs.assign(total, 0.0);
  if (options.keep_trajectories) batch.trajectories.resize(total);

  tbb::parallel_for(tbb::blocked_range<int>(0, total, 16),
                    [&](const tbb::blocked_range<int>& range) {
    Matrix scratch;
    for (int j = range.begin(); j != range.end(); ++j) {
      const int k = j % k_samples;
      Matrix& trajectory =
          options.keep_trajectories ? batch.trajectories[j] : scratch;
      const std::span<const double> draws(noise[k].data(),
                                          static_cast<size_t>(noise[k].size()));
      batch.costs[j] =
          RollOutInto(model, cost, x0, batch.sequences[j], draws, trajectory);
    }
  });
  return batch;
}

}  // namespace dmdmpc
