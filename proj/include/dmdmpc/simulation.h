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

#ifndef DMDMPC_SIMULATION_H_
#define DMDMPC_SIMULATION_H_

#include <cstdint>
#include <span>
#include <vector>

#include "dmdmpc/core.h"

namespace dmdmpc {

// x_{h+1} = step(x_h, u_h, w_h). `noise` holds noise_dim() standard-normal
// draws; the model applies its own scaling. Implementations must be pure.
class DynamicsModel {
 public:
  virtual ~DynamicsModel() = default;

  virtual int state_dim() const = 0;
  virtual int noise_dim() const = 0;
  bool deterministic() const { return noise_dim() == 0; }

  virtual void Step(const Eigen::Ref<const Vector>& state, ControlRef control,
                    std::span<const double> noise,
                    Eigen::Ref<Vector> next) const = 0;

  Vector Step(const Vector& state, ControlRef control,
              std::span<const double> noise) const;
};

class CostModel {
 public:
  virtual ~CostModel() = default;

  virtual double Stage(const Eigen::Ref<const Vector>& state,
                       ControlRef control) const = 0;
  virtual double Terminal(const Eigen::Ref<const Vector>& state) const = 0;
};

// Cart with a massless pole carrying a point mass at its tip. State is
// (position, angle, velocity, angular velocity) with angle 0 hanging down and
// pi upright.
struct CartpoleConfig {
  double cart_mass = 0.711;          // kg
  double tip_mass = 0.209;           // kg
  double pole_length_true = 0.326;   // m
  double pole_length_model = 0.346;  // m
  double gravity = 9.81;             // m/s^2
  double dt = 0.02;                  // s
  double control_noise_std = 5.0;    // N
  double control_min = -25.0;        // N
  double control_max = 25.0;         // N
  double angle_threshold = 0.21;     // rad
  std::vector<double> discrete_forces = {-10.0, 0.0, 10.0};  // N

  void Validate() const;
};

// One forward-Euler step. The commanded force is clamped to the control range
// and then perturbed by control_noise_std * noise_draw.
Vector CartpoleStep(const CartpoleConfig& config, double pole_length,
                    const Vector& state, double force, double noise_draw);

// Total mechanical energy, zero potential at the pivot height.
double CartpoleEnergy(const CartpoleConfig& config, double pole_length,
                      const Vector& state);

class CartpoleDynamics final : public DynamicsModel {
 public:
  // `noisy` = false drops the force noise (noise_dim() becomes 0).
  CartpoleDynamics(CartpoleConfig config, double pole_length, bool noisy = true);

  int state_dim() const override { return 4; }
  int noise_dim() const override { return noisy_ ? 1 : 0; }
  using DynamicsModel::Step;
  void Step(const Eigen::Ref<const Vector>& state, ControlRef control,
            std::span<const double> noise,
            Eigen::Ref<Vector> next) const override;

  // Commanded force for a control (continuous value or discrete index).
  double Force(ControlRef control) const;

  const CartpoleConfig& config() const { return config_; }
  double pole_length() const { return pole_length_; }

 private:
  CartpoleConfig config_;
  double pole_length_;
  bool noisy_;
};

// c = 10 p^2 + 500 (phi - pi)^2 + v^2 + 15 phidot^2 + 1000 [|phi - pi| >= D]
double CartpoleStageCost(const Eigen::Ref<const Vector>& state,
                         double angle_threshold);

class CartpoleCost final : public CostModel {
 public:
  explicit CartpoleCost(double angle_threshold = 0.21)
      : angle_threshold_(angle_threshold) {}

  double Stage(const Eigen::Ref<const Vector>& state,
               ControlRef control) const override;
  // c_end(x) = c(x, 0)
  double Terminal(const Eigen::Ref<const Vector>& state) const override;

 private:
  double angle_threshold_;
};

// x' = A x + B u + w, w ~ N(0, W). W may be zero (deterministic model).
class LtiDynamics final : public DynamicsModel {
 public:
  LtiDynamics(Matrix a, Matrix b, Matrix w);

  int state_dim() const override { return static_cast<int>(a_.rows()); }
  int noise_dim() const override { return noise_dim_; }
  using DynamicsModel::Step;
  void Step(const Eigen::Ref<const Vector>& state, ControlRef control,
            std::span<const double> noise,
            Eigen::Ref<Vector> next) const override;

 private:
  Matrix a_, b_, noise_factor_;
  int noise_dim_;
};

// c = 1/2 x^T Q x + 1/2 u^T R u, c_end = 1/2 x^T Q_end x.
class QuadraticCost final : public CostModel {
 public:
  QuadraticCost(Matrix q, Matrix r, Matrix q_end);

  double Stage(const Eigen::Ref<const Vector>& state,
               ControlRef control) const override;
  double Terminal(const Eigen::Ref<const Vector>& state) const override;

 private:
  Matrix q_, r_, q_end_;
};

// Constant stage cost and zero terminal cost; handy for plumbing checks.
class ConstantCost final : public CostModel {
 public:
  explicit ConstantCost(double stage) : stage_(stage) {}
  double Stage(const Eigen::Ref<const Vector>&, ControlRef) const override {
    return stage_;
  }
  double Terminal(const Eigen::Ref<const Vector>&) const override { return 0.0; }

 private:
  double stage_;
};

struct Rollout {
  Matrix trajectory;  // state_dim x (H + 1), column h is x_h
  double cost = 0.0;  // +inf when a non-finite state was reached
  bool valid = true;
};

// `noise` must hold H * model.noise_dim() standard-normal draws, step-major.
Rollout RollOut(const DynamicsModel& model, const CostModel& cost,
                const Vector& x0, const ControlSequence& seq,
                std::span<const double> noise);

// Accumulated cost of a stored trajectory.
double TrajectoryCost(const CostModel& cost, const Matrix& trajectory,
                      const ControlSequence& seq);

struct RolloutBatch {
  std::vector<ControlSequence> sequences;
  std::vector<Matrix> trajectories;  // empty when trajectories are not kept
  std::vector<double> costs;

  int size() const { return static_cast<int>(costs.size()); }
};

struct BatchOptions {
  // Noise realizations per control sequence. Realization k is shared by every
  // sequence (common random numbers). The batch holds sequences.size() *
  // dynamics_samples rollouts, ordered sequence-major.
  int dynamics_samples = 1;
  bool keep_trajectories = true;
};

// Draw the common noise for a batch: dynamics_samples blocks of
// H * noise_dim standard normals from a stream seeded with `crn_seed`.
std::vector<Vector> DrawCommonNoise(const DynamicsModel& model, int horizon,
                                    int dynamics_samples, uint64_t crn_seed);

RolloutBatch RollOutBatch(const DynamicsModel& model, const CostModel& cost,
                          const Vector& x0,
                          std::span<const ControlSequence> sequences,
                          uint64_t crn_seed, const BatchOptions& options = {});

}  // namespace dmdmpc

#endif  // DMDMPC_SIMULATION_H_
