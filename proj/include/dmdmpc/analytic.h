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

// Exact per-round losses for linear dynamics with quadratic costs, used as
// ground truth for the sampling-based machinery.
//
// Over a horizon H the stacked states satisfy
//   X = F x0 + G U + L Wn,   X = (x_0, ..., x_H), U = (u_0, ..., u_{H-1}),
// and with a Dirac control distribution at theta = U both the risk-neutral
// (LQR) and the exponential-utility (LEQR) losses are quadratic in theta.

#ifndef DMDMPC_ANALYTIC_H_
#define DMDMPC_ANALYTIC_H_

#include <Eigen/Dense>

#include "dmdmpc/core.h"

namespace dmdmpc {

struct LtiSystem {
  Matrix a;  // n x n
  Matrix b;  // n x m
  Matrix w;  // n x n noise covariance, SPD

  int state_dim() const { return static_cast<int>(a.rows()); }
  int control_dim() const { return static_cast<int>(b.cols()); }
  void Validate() const;
};

struct StackedSystem {
  int horizon = 0;
  int state_dim = 0;
  int control_dim = 0;
  Matrix f;        // (H+1)n x n, block h = A^h
  Matrix g;        // (H+1)n x Hm
  Matrix l;        // (H+1)n x Hn
  Matrix block_q;  // diag(Q, ..., Q, Q_end)
  Matrix block_r;  // diag(R, ..., R)
  Matrix block_w;  // diag(W, ..., W)

  // F x0 + G u + L w
  Vector Simulate(const Vector& x0, const Vector& u, const Vector& w) const;
  // 1/2 X^T Q X + 1/2 U^T R U
  double Cost(const Vector& states, const Vector& u) const;
  // L W L^T
  Matrix NoiseKernel() const;
};

StackedSystem BuildStacked(const LtiSystem& sys, const Matrix& q,
                           const Matrix& r, const Matrix& q_end, int horizon);

// l(theta) = 1/2 theta^T R theta + r^T theta + constant.
struct QuadraticLoss {
  Matrix hessian;  // R, SPD
  Vector linear;   // r
  double constant = 0.0;

  void Validate() const;
  double Evaluate(const Vector& theta) const;
  Vector Gradient(const Vector& theta) const;
  Vector Minimizer() const;  // -R^-1 r
  double Minimum() const;
};

// Risk-neutral loss E[C].
QuadraticLoss LqrQuadratic(const StackedSystem& stacked, const Vector& x0);

// Exponential-utility loss -log E[exp(-C / lambda)]. The first stacked state is
// deterministic, so the Gaussian kernel is applied to the remaining H states
// and the x0 term goes into the constant (together with the log-determinant).
QuadraticLoss LeqrQuadratic(const StackedSystem& stacked, const Vector& x0,
                            double lambda);

// E[exp(-1/2 x^T A x - b^T x)] for x ~ N(mu, sigma), closed form.
double GaussianExpQuadratic(const Vector& mu, const Matrix& sigma,
                            const Matrix& a, const Vector& b);

// Means of a Gaussian horizon stacked into one Hm vector, and back.
Vector StackMeans(const HorizonParams& params);
HorizonParams WithMeans(const HorizonParams& params, const Vector& stacked);

}  // namespace dmdmpc

#endif  // DMDMPC_ANALYTIC_H_
