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

#include "dmdmpc/analytic.h"

#include <cmath>
#include <vector>

#include "dmdmpc/error.h"

namespace dmdmpc {
namespace {

bool IsSymmetric(const Matrix& a, double tol) {
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return a.rows() == a.cols() &&
         (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

void RequirePsd(const Matrix& a, const char* what) {
  Require(IsSymmetric(a, 1e-10), ErrorCode::kInvalidArgument,
          std::string(what) + " must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  Require(eig.eigenvalues().minCoeff() >= -1e-12 * scale,
          ErrorCode::kNotPositiveDefinite,
          std::string(what) + " must be positive semidefinite");
}

void RequireSpd(const Matrix& a, const char* what) {
  Require(IsSymmetric(a, 1e-10), ErrorCode::kInvalidArgument,
          std::string(what) + " must be symmetric");
  Eigen::LLT<Matrix> llt(a);
  Require(llt.info() == Eigen::Success, ErrorCode::kNotPositiveDefinite,
          std::string(what) + " must be positive definite");
}

Matrix Symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace

void LtiSystem::Validate() const {
  Require(a.rows() >= 1 && a.rows() == a.cols(), ErrorCode::kShapeMismatch,
          "lti: A must be square");
  Require(b.rows() == a.rows() && b.cols() >= 1, ErrorCode::kShapeMismatch,
          "lti: B must have n rows");
  Require(w.rows() == a.rows() && w.cols() == a.rows(),
          ErrorCode::kShapeMismatch, "lti: W must be n x n");
  RequireSpd(w, "lti: W");
}

StackedSystem BuildStacked(const LtiSystem& sys, const Matrix& q,
                           const Matrix& r, const Matrix& q_end, int horizon) {
  sys.Validate();
  const int n = sys.state_dim();
  const int m = sys.control_dim();
  Require(horizon >= 1, ErrorCode::kInvalidArgument,
          "stacked: horizon must be at least 1");
  Require(q.rows() == n && q.cols() == n && q_end.rows() == n &&
              q_end.cols() == n && r.rows() == m && r.cols() == m,
          ErrorCode::kShapeMismatch, "stacked: cost matrix dimensions");
  RequirePsd(q, "Q");
  RequirePsd(q_end, "Q_end");
  RequireSpd(r, "R");

  StackedSystem s;
  s.horizon = horizon;
  s.state_dim = n;
  s.control_dim = m;
  const int rows = (horizon + 1) * n;

  // powers[k] = A^k
  std::vector<Matrix> powers(horizon + 1);
  powers[0] = Matrix::Identity(n, n);
  for (int k = 1; k <= horizon; ++k) powers[k] = sys.a * powers[k - 1];

  s.f.resize(rows, n);
  s.g = Matrix::Zero(rows, horizon * m);
  s.l = Matrix::Zero(rows, horizon * n);
  for (int h = 0; h <= horizon; ++h) {
    s.f.block(h * n, 0, n, n) = powers[h];
    for (int j = 0; j < h; ++j) {
      s.g.block(h * n, j * m, n, m) = powers[h - 1 - j] * sys.b;
      s.l.block(h * n, j * n, n, n) = powers[h - 1 - j];
    }
  }

  s.block_q = Matrix::Zero(rows, rows);
  for (int h = 0; h < horizon; ++h) s.block_q.block(h * n, h * n, n, n) = q;
  s.block_q.block(horizon * n, horizon * n, n, n) = q_end;
  s.block_r = Matrix::Zero(horizon * m, horizon * m);
  s.block_w = Matrix::Zero(horizon * n, horizon * n);
  for (int h = 0; h < horizon; ++h) {
    s.block_r.block(h * m, h * m, m, m) = r;
    s.block_w.block(h * n, h * n, n, n) = sys.w;
  }
  return s;
}

Vector StackedSystem::Simulate(const Vector& x0, const Vector& u,
                               const Vector& w) const {
  Require(x0.size() == state_dim && u.size() == g.cols() && w.size() == l.cols(),
          ErrorCode::kShapeMismatch, "stacked: simulate dimensions");
  return f * x0 + g * u + l * w;
}

double StackedSystem::Cost(const Vector& states, const Vector& u) const {
  return 0.5 * states.dot(block_q * states) + 0.5 * u.dot(block_r * u);
}

Matrix StackedSystem::NoiseKernel() const {
  return Symmetrized(l * block_w * l.transpose());
}

// ---------------------------------------------------------------------------
// QuadraticLoss

void QuadraticLoss::Validate() const {
  Require(hessian.rows() == hessian.cols() && linear.size() == hessian.rows(),
          ErrorCode::kShapeMismatch, "quadratic loss: dimension mismatch");
  RequireSpd(hessian, "quadratic loss hessian");
}

double QuadraticLoss::Evaluate(const Vector& theta) const {
  return 0.5 * theta.dot(hessian * theta) + linear.dot(theta) + constant;
}

Vector QuadraticLoss::Gradient(const Vector& theta) const {
  return hessian * theta + linear;
}

Vector QuadraticLoss::Minimizer() const {
  Validate();
  return -hessian.llt().solve(linear);
}

double QuadraticLoss::Minimum() const {
  Validate();
  return constant - 0.5 * linear.dot(hessian.llt().solve(linear));
}

QuadraticLoss LqrQuadratic(const StackedSystem& s, const Vector& x0) {
  Require(x0.size() == s.state_dim, ErrorCode::kShapeMismatch,
          "lqr: initial state dimension");
  const Vector free_states = s.f * x0;
  QuadraticLoss loss;
  loss.hessian = Symmetrized(s.g.transpose() * s.block_q * s.g + s.block_r);
  loss.linear = s.g.transpose() * s.block_q * free_states;
  loss.constant = 0.5 * free_states.dot(s.block_q * free_states) +
                  0.5 * (s.block_q * s.NoiseKernel()).trace();
  loss.Validate();
  return loss;
}

QuadraticLoss LeqrQuadratic(const StackedSystem& s, const Vector& x0,
                            double lambda) {
  Require(x0.size() == s.state_dim, ErrorCode::kShapeMismatch,
          "leqr: initial state dimension");
  Require(lambda > 0.0 && std::isfinite(lambda), ErrorCode::kInvalidArgument,
          "leqr: lambda must be positive");
  const int n = s.state_dim;
  const int tail = s.horizon * n;

  // Gaussian over x_1..x_H: mean F' x0 + G' theta, covariance K.
  const Matrix kernel = s.NoiseKernel().bottomRightCorner(tail, tail);
  Eigen::LLT<Matrix> kernel_llt(kernel);
  Require(kernel_llt.info() == Eigen::Success, ErrorCode::kNotPositiveDefinite,
          "leqr: singular noise kernel");
  const Matrix f_tail = s.f.bottomRows(tail);
  const Matrix g_tail = s.g.bottomRows(tail);
  const Matrix q_scaled = s.block_q.bottomRightCorner(tail, tail) / lambda;
  const Matrix q0_scaled = s.block_q.topLeftCorner(n, n) / lambda;

  // Completing the square in E[exp(-1/2 x^T Q' x)] leaves the quadratic form
  // K^-1 - K^-1 (Q' + K^-1)^-1 K^-1 in the mean.
  const Matrix k_inv = kernel_llt.solve(Matrix::Identity(tail, tail));
  const Matrix inner = Symmetrized(q_scaled + k_inv);
  Eigen::LLT<Matrix> inner_llt(inner);
  Require(inner_llt.info() == Eigen::Success, ErrorCode::kNotPositiveDefinite,
          "leqr: kernel factorization failed");
  const Matrix form = Symmetrized(k_inv - k_inv * inner_llt.solve(k_inv));

  const Vector free_states = f_tail * x0;
  QuadraticLoss loss;
  loss.hessian = Symmetrized(g_tail.transpose() * form * g_tail +
                             s.block_r / lambda);
  loss.linear = g_tail.transpose() * form * free_states;
  const Matrix det_arg = q_scaled * kernel + Matrix::Identity(tail, tail);
  const double log_det = std::log(std::abs(det_arg.partialPivLu().determinant()));
  loss.constant = 0.5 * free_states.dot(form * free_states) +
                  0.5 * x0.dot(q0_scaled * x0) + 0.5 * log_det;
  loss.Validate();
  return loss;
}

double GaussianExpQuadratic(const Vector& mu, const Matrix& sigma,
                            const Matrix& a, const Vector& b) {
  const auto n = mu.size();
  Require(sigma.rows() == n && sigma.cols() == n && a.rows() == n &&
              a.cols() == n && b.size() == n,
          ErrorCode::kShapeMismatch, "gaussian exp quadratic: dimensions");
  Eigen::LLT<Matrix> sigma_llt(sigma);
  Require(sigma_llt.info() == Eigen::Success, ErrorCode::kNotPositiveDefinite,
          "gaussian exp quadratic: covariance must be positive definite");
  const Matrix sigma_inv = sigma_llt.solve(Matrix::Identity(n, n));
  const Vector shifted = sigma_inv * mu - b;
  const Matrix inner = Symmetrized(a + sigma_inv);
  const double exponent =
      -0.5 * (mu.dot(sigma_inv * mu) - shifted.dot(inner.llt().solve(shifted)));
  const double det =
      (a * sigma + Matrix::Identity(n, n)).partialPivLu().determinant();
  return std::exp(exponent) / std::sqrt(det);
}

Vector StackMeans(const HorizonParams& params) {
  const int m = params.control_dim();
  Vector out(params.horizon() * m);
  for (int h = 0; h < params.horizon(); ++h) {
    out.segment(h * m, m) = params.gaussian(h).mean();
  }
  return out;
}

HorizonParams WithMeans(const HorizonParams& params, const Vector& stacked) {
  const int m = params.control_dim();
  Require(params.family() == Family::kGaussian, ErrorCode::kUnsupported,
          "means are only defined for gaussian horizons");
  Require(stacked.size() == params.horizon() * m, ErrorCode::kShapeMismatch,
          "stacked mean dimension mismatch");
  std::vector<BasicParams> steps;
  steps.reserve(params.horizon());
  for (int h = 0; h < params.horizon(); ++h) {
    steps.emplace_back(GaussianParams(stacked.segment(h * m, m),
                                      params.gaussian(h).covariance()));
  }
  return HorizonParams(std::move(steps));
}

}  // namespace dmdmpc
