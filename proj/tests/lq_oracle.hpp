// Copyright 2026 The rmpc Authors
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

// Linear-quadratic test problems and a finite-horizon discrete Riccati
// oracle, shared by the unit and acceptance suites.

#pragma once

#include <vector>

#include <Eigen/Dense>

#include "rmpc/slq.hpp"
#include "test_util.hpp"

namespace rmpc::testing {

/// xdot = A x + B u, l = x'Qx + u'Ru, terminal x'Qf x.
struct LinearQuadraticOcp {
  Eigen::MatrixXd a, b, q, r, qf;

  int state_dim() const { return static_cast<int>(a.rows()); }
  int control_dim() const { return static_cast<int>(b.cols()); }
  Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const { return a * x + b * u; }
  void jacobians(const Eigen::VectorXd&, const Eigen::VectorXd&, Eigen::MatrixXd& ja, Eigen::MatrixXd& jb) const {
    ja = a;
    jb = b;
  }
  double stage_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    return x.dot(q * x) + u.dot(r * u);
  }
  void stage_quadratic(const Eigen::VectorXd& x, const Eigen::VectorXd& u, StageQuadratic& s) const {
    s.value = stage_cost(x, u);
    s.lx = 2 * q * x;
    s.lu = 2 * r * u;
    s.lxx = 2 * q;
    s.luu = 2 * r;
    s.lux = Eigen::MatrixXd::Zero(u.size(), x.size());
  }
  double terminal_cost(const Eigen::VectorXd& x) const { return x.dot(qf * x); }
  void terminal_quadratic(const Eigen::VectorXd& x, TerminalQuadratic& t) const {
    t.value = terminal_cost(x);
    t.px = 2 * qf * x;
    t.pxx = 2 * qf;
  }
};

/// Exact RK4 map of a linear system: x+ = Phi x + Gamma u.
inline void rk4_linear_map(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double h, Eigen::MatrixXd& phi,
                           Eigen::MatrixXd& gamma) {
  const auto n = a.rows();
  const Eigen::MatrixXd ha = h * a;
  const Eigen::MatrixXd i = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd ha2 = ha * ha, ha3 = ha2 * ha, ha4 = ha3 * ha;
  phi = i + ha + ha2 / 2.0 + ha3 / 6.0 + ha4 / 24.0;
  gamma = h * (i + ha / 2.0 + ha2 / 6.0 + ha3 / 24.0) * b;
}

/// Open-loop optimal controls of the discrete finite-horizon LQR problem
/// sum_k dt (x'Qx + u'Ru) + x_N' Qf x_N via the backward Riccati recursion.
inline std::vector<Eigen::VectorXd> riccati_controls(const LinearQuadraticOcp& p, const Eigen::VectorXd& x0,
                                                     double dt, int n) {
  Eigen::MatrixXd phi, gamma;
  rk4_linear_map(p.a, p.b, dt, phi, gamma);
  std::vector<Eigen::MatrixXd> gains(static_cast<std::size_t>(n));
  Eigen::MatrixXd pk = p.qf;
  for (int k = n - 1; k >= 0; --k) {
    const Eigen::MatrixXd s = dt * p.r + gamma.transpose() * pk * gamma;
    const Eigen::MatrixXd kk = s.ldlt().solve(gamma.transpose() * pk * phi);
    gains[static_cast<std::size_t>(k)] = kk;
    pk = dt * p.q + phi.transpose() * pk * (phi - gamma * kk);
    pk = 0.5 * (pk + pk.transpose()).eval();
  }
  std::vector<Eigen::VectorXd> u(static_cast<std::size_t>(n));
  Eigen::VectorXd x = x0;
  for (int k = 0; k < n; ++k) {
    u[static_cast<std::size_t>(k)] = -gains[static_cast<std::size_t>(k)] * x;
    x = phi * x + gamma * u[static_cast<std::size_t>(k)];
  }
  return u;
}

inline LinearQuadraticOcp random_lq_problem(Gen& g, int nx, int nu) {
  LinearQuadraticOcp p;
  p.a = g.matrix(nx, nx, 1.0);
  p.b = g.matrix(nx, nu, 1.0);
  const Eigen::MatrixXd mq = g.matrix(nx, nx);
  p.q = mq * mq.transpose() + 0.1 * Eigen::MatrixXd::Identity(nx, nx);
  const Eigen::MatrixXd mr = g.matrix(nu, nu);
  p.r = mr * mr.transpose() + 0.1 * Eigen::MatrixXd::Identity(nu, nu);
  const Eigen::MatrixXd mf = g.matrix(nx, nx);
  p.qf = mf * mf.transpose() + Eigen::MatrixXd::Identity(nx, nx);
  return p;
}

inline LinearQuadraticOcp double_integrator() {
  LinearQuadraticOcp p;
  p.a = Eigen::Matrix2d{{0, 1}, {0, 0}};
  p.b = Eigen::Vector2d(0, 1);
  p.q = Eigen::Vector2d(10, 1).asDiagonal();
  p.r = Eigen::MatrixXd::Constant(1, 1, 0.1);
  p.qf = 100 * Eigen::Matrix2d::Identity();
  return p;
}

inline double max_norm_diff(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, (a[k] - b[k]).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace rmpc::testing
