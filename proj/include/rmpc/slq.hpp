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

// Sequential linear-quadratic (SLQ) trajectory optimization over a generic
// continuous-time optimal control problem. The problem supplies dynamics,
// analytic Jacobians and a quadratic model of its costs; the solver handles
// RK4 discretization (with the exact Jacobian of the RK4 map), the Riccati
// backward pass and a backtracking line search that only accepts steps that
// lower the total cost.

#pragma once

#include <chrono>
#include <cmath>
#include <concepts>
#include <functional>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rmpc/errors.hpp"

namespace rmpc {

struct StageQuadratic {
  double value = 0.0;
  Eigen::VectorXd lx, lu;
  Eigen::MatrixXd lxx, luu, lux;
};

struct TerminalQuadratic {
  double value = 0.0;
  Eigen::VectorXd px;
  Eigen::MatrixXd pxx;
};

template <class P>
concept OptimalControlProblem = requires(const P& p, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                         Eigen::MatrixXd& a, Eigen::MatrixXd& b, StageQuadratic& sq,
                                         TerminalQuadratic& tq) {
  { p.state_dim() } -> std::convertible_to<int>;
  { p.control_dim() } -> std::convertible_to<int>;
  { p.derivative(x, u) } -> std::convertible_to<Eigen::VectorXd>;
  p.jacobians(x, u, a, b);
  { p.stage_cost(x, u) } -> std::convertible_to<double>;
  p.stage_quadratic(x, u, sq);
  { p.terminal_cost(x) } -> std::convertible_to<double>;
  p.terminal_quadratic(x, tq);
};

struct SlqSettings {
  double horizon = 1.0;  // T_h [s]
  double dt = 0.01;      // rollout step [s]
  int max_iterations = 10;
  // Line-search steps are 2^-k for k = 0 .. line_search_halvings.
  int line_search_halvings = 10;
  // Stop once the relative cost decrease of an accepted step falls below this.
  double convergence_tolerance = 1e-4;
  double min_hessian_eigenvalue = 1e-6;
  bool log_iterations = false;

  int knots() const { return static_cast<int>(std::lround(horizon / dt)); }

  void validate() const {
    if (!(horizon > 0.0)) throw ConfigError("slq.horizon", "must be > 0");
    if (!(dt > 0.0)) throw ConfigError("slq.dt", "must be > 0");
    if (std::abs(horizon / dt - knots()) > 1e-9 * std::max(1.0, horizon / dt)) {
      throw ConfigError("slq.horizon", "horizon / dt must be an integer");
    }
    if (max_iterations < 1) throw ConfigError("slq.max_iterations", "must be >= 1");
    if (line_search_halvings < 0) throw ConfigError("slq.line_search_halvings", "must be >= 0");
    if (!(convergence_tolerance >= 0.0)) throw ConfigError("slq.convergence_tolerance", "must be >= 0");
    if (!(min_hessian_eigenvalue > 0.0)) throw ConfigError("slq.min_hessian_eigenvalue", "must be > 0");
  }
};

struct SlqResult {
  std::vector<Eigen::VectorXd> controls;  // N entries
  std::vector<Eigen::VectorXd> states;    // N + 1 entries
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  double solve_time = 0.0;           // wall clock [s]
  std::vector<double> cost_history;  // initial cost, then every accepted cost
};

class SolverDiverged : public std::runtime_error {
 public:
  SolverDiverged(const std::string& what, SlqResult last) : std::runtime_error(what), last_(std::move(last)) {}
  const SlqResult& last_iterate() const { return last_; }

 private:
  SlqResult last_;
};

/// Exact derivative of one RK4 step with respect to (x, u).
template <OptimalControlProblem P>
Eigen::VectorXd rk4_discretize(const P& p, const Eigen::VectorXd& x, const Eigen::VectorXd& u, double h,
                               Eigen::MatrixXd* ad = nullptr, Eigen::MatrixXd* bd = nullptr) {
  const Eigen::VectorXd k1 = p.derivative(x, u);
  const Eigen::VectorXd x2 = x + 0.5 * h * k1;
  const Eigen::VectorXd k2 = p.derivative(x2, u);
  const Eigen::VectorXd x3 = x + 0.5 * h * k2;
  const Eigen::VectorXd k3 = p.derivative(x3, u);
  const Eigen::VectorXd x4 = x + h * k3;
  const Eigen::VectorXd k4 = p.derivative(x4, u);
  if (ad != nullptr && bd != nullptr) {
    const auto n = x.size();
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd a, b;
    p.jacobians(x, u, a, b);
    const Eigen::MatrixXd k1x = a, k1u = b;
    p.jacobians(x2, u, a, b);
    const Eigen::MatrixXd k2x = a * (eye + 0.5 * h * k1x);
    const Eigen::MatrixXd k2u = a * (0.5 * h * k1u) + b;
    p.jacobians(x3, u, a, b);
    const Eigen::MatrixXd k3x = a * (eye + 0.5 * h * k2x);
    const Eigen::MatrixXd k3u = a * (0.5 * h * k2u) + b;
    p.jacobians(x4, u, a, b);
    const Eigen::MatrixXd k4x = a * (eye + h * k3x);
    const Eigen::MatrixXd k4u = a * (h * k3u) + b;
    *ad = eye + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    *bd = (h / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
  }
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

template <OptimalControlProblem P>
class SlqSolver {
 public:
  explicit SlqSolver(SlqSettings settings = {}) : settings_(settings) { settings_.validate(); }

  const SlqSettings& settings() const { return settings_; }

  /// Total cost of the open-loop rollout of `controls` from x0.
  double rollout_cost(const P& p, const Eigen::VectorXd& x0, const std::vector<Eigen::VectorXd>& controls,
                      std::vector<Eigen::VectorXd>* states = nullptr) const {
    const double dt = settings_.dt;
    Eigen::VectorXd x = x0;
    double cost = 0.0;
    if (states != nullptr) {
      states->resize(controls.size() + 1);
      (*states)[0] = x;
    }
    for (std::size_t k = 0; k < controls.size(); ++k) {
      cost += dt * p.stage_cost(x, controls[k]);
      x = rk4_discretize(p, x, controls[k], dt);
      if (states != nullptr) (*states)[k + 1] = x;
    }
    return cost + p.terminal_cost(x);
  }

  /// Solves from x0. `initial_controls` (N entries) warm-starts the iteration;
  /// when empty the solver starts from zero controls.
  SlqResult solve(const P& p, const Eigen::VectorXd& x0,
                  const std::vector<Eigen::VectorXd>& initial_controls = {}) const {
    const auto start = std::chrono::steady_clock::now();
    const int n = settings_.knots();
    const int nx = p.state_dim();
    const int nu = p.control_dim();
    if (x0.size() != nx) throw DimensionError("initial state has wrong dimension");

    SlqResult res;
    if (initial_controls.empty()) {
      res.controls.assign(static_cast<std::size_t>(n), Eigen::VectorXd::Zero(nu));
    } else {
      if (static_cast<int>(initial_controls.size()) != n) {
        throw DimensionError("warm start has " + std::to_string(initial_controls.size()) + " controls, expected " +
                             std::to_string(n));
      }
      res.controls = initial_controls;
    }
    res.cost = rollout_cost(p, x0, res.controls, &res.states);
    if (!std::isfinite(res.cost)) {
      res.solve_time = elapsed(start);
      throw SolverDiverged("non-finite cost in the initial rollout", std::move(res));
    }
    res.cost_history.push_back(res.cost);

    std::vector<Eigen::MatrixXd> gains(static_cast<std::size_t>(n));
    std::vector<Eigen::VectorXd> ff(static_cast<std::size_t>(n));
    std::vector<Eigen::VectorXd> new_states, new_controls;
    Eigen::MatrixXd ad, bd;
    StageQuadratic sq;
    TerminalQuadratic tq;
    const double dt = settings_.dt;

    for (int it = 0; it < settings_.max_iterations; ++it) {
      ++res.iterations;

      // Backward Riccati pass on the local LQ approximation.
      p.terminal_quadratic(res.states.back(), tq);
      Eigen::VectorXd vx = tq.px;
      Eigen::MatrixXd vxx = tq.pxx;
      double expected = 0.0;
      for (int k = n - 1; k >= 0; --k) {
        const auto& x = res.states[static_cast<std::size_t>(k)];
        const auto& u = res.controls[static_cast<std::size_t>(k)];
        rk4_discretize(p, x, u, dt, &ad, &bd);
        p.stage_quadratic(x, u, sq);
        const Eigen::VectorXd qx = dt * sq.lx + ad.transpose() * vx;
        const Eigen::VectorXd qu = dt * sq.lu + bd.transpose() * vx;
        const Eigen::MatrixXd vxx_a = vxx * ad;
        const Eigen::MatrixXd vxx_b = vxx * bd;
        const Eigen::MatrixXd qxx = dt * sq.lxx + ad.transpose() * vxx_a;
        Eigen::MatrixXd quu = dt * sq.luu + bd.transpose() * vxx_b;
        const Eigen::MatrixXd qux = dt * sq.lux + bd.transpose() * vxx_a;
        quu = 0.5 * (quu + quu.transpose()).eval();

        const Eigen::MatrixXd quu_inv = regularized_inverse(quu);
        Eigen::MatrixXd& kk = gains[static_cast<std::size_t>(k)];
        Eigen::VectorXd& kf = ff[static_cast<std::size_t>(k)];
        kk = -quu_inv * qux;
        kf = -quu_inv * qu;
        expected += kf.dot(qu);

        vx = qx + kk.transpose() * (quu * kf) + kk.transpose() * qu + qux.transpose() * kf;
        vxx = qxx + kk.transpose() * quu * kk + kk.transpose() * qux + qux.transpose() * kk;
        vxx = 0.5 * (vxx + vxx.transpose()).eval();
      }
      if (!vx.allFinite() || !vxx.allFinite()) {
        res.solve_time = elapsed(start);
        throw SolverDiverged("non-finite value function in the backward pass", std::move(res));
      }

      // Line search: accept the first step that lowers the cost.
      bool accepted = false;
      double step = 1.0;
      double new_cost = res.cost;
      for (int ls = 0; ls <= settings_.line_search_halvings; ++ls, step *= 0.5) {
        new_cost = forward_pass(p, x0, res, gains, ff, step, new_states, new_controls);
        if (std::isfinite(new_cost) && new_cost < res.cost) {
          accepted = true;
          break;
        }
      }
      if (settings_.log_iterations) {
        std::clog << "slq iteration=" << it << " cost=" << (accepted ? new_cost : res.cost)
                  << " step=" << (accepted ? step : 0.0) << " expected_decrease=" << -expected << '\n';
      }
      if (!accepted) {
        res.converged = true;
        break;
      }
      const double decrease = res.cost - new_cost;
      const double scale = std::max(std::abs(res.cost), std::numeric_limits<double>::min());
      res.states.swap(new_states);
      res.controls.swap(new_controls);
      res.cost = new_cost;
      res.cost_history.push_back(new_cost);
      if (decrease < settings_.convergence_tolerance * scale) {
        res.converged = true;
        break;
      }
    }
    res.solve_time = elapsed(start);
    return res;
  }

 private:
  static double elapsed(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }

  Eigen::MatrixXd regularized_inverse(const Eigen::MatrixXd& quu) const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(quu);
    Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(settings_.min_hessian_eigenvalue);
    return eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  }

  double forward_pass(const P& p, const Eigen::VectorXd& x0, const SlqResult& nominal,
                      const std::vector<Eigen::MatrixXd>& gains, const std::vector<Eigen::VectorXd>& ff,
                      double step, std::vector<Eigen::VectorXd>& states,
                      std::vector<Eigen::VectorXd>& controls) const {
    const std::size_t n = nominal.controls.size();
    const double dt = settings_.dt;
    states.resize(n + 1);
    controls.resize(n);
    states[0] = x0;
    double cost = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      controls[k] = nominal.controls[k] + step * ff[k] + gains[k] * (states[k] - nominal.states[k]);
      cost += dt * p.stage_cost(states[k], controls[k]);
      states[k + 1] = rk4_discretize(p, states[k], controls[k], dt);
      if (!std::isfinite(cost)) return cost;
    }
    return cost + p.terminal_cost(states[n]);
  }

  SlqSettings settings_;
};

/// Receding-horizon wrapper: solves, returns the first control and keeps the
/// solution shifted by `shift` seconds as the next warm start.
template <OptimalControlProblem P>
class MpcSolver {
 public:
  struct Step {
    Eigen::VectorXd control;  // u(t0)
    double solve_time = 0.0;  // Δt_p [s], always > 0
    SlqResult result;
  };

  explicit MpcSolver(SlqSettings settings = {}, double shift = -1.0)
      : slq_(settings), shift_(shift > 0.0 ? shift : settings.dt) {}

  const SlqSettings& settings() const { return slq_.settings(); }
  void reset_warm_start() { warm_.clear(); }
  bool has_warm_start() const { return !warm_.empty(); }

  Step step(const P& p, const Eigen::VectorXd& x0) {
    const auto start = std::chrono::steady_clock::now();
    if (!warm_.empty() && warm_.front().size() != p.control_dim()) warm_.clear();
    SlqResult res;
    try {
      res = slq_.solve(p, x0, warm_);
    } catch (const SolverDiverged&) {
      warm_.clear();
      throw;
    }
    Step out;
    out.control = res.controls.front();
    out.solve_time = std::max(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(),
                              std::numeric_limits<double>::min());
    res.solve_time = out.solve_time;
    // Shift the solution for the next call, repeating the last control.
    const auto n = res.controls.size();
    const auto s = std::min<std::size_t>(n, static_cast<std::size_t>(std::lround(shift_ / slq_.settings().dt)));
    warm_.assign(n, res.controls.back());
    for (std::size_t k = 0; k + s < n; ++k) warm_[k] = res.controls[k + s];
    out.result = std::move(res);
    return out;
  }

 private:
  SlqSolver<P> slq_;
  double shift_;
  std::vector<Eigen::VectorXd> warm_;
};

}  // namespace rmpc
