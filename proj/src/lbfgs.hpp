#pragma once

// Box-constrained limited-memory BFGS with a projected Armijo backtracking
// line search. Every accepted step strictly lowers the objective.

#include <cmath>
#include <deque>
#include <exception>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace ttgp::detail {

struct LbfgsOptions {
  int max_iters = 200;
  double grad_tol = 1e-6;
  int memory = 10;
  int max_backtracks = 40;
  double armijo = 1e-4;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  std::vector<double> history;  // objective after each accepted step, starting point first
  int iterations = 0;
};

/// `fg(x, grad)` returns f(x) and fills grad. It may throw; a throwing trial
/// point is rejected by the line search. The start point must evaluate.
template <typename Objective>
LbfgsResult minimize_lbfgs_box(Objective&& fg, Eigen::VectorXd x, const Eigen::VectorXd& lo,
                               const Eigen::VectorXd& hi, const LbfgsOptions& opts) {
  const Eigen::Index n = x.size();
  x = x.cwiseMax(lo).cwiseMin(hi);
  Eigen::VectorXd g(n);
  double f = fg(x, g);
  LbfgsResult out;
  out.history.push_back(f);

  auto projected = [&](const Eigen::VectorXd& at, const Eigen::VectorXd& grad) {
    Eigen::VectorXd pg = grad;
    for (Eigen::Index i = 0; i < n; ++i) {
      if ((at(i) <= lo(i) && grad(i) > 0) || (at(i) >= hi(i) && grad(i) < 0)) pg(i) = 0.0;
    }
    return pg;
  };

  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  for (int it = 0; it < opts.max_iters; ++it) {
    const Eigen::VectorXd pg = projected(x, g);
    if (pg.norm() < opts.grad_tol) break;

    // Two-loop recursion on the free variables.
    Eigen::VectorXd q = pg;
    std::vector<double> alphas(s_hist.size());
    for (int j = static_cast<int>(s_hist.size()) - 1; j >= 0; --j) {
      const double rho = 1.0 / y_hist[static_cast<std::size_t>(j)].dot(s_hist[static_cast<std::size_t>(j)]);
      alphas[static_cast<std::size_t>(j)] = rho * s_hist[static_cast<std::size_t>(j)].dot(q);
      q -= alphas[static_cast<std::size_t>(j)] * y_hist[static_cast<std::size_t>(j)];
    }
    if (!s_hist.empty()) {
      q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    } else {
      q /= std::max(1.0, pg.lpNorm<Eigen::Infinity>());
    }
    for (std::size_t j = 0; j < s_hist.size(); ++j) {
      const double rho = 1.0 / y_hist[j].dot(s_hist[j]);
      const double beta = rho * y_hist[j].dot(q);
      q += (alphas[j] - beta) * s_hist[j];
    }
    Eigen::VectorXd dir = -q;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (pg(i) == 0.0) dir(i) = 0.0;
    }
    if (!(dir.dot(pg) < 0)) {
      s_hist.clear();
      y_hist.clear();
      dir = -pg / std::max(1.0, pg.lpNorm<Eigen::Infinity>());
    }

    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd x_new(n);
    Eigen::VectorXd g_new(n);
    double f_new = 0.0;
    for (int bt = 0; bt < opts.max_backtracks; ++bt, t *= 0.5) {
      x_new = (x + t * dir).cwiseMax(lo).cwiseMin(hi);
      const double decrease = g.dot(x_new - x);
      if (!(decrease < 0)) continue;
      try {
        f_new = fg(x_new, g_new);
      } catch (const std::exception&) {
        continue;
      }
      if (std::isfinite(f_new) && f_new <= f + opts.armijo * decrease) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_new - g;
    if (s.dot(yv) > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      if (static_cast<int>(s_hist.size()) > opts.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
      }
    }
    x = x_new;
    g = g_new;
    f = f_new;
    out.history.push_back(f);
    ++out.iterations;
  }
  out.x = x;
  out.value = f;
  return out;
}

}  // namespace ttgp::detail
