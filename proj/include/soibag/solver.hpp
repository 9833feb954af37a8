#pragma once

#include <soibag/rng.hpp>
#include <soibag/types.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

namespace soibag {

using CostFn = std::function<double(const VecX&)>;

// Two-sided interval constraint lower <= evaluator(p) <= upper.
struct ConstraintSpec {
  CostFn evaluator;
  double lower;
  double upper;
};

struct SolveOptions {
  double feas_tol = 1e-6;       // max interval exceedance, native units
  double cost_rel_tol = 1e-9;   // relative cost change termination
  double grad_tol = 1e-8;       // infinity-norm gradient termination
  double fd_step_rel = 1e-6;    // central-difference relative step
  double mu_init = 10.0;        // penalty schedule 10^1 .. 10^6
  double mu_max = 1e6;
  double mu_growth = 10.0;
  int max_inner_iters = 200;    // per penalty stage
  int restarts = 5;             // jittered restarts when infeasible
  double restart_jitter = 0.1;  // relative jitter magnitude
  std::uint64_t seed = 0;
};

struct SolveReport {
  VecX params;
  double cost = 0.0;           // raw cost, penalty excluded
  double max_violation = 0.0;
  int iterations = 0;          // total inner iterations
  bool converged = false;
  std::vector<double> stage_violations;  // recorded after each penalty stage
};

namespace detail {

inline double interval_violation(const ConstraintSpec& c, double value) {
  return std::max(c.lower - value, 0.0) + std::max(value - c.upper, 0.0);
}

inline double max_violation(const std::vector<ConstraintSpec>& cs, const VecX& p) {
  double worst = 0.0;
  for (const auto& c : cs) worst = std::max(worst, interval_violation(c, c.evaluator(p)));
  return worst;
}

inline double penalty_sum(const std::vector<ConstraintSpec>& cs, const VecX& p) {
  double sum = 0.0;
  for (const auto& c : cs) {
    const double g = c.evaluator(p);
    const double lo = std::max(c.lower - g, 0.0);
    const double hi = std::max(g - c.upper, 0.0);
    sum += lo * lo + hi * hi;
  }
  return sum;
}

// BFGS descent with Armijo backtracking on an explicit (cost + penalty)
// objective; gradients by central finite differences.
struct InnerResult {
  VecX x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

inline InnerResult bfgs_minimize(const CostFn& objective, VecX x,
                                 const SolveOptions& opts) {
  const int dim = static_cast<int>(x.size());
  const auto grad = [&](const VecX& p) {
    VecX g(dim);
    VecX q = p;
    for (int i = 0; i < dim; ++i) {
      const double h = opts.fd_step_rel * std::max(1.0, std::abs(p(i)));
      q(i) = p(i) + h;
      const double fp = objective(q);
      q(i) = p(i) - h;
      const double fm = objective(q);
      q(i) = p(i);
      g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
  };

  InnerResult res;
  double f = objective(x);
  if (!std::isfinite(f)) throw NonFiniteCost("objective not finite at start point");
  VecX g = grad(x);
  MatX h_inv = MatX::Identity(dim, dim);
  bool scaled_h = false;

  for (int it = 0; it < opts.max_inner_iters; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      res.converged = true;
      break;
    }
    VecX dir = -(h_inv * g);
    double slope = dir.dot(g);
    if (!(slope < 0.0)) {
      h_inv.setIdentity();
      scaled_h = false;
      dir = -g;
      slope = dir.dot(g);
    }
    // Armijo backtracking; non-finite trial values are rejected outright.
    // The very first step is capped at unit length until the inverse Hessian
    // carries curvature information.
    double t = scaled_h ? 1.0 : std::min(1.0, 1.0 / std::max(1.0, dir.norm()));
    double f_new = std::numeric_limits<double>::infinity();
    VecX x_new;
    bool accepted = false;
    for (int ls = 0; ls < 48; ++ls) {
      x_new = x + t * dir;
      f_new = objective(x_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    ++res.iterations;
    if (!accepted) break;

    const VecX g_new = grad(x_new);
    const VecX s = x_new - x;
    const VecX y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled_h) {
        h_inv *= sy / y.squaredNorm();
        scaled_h = true;
      }
      const VecX hy = h_inv * y;
      const double yhy = y.dot(hy);
      h_inv += ((sy + yhy) / (sy * sy)) * (s * s.transpose()) -
               (hy * s.transpose() + s * hy.transpose()) / sy;
    }
    const double rel_change = std::abs(f - f_new) / std::max(std::abs(f), 1e-12);
    x = x_new;
    g = g_new;
    f = f_new;
    if (rel_change <= opts.cost_rel_tol) {
      res.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  res.value = f;
  return res;
}

}  // namespace detail

// Quadratic-penalty minimization of `cost` subject to interval constraints:
// outer loop over an increasing penalty schedule, warm-started BFGS inside.
// Jittered deterministic restarts kick in when the first pass is infeasible.
inline SolveReport minimize_penalized(const CostFn& cost,
                                      const std::vector<ConstraintSpec>& constraints,
                                      const VecX& init,
                                      const SolveOptions& opts = {}) {
  if (!std::isfinite(cost(init)))
    throw NonFiniteCost("cost not finite at the initial point");
  for (const auto& c : constraints)
    if (!std::isfinite(c.evaluator(init)))
      throw NonFiniteCost("constraint not finite at the initial point");

  Rng rng(opts.seed);
  SolveReport best;
  bool have_best = false;

  for (int attempt = 0; attempt <= opts.restarts; ++attempt) {
    VecX x = init;
    if (attempt > 0) {
      for (int i = 0; i < x.size(); ++i) {
        const double scale = std::max(1e-3, std::abs(init(i)));
        x(i) += rng.normal(0.0, opts.restart_jitter * scale);
      }
      if (!std::isfinite(cost(x))) continue;
    }

    SolveReport report;
    bool inner_converged = false;
    for (double mu = opts.mu_init; mu <= opts.mu_max * (1.0 + 1e-12);
         mu *= opts.mu_growth) {
      const auto penalized = [&](const VecX& p) {
        return cost(p) + mu * detail::penalty_sum(constraints, p);
      };
      detail::InnerResult inner = detail::bfgs_minimize(penalized, x, opts);
      x = inner.x;
      report.iterations += inner.iterations;
      inner_converged = inner.converged;
      report.stage_violations.push_back(detail::max_violation(constraints, x));
      if (report.stage_violations.back() <= opts.feas_tol && inner.converged) break;
    }
    report.params = x;
    report.cost = cost(x);
    report.max_violation = detail::max_violation(constraints, x);
    report.converged = report.max_violation <= opts.feas_tol && inner_converged;

    const auto better = [&](const SolveReport& a, const SolveReport& b) {
      if (a.converged != b.converged) return a.converged;
      if (a.max_violation != b.max_violation) return a.max_violation < b.max_violation;
      return a.cost < b.cost;
    };
    if (!have_best || better(report, best)) {
      best = report;
      have_best = true;
    }
    if (best.converged) break;
  }
  return best;
}

}  // namespace soibag
