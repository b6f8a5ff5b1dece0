#pragma once

// Bound-constrained nonlinear minimization with finite-difference gradients.
//
// Each iteration solves the box-constrained quadratic model
//   min_d  g'd + 0.5 d'Bd   s.t.  lower - x <= d <= upper - x
// with a small active-set loop, then backtracks along d (Armijo) and updates
// B with a damped BFGS formula. This is the SQP scheme specialized to simple
// bounds.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "xmopkit/common.hpp"

namespace xmopkit {

struct BoundConstrainedProblem {
  std::function<double(const VectorXd&)> objective;
  VectorXd lower;
  VectorXd upper;
  VectorXd initial;
};

struct MinimizeOptions {
  int max_iterations = 100;
  double gradient_step = 1e-6;
  double tolerance = 1e-8;
  double max_step = 0.5;  // infinity-norm cap on a single step
};

struct SolveResult {
  VectorXd solution;
  double cost = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

/// Central-difference gradient. When `f0 = f(x)` is supplied and the two
/// one-sided differences disagree by more than `jump` (a discontinuity
/// inside the stencil), the smaller one-sided difference is used instead.
inline VectorXd finite_difference_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                                           double step, std::optional<double> f0 = std::nullopt,
                                           double jump = 1.0) {
  VectorXd g(x.size());
  VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double fp = f(probe);
    probe[i] = x[i] - step;
    const double fm = f(probe);
    probe[i] = x[i];
    g[i] = (fp - fm) / (2.0 * step);
    if (f0) {
      const double fwd = (fp - *f0) / step;
      const double bwd = (*f0 - fm) / step;
      if (std::abs(fwd - bwd) > jump) g[i] = std::abs(fwd) < std::abs(bwd) ? fwd : bwd;
    }
  }
  return g;
}

namespace detail {

inline VectorXd projected_gradient(const VectorXd& x, const VectorXd& g, const VectorXd& lo, const VectorXd& hi) {
  VectorXd pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)) pg[i] = 0.0;
  }
  return pg;
}

// Primal active-set solve of the box-constrained quadratic subproblem,
// starting from the feasible point d = 0. Falls back to the clipped
// steepest-descent step when a reduced Hessian is not positive definite.
inline VectorXd box_qp_step(const Eigen::MatrixXd& B, const VectorXd& g, const VectorXd& dlo, const VectorXd& dhi) {
  const Eigen::Index n = g.size();
  const auto at = [](Eigen::Index i) { return static_cast<std::size_t>(i); };
  VectorXd d = VectorXd::Zero(n);
  std::vector<int> state(at(n), 0);  // -1 fixed at lower, +1 fixed at upper, 0 free
  for (Eigen::Index i = 0; i < n; ++i) {
    if (dlo[i] >= 0.0 && g[i] > 0.0) state[at(i)] = -1;
    if (dhi[i] <= 0.0 && g[i] < 0.0) state[at(i)] = 1;
  }
  for (int pass = 0; pass < 4 * static_cast<int>(n) + 4; ++pass) {
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (state[at(i)] == 0) free.push_back(i);
    }
    VectorXd target = d;
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd bff(nf, nf);
      VectorXd rhs(nf);
      for (Eigen::Index a = 0; a < nf; ++a) {
        double r = -g[free[at(a)]];
        for (Eigen::Index k = 0; k < n; ++k) {
          if (state[at(k)] != 0) r -= B(free[at(a)], k) * d[k];
        }
        rhs[a] = r;
        for (Eigen::Index b = 0; b < nf; ++b) bff(a, b) = B(free[at(a)], free[at(b)]);
      }
      Eigen::LLT<Eigen::MatrixXd> llt(bff);
      if (llt.info() != Eigen::Success) return (-g).cwiseMax(dlo).cwiseMin(dhi);
      const VectorXd sol = llt.solve(rhs);
      for (Eigen::Index a = 0; a < nf; ++a) target[free[at(a)]] = sol[a];
    }
    // Move toward the subproblem minimizer until the first bound blocks.
    double step = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i : free) {
      const double delta = target[i] - d[i];
      if (delta < 0.0 && target[i] < dlo[i]) {
        const double t = (dlo[i] - d[i]) / delta;
        if (t < step) {
          step = t;
          blocking = i;
        }
      } else if (delta > 0.0 && target[i] > dhi[i]) {
        const double t = (dhi[i] - d[i]) / delta;
        if (t < step) {
          step = t;
          blocking = i;
        }
      }
    }
    d += step * (target - d);
    if (blocking >= 0) {
      state[at(blocking)] = target[blocking] < d[blocking] ? -1 : 1;
      d[blocking] = state[at(blocking)] < 0 ? dlo[blocking] : dhi[blocking];
      continue;
    }
    // Release the fixed variable whose multiplier has the wrong sign.
    const VectorXd grad = g + B * d;
    Eigen::Index worst = -1;
    double worst_val = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int st = state[at(i)];
      const double v = st < 0 ? -grad[i] : (st > 0 ? grad[i] : 0.0);
      if (v > worst_val + 1e-14) {
        worst_val = v;
        worst = i;
      }
    }
    if (worst < 0) break;
    state[at(worst)] = 0;
  }
  return d.cwiseMax(dlo).cwiseMin(dhi);
}

}  // namespace detail

inline SolveResult minimize(const BoundConstrainedProblem& problem, const MinimizeOptions& options = {}) {
  const VectorXd& lo = problem.lower;
  const VectorXd& hi = problem.upper;
  if (lo.size() != hi.size() || lo.size() != problem.initial.size()) {
    throw InvalidArgument("minimize: bounds and initial guess differ in dimension");
  }
  if (!lo.allFinite() || !hi.allFinite() || (lo.array() > hi.array()).any()) {
    throw InvalidArgument("minimize: bounds must be finite with lower <= upper");
  }
  const Eigen::Index n = lo.size();
  auto eval = [&](const VectorXd& x) {
    const double v = problem.objective(x);
    if (!std::isfinite(v)) throw NumericalError("minimize: objective returned a non-finite value");
    return v;
  };

  SolveResult res;
  VectorXd x = clamp_to_box(problem.initial, lo, hi);
  double f = eval(x);
  Eigen::MatrixXd B = Eigen::MatrixXd::Identity(n, n);
  bool fresh_hessian = true;
  VectorXd g = finite_difference_gradient(eval, x, options.gradient_step, f);

  int it = 0;
  for (; it < options.max_iterations; ++it) {
    if (detail::projected_gradient(x, g, lo, hi).lpNorm<Eigen::Infinity>() < options.tolerance) {
      res.converged = true;
      break;
    }
    VectorXd d = detail::box_qp_step(B, g, lo - x, hi - x);
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      B.setIdentity();
      fresh_hessian = true;
      d = (-g).cwiseMax(lo - x).cwiseMin(hi - x);
      slope = g.dot(d);
      if (!(slope < 0.0)) {
        res.converged = true;
        break;
      }
    }

    const double dn = d.lpNorm<Eigen::Infinity>();
    if (dn > options.max_step) {
      d *= options.max_step / dn;
      slope = g.dot(d);
    }

    double alpha = 1.0;
    VectorXd x_new = x;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      x_new = clamp_to_box(x + alpha * d, lo, hi);
      f_new = eval(x_new);
      if (f_new <= f + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      if (fresh_hessian) break;
      B.setIdentity();
      fresh_hessian = true;
      continue;
    }

    const VectorXd s = x_new - x;
    const double df = f - f_new;
    const VectorXd g_new = finite_difference_gradient(eval, x_new, options.gradient_step, f_new);
    const VectorXd y = g_new - g;

    // Damped BFGS update keeps B positive definite. A fresh identity is
    // first rescaled to the observed curvature.
    const double sy = s.dot(y);
    if (fresh_hessian && sy > 1e-300) B *= y.squaredNorm() / sy;
    const VectorXd bs = B * s;
    const double sbs = s.dot(bs);
    if (sbs > 1e-300) {
      const double theta = sy >= 0.2 * sbs ? 1.0 : 0.8 * sbs / (sbs - sy);
      const VectorXd r = theta * y + (1.0 - theta) * bs;
      const double sr = s.dot(r);
      if (sr > 1e-300) {
        B += r * r.transpose() / sr - bs * bs.transpose() / sbs;
        fresh_hessian = false;
      }
    }

    x = x_new;
    f = f_new;
    g = g_new;
    if (s.lpNorm<Eigen::Infinity>() < options.tolerance || df <= options.tolerance * std::abs(f)) {
      // A stalled quasi-Newton step gets one retry along the plain gradient.
      if (!fresh_hessian) {
        B.setIdentity();
        fresh_hessian = true;
        continue;
      }
      res.converged = true;
      ++it;
      break;
    }
  }
  res.solution = x;
  res.cost = f;
  res.iterations = it;
  return res;
}

}  // namespace xmopkit
