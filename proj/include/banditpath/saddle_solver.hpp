#pragma once

// Solvers for the saddle-point system y = f(y; ir_hat), sum_k s_k^T = (T+K) mu_* - r:
// damped fixed-point iteration with a linearized ir_hat update, followed by
// Newton's method on the stacked residual with a finite-difference Jacobian.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "banditpath/bandit_core.hpp"
#include "banditpath/saddle_equations.hpp"

namespace banditpath {

/// Flattened order parameters [s, n, is_hat, in_hat, ir_hat]; 4K(T+1)+1 entries.
inline Eigen::VectorXd pack(const SaddleField& y) {
  const Eigen::Index m = y.s.size();
  Eigen::VectorXd x(4 * m + 1);
  x.segment(0, m) = y.s.reshaped();
  x.segment(m, m) = y.n.reshaped();
  x.segment(2 * m, m) = y.is_hat.reshaped();
  x.segment(3 * m, m) = y.in_hat.reshaped();
  x[4 * m] = y.ir_hat;
  return x;
}

inline SaddleField unpack(const Eigen::VectorXd& x, const SaddleField& shape) {
  SaddleField y = shape;
  const Eigen::Index K = shape.s.rows();
  const Eigen::Index cols = shape.s.cols();
  const Eigen::Index m = K * cols;
  y.s = x.segment(0, m).reshaped(K, cols);
  y.n = x.segment(m, m).reshaped(K, cols);
  y.is_hat = x.segment(2 * m, m).reshaped(K, cols);
  y.in_hat = x.segment(3 * m, m).reshaped(K, cols);
  y.ir_hat = x[4 * m];
  return y;
}

/// Stacked residual map F(y) = [y - f(y); sum_k s_k^T + r - (T+K) mu_*].
/// Throws NumericError when the forward pass breaks down.
inline Eigen::VectorXd residual_vector(const Eigen::VectorXd& x, const SaddleField& shape,
                                       const BanditSpec& spec, double r) {
  const SaddleField y = unpack(x, shape);
  const SaddleField image = apply_saddle_map(y, spec);
  Eigen::VectorXd out = x - pack(image);
  out[out.size() - 1] = constraint_violation(y, spec, r);
  return out;
}

/// y_new = alpha f(y) + (1 - alpha) y, ir_hat untouched.
inline SaddleField fixed_point_step(const SaddleField& y, double alpha, const BanditSpec& spec) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("fixed_point_step: alpha must lie in (0, 1]");
  const SaddleField image = apply_saddle_map(y, spec);
  SaddleField out = y;
  out.s = alpha * image.s + (1.0 - alpha) * y.s;
  out.n = alpha * image.n + (1.0 - alpha) * y.n;
  out.is_hat = alpha * image.is_hat + (1.0 - alpha) * y.is_hat;
  out.in_hat = alpha * image.in_hat + (1.0 - alpha) * y.in_hat;
  out.converged = false;
  return out;
}

struct FixedPointOptions {
  double alpha = 0.3;
  double alpha_floor = 0.01;
  int max_iter = 400;
  double tol = 1e-10;
};

/// Alternates damped map steps and ir_hat updates. The damping halves each
/// time the residual grows, down to the floor; the best iterate is returned.
inline SaddleField fixed_point_iterate(SaddleField y, const BanditSpec& spec, double r,
                                       const FixedPointOptions& options = {}) {
  double alpha = options.alpha;
  double current = residual(y, spec, r);
  SaddleField best = y;
  best.residual = current;
  for (int it = 0; it < options.max_iter && current > options.tol; ++it) {
    SaddleField next;
    try {
      next = fixed_point_step(y, alpha, spec);
      next.ir_hat = update_r_hat(next, spec, r);
    } catch (const NumericError&) {
      break;
    }
    const double res = residual(next, spec, r);
    if (!std::isfinite(res)) break;
    if (res > current) alpha = std::max(options.alpha_floor, 0.5 * alpha);
    y = std::move(next);
    current = res;
    y.iterations = it + 1;
    if (current < best.residual) {
      best = y;
      best.residual = current;
    }
  }
  best.converged = best.residual <= options.tol;
  return best;
}

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 60;
  double relative_step = 1e-6;
  // Extra iterations spent polishing after the tolerance is met, while the
  // residual keeps shrinking by at least this factor.
  int polish_iter = 3;
  double polish_factor = 10.0;
  // Give up when the merit has not halved over this many iterations.
  int stall_window = 8;
};

struct NewtonReport {
  int iterations = 0;
  int singular_jacobians = 0;
};

/// Central-difference Jacobian of the stacked residual map,
/// step 1e-6 * max(1, |x_i|).
inline Eigen::MatrixXd residual_jacobian(const Eigen::VectorXd& x, const SaddleField& shape,
                                         const BanditSpec& spec, double r, double relative_step = 1e-6) {
  const Eigen::Index dim = x.size();
  Eigen::MatrixXd jac(dim, dim);
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < dim; ++i) {
    const double h = relative_step * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const Eigen::VectorXd plus = residual_vector(probe, shape, spec, r);
    probe[i] = x[i] - h;
    const Eigen::VectorXd minus = residual_vector(probe, shape, spec, r);
    probe[i] = x[i];
    jac.col(i) = (plus - minus) / (2.0 * h);
  }
  return jac;
}

/// Newton's method with backtracking on ||F||^2. Singular Jacobians fall
/// back to a minimum-norm least-squares step.
inline SaddleField newton_refine(const SaddleField& y0, const BanditSpec& spec, double r,
                                 const NewtonOptions& options = {}, NewtonReport* report = nullptr) {
  SaddleField shape = y0;
  Eigen::VectorXd x = pack(y0);
  auto evaluate = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
    try {
      out = residual_vector(v, shape, spec, r);
      return out.allFinite();
    } catch (const NumericError&) {
      return false;
    }
  };

  NewtonReport local;
  Eigen::VectorXd F;
  double merit = std::numeric_limits<double>::infinity();
  if (evaluate(x, F)) merit = F.squaredNorm();

  int polishing = 0;
  int it = 0;
  std::vector<double> history;
  while (std::isfinite(merit) && it < options.max_iter) {
    if (merit <= options.tol) {
      if (polishing >= options.polish_iter || merit == 0.0) break;
      ++polishing;
    }
    Eigen::MatrixXd jac;
    try {
      jac = residual_jacobian(x, shape, spec, r, options.relative_step);
    } catch (const NumericError&) {
      break;
    }
    if (!jac.allFinite()) break;
    Eigen::VectorXd step;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    const double rcond = lu.rcond();
    if (rcond > 1e-13) {
      step = -lu.solve(F);
    } else {
      ++local.singular_jacobians;
      step = -jac.completeOrthogonalDecomposition().solve(F);
    }
    if (!step.allFinite()) break;

    double lambda = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial_F;
    for (int halving = 0; halving < 30; ++halving, lambda *= 0.5) {
      const Eigen::VectorXd trial = x + lambda * step;
      if (evaluate(trial, trial_F) && trial_F.squaredNorm() < merit) {
        x = trial;
        F = trial_F;
        accepted = true;
        break;
      }
    }
    ++it;
    const double previous = merit;
    if (!accepted) break;
    merit = F.squaredNorm();
    history.push_back(merit);
    if (options.stall_window > 0 && merit > options.tol && history.size() > static_cast<std::size_t>(options.stall_window) &&
        merit > 0.5 * history[history.size() - 1 - options.stall_window])
      break;
    if (previous <= options.tol && merit * options.polish_factor > previous) break;
  }

  local.iterations = it;
  if (report) *report = local;
  SaddleField out = unpack(x, shape);
  out.residual = std::isfinite(merit) ? merit : std::numeric_limits<double>::infinity();
  out.converged = out.residual <= options.tol;
  out.iterations = it;
  if (out.converged) out.action = action_value(out, spec, r);
  return out;
}

}  // namespace banditpath
