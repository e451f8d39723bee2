#pragma once

// Two arms, one decision step. The saddle system collapses to one scalar
// equation g(ds) = 0 in ds = s_2^0 - s_1^0.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "banditpath/bandit_core.hpp"
#include "banditpath/saddle_equations.hpp"

namespace banditpath {

struct ToySpec {
  double mu1 = 1.0;
  double mu2 = 2.0;
  double gamma = 0.16;
  double beta = 10.0;

  ToySpec() = default;
  ToySpec(double mu1_, double mu2_, double gamma_, double beta_) : mu1(mu1_), mu2(mu2_), gamma(gamma_), beta(beta_) {
    validate();
  }

  void validate() const {
    if (!(std::isfinite(mu1) && std::isfinite(mu2) && mu2 > mu1))
      throw std::invalid_argument("ToySpec: need finite means with mu2 > mu1");
    if (!(gamma > 0.0 && std::isfinite(gamma))) throw std::invalid_argument("ToySpec: gamma must be positive");
    if (!(beta >= 0.0 && std::isfinite(beta))) throw std::invalid_argument("ToySpec: beta must be non-negative");
  }

  double gap() const { return mu2 - mu1; }

  /// Equivalent two-arm bandit with unit baseline deviations. The bonus c
  /// is common to both arms at t = 0 and drops out of every toy quantity
  /// except in_hat^0.
  BanditSpec bandit(double c = 0.0) const { return BanditSpec({mu1, mu2}, {1.0, 1.0}, gamma, beta, c, 1); }
};

struct ToyBranch {
  int branch_id = 0;
  double delta_s0 = 0.0;
  double ir_hat = 0.0;
  double action = 0.0;
  double g_value = 0.0;
};

struct BranchSearch {
  std::vector<ToyBranch> branches;
  bool near_boundary = false;  // a root sits within one grid cell of the interval edge
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double toy_ir_hat(double ds, double r, const ToySpec& toy) {
  return (toy.gap() * (sigmoid(toy.beta * ds) - 2.0) + r) / (3.0 * toy.gamma);
}

inline double g_of_delta_s(double ds, double r, const ToySpec& toy) {
  const double sg = sigmoid(toy.beta * ds);
  return -2.0 * toy.gap() * toy.beta * toy.gamma * sg * (1.0 - sg) * toy_ir_hat(ds, r, toy) + toy.gap() - ds;
}

/// dg/d(ds), used for tangency refinement.
inline double g_prime(double ds, double r, const ToySpec& toy) {
  const double b = toy.beta;
  const double sg = sigmoid(b * ds);
  const double w = sg * (1.0 - sg);
  const double dw = b * w * (1.0 - 2.0 * sg);
  const double ir = toy_ir_hat(ds, r, toy);
  const double dir = toy.gap() * b * w / (3.0 * toy.gamma);
  return -2.0 * toy.gap() * b * toy.gamma * (dw * ir + w * dir) - 1.0;
}

inline double toy_most_probable_regret(const ToySpec& toy) { return toy.gap() * (2.0 - sigmoid(toy.beta * toy.gap())); }

inline std::pair<double, double> default_search_interval(double r, const ToySpec& toy) {
  const double gap = toy.gap();
  return {gap - 3.0 * std::max(1.0, r / gap), gap + 3.0};
}

namespace detail {

inline double bisect_root(double lo, double hi, double g_lo, double r, const ToySpec& toy) {
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double g_mid = g_of_delta_s(mid, r, toy);
    if (g_mid == 0.0 || std::abs(g_mid) <= 1e-14 || mid == lo || mid == hi) break;
    if ((g_mid < 0.0) == (g_lo < 0.0)) {
      lo = mid;
      g_lo = g_mid;
    } else {
      hi = mid;
    }
  }
  return mid;
}

/// Golden-section minimum of |g| on [a, b].
inline double minimize_abs_g(double a, double b, double r, const ToySpec& toy) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
    if (std::abs(g_of_delta_s(c, r, toy)) < std::abs(g_of_delta_s(d, r, toy)))
      b = d;
    else
      a = c;
    c = b - phi * (b - a);
    d = a + phi * (b - a);
  }
  return 0.5 * (a + b);
}

}  // namespace detail

/// Reconstructs the full K=2, T=1 saddle field of a root ds. The bonus c
/// only enters in_hat^0.
inline SaddleField toy_field(double ds, double r, const ToySpec& toy, double c = 0.0) {
  const BanditSpec spec = toy.bandit(c);
  const double sigma2 = toy.gamma;
  const double ir = toy_ir_hat(ds, r, toy);
  const double rho2 = sigmoid(toy.beta * ds);
  const double rho1 = 1.0 - rho2;
  const double a = toy.beta * rho1 * rho2 * toy.gap() * ir;

  CountsAndSums path;
  path.n = Eigen::MatrixXd::Ones(2, 2);
  path.n(0, 1) = 1.0 + rho1;
  path.n(1, 1) = 1.0 + rho2;
  const Eigen::Vector2d is0(a, -a);
  const Eigen::Vector2d mu(toy.mu1, toy.mu2);
  path.s.resize(2, 2);
  for (int k = 0; k < 2; ++k) {
    path.s(k, 0) = mu[k] + sigma2 * (is0[k] - ir);
    path.s(k, 1) = mu[k] * path.n(k, 1) + sigma2 * (is0[k] - ir * path.n(k, 1));
  }
  const ConjugateFields conj = backward_pass(path.n, path.s, ir, spec, Variant::simplified);

  SaddleField y = SaddleField::zeros(spec, Variant::simplified);
  y.n = path.n;
  y.s = path.s;
  y.is_hat = conj.is_hat;
  y.in_hat = conj.in_hat;
  y.ir_hat = ir;
  y.residual = residual(y, spec, r);
  y.converged = true;
  y.action = quadratic_action(y, spec);
  return y;
}

/// Closed form 0.5 gamma [2 a^2 + 3 ir^2] of the quadratic action at a root.
inline double branch_action(double ds, double r, const ToySpec& toy) {
  const double ir = toy_ir_hat(ds, r, toy);
  const double sg = sigmoid(toy.beta * ds);
  const double a = toy.beta * sg * (1.0 - sg) * toy.gap() * ir;
  return 0.5 * toy.gamma * (2.0 * a * a + 3.0 * ir * ir);
}

inline double branch_action(const ToyBranch& branch, double r, const ToySpec& toy) {
  return branch_action(branch.delta_s0, r, toy);
}

/// Sign-change scan plus bisection. Tangent (double) roots show up as
/// interior extrema of g with |g| <= tangency_tol.
inline BranchSearch find_branches(double r, const ToySpec& toy, std::optional<std::pair<double, double>> interval = {},
                                  int grid_points = 10000, double tangency_tol = 1e-12) {
  toy.validate();
  if (grid_points < 3) throw std::invalid_argument("find_branches: need at least 3 grid points");
  const auto [lo, hi] = interval.value_or(default_search_interval(r, toy));
  if (!(hi > lo)) throw std::invalid_argument("find_branches: empty search interval");

  const double step = (hi - lo) / (grid_points - 1);
  std::vector<double> x(grid_points), g(grid_points);
  for (int i = 0; i < grid_points; ++i) {
    x[i] = lo + step * i;
    g[i] = g_of_delta_s(x[i], r, toy);
  }

  std::vector<double> roots;
  for (int i = 0; i + 1 < grid_points; ++i) {
    if (g[i] == 0.0) {
      roots.push_back(x[i]);
    } else if ((g[i] < 0.0) != (g[i + 1] < 0.0) && g[i + 1] != 0.0) {
      roots.push_back(detail::bisect_root(x[i], x[i + 1], g[i], r, toy));
    }
  }
  if (g.back() == 0.0) roots.push_back(x.back());

  for (int i = 1; i + 1 < grid_points; ++i) {
    const bool extremum = (g[i] - g[i - 1]) * (g[i + 1] - g[i]) < 0.0;
    const bool same_sign = (g[i - 1] < 0.0) == (g[i] < 0.0) && (g[i] < 0.0) == (g[i + 1] < 0.0);
    if (!extremum || !same_sign) continue;
    const double candidate = detail::minimize_abs_g(x[i - 1], x[i + 1], r, toy);
    if (std::abs(g_of_delta_s(candidate, r, toy)) <= tangency_tol) roots.push_back(candidate);
  }
  std::sort(roots.begin(), roots.end());

  BranchSearch out;
  for (double root : roots) {
    if (!out.branches.empty() && std::abs(root - out.branches.back().delta_s0) <= step) continue;
    ToyBranch b;
    b.delta_s0 = root;
    b.ir_hat = toy_ir_hat(root, r, toy);
    b.g_value = g_of_delta_s(root, r, toy);
    b.action = branch_action(root, r, toy);
    b.branch_id = static_cast<int>(out.branches.size());
    out.branches.push_back(b);
    if (root - lo <= step || hi - root <= step) out.near_boundary = true;
  }
  return out;
}

inline int branch_count(double r, const ToySpec& toy) { return static_cast<int>(find_branches(r, toy).branches.size()); }

/// Index of the minimal-action branch.
inline const ToyBranch& minimal_branch(const BranchSearch& search) {
  if (search.branches.empty()) throw std::runtime_error("minimal_branch: no branches");
  return *std::min_element(search.branches.begin(), search.branches.end(),
                           [](const ToyBranch& a, const ToyBranch& b) { return a.action < b.action; });
}

/// Bisection on the branch count over [r_lo, r_hi] down to width 1e-6.
inline double critical_regret(const ToySpec& toy, std::pair<double, double> bracket = {1.0, 3.0}, double width = 1e-6) {
  auto [lo, hi] = bracket;
  if (!(hi > lo)) throw std::invalid_argument("critical_regret: bracket must satisfy r_lo < r_hi");
  const int count_lo = branch_count(lo, toy);
  const int count_hi = branch_count(hi, toy);
  if (count_lo != 1 || count_hi != 3)
    throw std::invalid_argument("critical_regret: bracket endpoints have " + std::to_string(count_lo) + " and " +
                                std::to_string(count_hi) + " branches, expected 1 and 3");
  while (hi - lo > width) {
    const double mid = 0.5 * (lo + hi);
    if (branch_count(mid, toy) >= 2)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

struct Tangency {
  double r = 0.0;
  double delta_s0 = 0.0;
  bool converged = false;
};

/// Newton on the pair g = 0, dg/d(ds) = 0, starting near a fold.
inline Tangency refine_tangency(double r0, double ds0, const ToySpec& toy, int max_iter = 50) {
  Tangency t{r0, ds0, false};
  for (int it = 0; it < max_iter; ++it) {
    const double h = 1e-7;
    const Eigen::Vector2d F(g_of_delta_s(t.delta_s0, t.r, toy), g_prime(t.delta_s0, t.r, toy));
    if (F.norm() < 1e-14) {
      t.converged = true;
      break;
    }
    Eigen::Matrix2d J;
    J(0, 0) = g_prime(t.delta_s0, t.r, toy);
    J(1, 0) = (g_prime(t.delta_s0 + h, t.r, toy) - g_prime(t.delta_s0 - h, t.r, toy)) / (2.0 * h);
    J(0, 1) = (g_of_delta_s(t.delta_s0, t.r + h, toy) - g_of_delta_s(t.delta_s0, t.r - h, toy)) / (2.0 * h);
    J(1, 1) = (g_prime(t.delta_s0, t.r + h, toy) - g_prime(t.delta_s0, t.r - h, toy)) / (2.0 * h);
    const Eigen::Vector2d step = J.fullPivLu().solve(-F);
    if (!step.allFinite()) break;
    t.delta_s0 += step[0];
    t.r += step[1];
    if (step.norm() < 1e-15) {
      t.converged = std::abs(g_of_delta_s(t.delta_s0, t.r, toy)) < 1e-12;
      break;
    }
  }
  return t;
}

}  // namespace banditpath
