#pragma once

// Branch discovery and rate-function assembly on top of the saddle solver.
//
// A solve at fixed regret r collects candidate starts from three sources:
// continuation seeds (solutions at a neighboring r), noise-path seeds, and
// random conjugate fields. Every start is driven to convergence by the
// fixed-point iteration and/or Newton, converged solutions are deduplicated
// and sorted by action.
//
// Noise-path seeds work in the space of standardized reward deviations z:
// with n following the mean-field softmax recursion, s_k^t increments by
// mu_k dn + sigma_k sqrt(dn) z_k^t and the action is |z|^2 / 2. Minimizing
// that under the regret constraint from a few scenario starts (each arm in
// turn looking best after the warm-up) lands near the local minima of the
// action, which Newton then certifies as saddle solutions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "banditpath/bandit_core.hpp"
#include "banditpath/saddle_equations.hpp"
#include "banditpath/saddle_solver.hpp"

namespace banditpath {

namespace detail {

struct NoisePath {
  Eigen::MatrixXd n;
  Eigen::MatrixXd s;
};

/// Mean-field path driven by standardized reward deviations z (K x (T+1)).
inline NoisePath noise_driven_path(const Eigen::MatrixXd& z, const BanditSpec& spec) {
  const int K = spec.arms();
  const int T = spec.horizon;
  NoisePath p{Eigen::MatrixXd(K, T + 1), Eigen::MatrixXd(K, T + 1)};
  for (int k = 0; k < K; ++k) {
    p.n(k, 0) = 1.0;
    p.s(k, 0) = spec.mu[k] + std::sqrt(spec.variance(k)) * z(k, 0);
  }
  for (int t = 1; t <= T; ++t) {
    const Eigen::VectorXd dn = checked_softmax(spec.beta * ucb_indices(p.s.col(t - 1), p.n.col(t - 1), t - 1, spec));
    for (int k = 0; k < K; ++k) {
      p.n(k, t) = p.n(k, t - 1) + dn[k];
      p.s(k, t) = p.s(k, t - 1) + spec.mu[k] * dn[k] + std::sqrt(spec.variance(k) * dn[k]) * z(k, t);
    }
  }
  return p;
}

inline double noise_constraint(const Eigen::MatrixXd& z, const BanditSpec& spec, double r) {
  const auto p = noise_driven_path(z, spec);
  return p.s.col(spec.horizon).sum() + r - spec.total_pulls() * spec.mu_star;
}

/// Exact gradient of sum_k s_k^T with respect to z by a reverse sweep
/// through the mean-field recursion.
inline Eigen::MatrixXd noise_constraint_gradient(const Eigen::MatrixXd& z, const BanditSpec& spec,
                                                 const NoisePath& p) {
  const int K = spec.arms();
  const int T = spec.horizon;
  Eigen::VectorXd sigma(K);
  for (int k = 0; k < K; ++k) sigma[k] = std::sqrt(spec.variance(k));
  Eigen::MatrixXd grad(K, T + 1);
  Eigen::VectorXd adj_s = Eigen::VectorXd::Ones(K);
  Eigen::VectorXd adj_n = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd weighted(K);
  for (int t = T; t >= 1; --t) {
    const double bonus = spec.c * std::sqrt(std::log(static_cast<double>(K + t - 1)));
    const Eigen::VectorXd rho = p.n.col(t) - p.n.col(t - 1);
    for (int k = 0; k < K; ++k) {
      const double root = std::sqrt(rho[k]);
      grad(k, t) = adj_s[k] * sigma[k] * root;
      // rho_k times the adjoint of rho_k, kept finite as rho_k -> 0
      weighted[k] = rho[k] * (adj_n[k] + adj_s[k] * spec.mu[k]) + 0.5 * adj_s[k] * sigma[k] * z(k, t) * root;
    }
    const double total = weighted.sum();
    for (int k = 0; k < K; ++k) {
      const double adj_B = spec.beta * (weighted[k] - rho[k] * total);
      const double n = p.n(k, t - 1);
      adj_s[k] += adj_B / n;
      adj_n[k] += adj_B * (-p.s(k, t - 1) / (n * n) - 0.5 * bonus / (n * std::sqrt(n)));
    }
  }
  for (int k = 0; k < K; ++k) grad(k, 0) = adj_s[k] * sigma[k];
  return grad;
}

/// Minimizes |z|^2/2 + kappa c(z)^2/2 by Levenberg-Marquardt for an
/// increasing sequence of penalties. The Gauss-Newton system is rank-one
/// plus identity and is solved in closed form.
inline Eigen::MatrixXd minimize_noise_action(Eigen::MatrixXd z, const BanditSpec& spec, double r,
                                             int iterations_per_penalty = 400) {
  const double target = spec.total_pulls() * spec.mu_star - r;
  auto evaluate = [&](const Eigen::MatrixXd& v, double kappa, double& c, NoisePath& path) {
    path = noise_driven_path(v, spec);
    c = path.s.col(spec.horizon).sum() - target;
    return 0.5 * v.squaredNorm() + 0.5 * kappa * c * c;
  };
  NoisePath path;
  NoisePath trial_path;
  for (double kappa = 1.0; kappa <= 1e10; kappa *= 100.0) {
    double damping = 1e-3;
    double c = 0.0;
    double value = evaluate(z, kappa, c, path);
    for (int it = 0; it < iterations_per_penalty; ++it) {
      const Eigen::MatrixXd grad = noise_constraint_gradient(z, spec, path);
      const Eigen::MatrixXd b = z + kappa * c * grad;
      const double gb = (grad.array() * b.array()).sum();
      const double gg = grad.squaredNorm();
      bool improved = false;
      for (int tries = 0; tries < 30; ++tries) {
        const double a = 1.0 + damping;
        const Eigen::MatrixXd step = -(b - kappa * grad * (gb / (a + kappa * gg))) / a;
        double trial_c = 0.0;
        double trial_value = std::numeric_limits<double>::infinity();
        try {
          trial_value = evaluate(z + step, kappa, trial_c, trial_path);
        } catch (const NumericError&) {
        }
        if (trial_value < value) {
          const double gain = value - trial_value;
          z += step;
          value = trial_value;
          c = trial_c;
          std::swap(path, trial_path);
          damping = std::max(1e-12, damping / 3.0);
          improved = true;
          if (gain < 1e-14 * std::max(1.0, value)) it = iterations_per_penalty;
          break;
        }
        damping *= 4.0;
      }
      if (!improved) break;
    }
  }
  return z;
}

/// Converts a noise path into a saddle field. (n, s) is the path itself,
/// ir_hat is read off the final-step noise (z_k^T = -ir sigma_k sqrt(dn_k^T)
/// at a stationary point, fitted by least squares over arms) and the
/// conjugates follow from the backward pass.
inline SaddleField field_from_noise(const Eigen::MatrixXd& z, const BanditSpec& spec, Variant variant) {
  const int K = spec.arms();
  const int T = spec.horizon;
  const auto path = noise_driven_path(z, spec);
  double numerator = 0.0;
  double denominator = 0.0;
  for (int k = 0; k < K; ++k) {
    const double scale = std::sqrt(spec.variance(k) * (path.n(k, T) - path.n(k, T - 1)));
    numerator += scale * z(k, T);
    denominator += scale * scale;
  }
  SaddleField y = SaddleField::zeros(spec, variant);
  y.n = path.n;
  y.s = path.s;
  y.ir_hat = denominator > 0.0 ? -numerator / denominator : 0.0;
  auto conjugates = backward_pass(y.n, y.s, y.ir_hat, spec, variant);
  y.is_hat = std::move(conjugates.is_hat);
  y.in_hat = std::move(conjugates.in_hat);
  return y;
}

/// Scenario starts: zero noise, then for each arm j a warm-up in which arm j
/// looks best and every other arm looks one unit worse than it.
inline std::vector<Eigen::MatrixXd> scenario_noise_starts(const BanditSpec& spec) {
  const int K = spec.arms();
  const int T = spec.horizon;
  std::vector<Eigen::MatrixXd> starts;
  starts.push_back(Eigen::MatrixXd::Zero(K, T + 1));
  for (int j = 0; j < K; ++j) {
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(K, T + 1);
    for (int k = 0; k < K; ++k) {
      const double sigma = std::sqrt(spec.variance(k));
      if (!(sigma > 0.0)) continue;
      const double target = k == j ? std::max(spec.mu[k], spec.mu_star - 0.5) : std::min(spec.mu[k], spec.mu[j] - 1.0);
      z(k, 0) = (target - spec.mu[k]) / sigma;
    }
    starts.push_back(std::move(z));
  }
  return starts;
}

inline bool same_solution(const SaddleField& a, const SaddleField& b, double tol) {
  const Eigen::VectorXd xa = pack(a);
  const Eigen::VectorXd xb = pack(b);
  for (Eigen::Index i = 0; i < xa.size(); ++i) {
    const double scale = std::max({1.0, std::abs(xa[i]), std::abs(xb[i])});
    if (std::abs(xa[i] - xb[i]) > tol * scale) return false;
  }
  return true;
}

inline bool admissible(const SaddleField& y) {
  if (!y.converged || !std::isfinite(y.action)) return false;
  for (Eigen::Index t = 0; t < y.n.cols(); ++t)
    for (Eigen::Index k = 0; k < y.n.rows(); ++k) {
      if (!(y.n(k, t) > 0.0)) return false;
      if (t > 0 && y.n(k, t) < y.n(k, t - 1) - 1e-9) return false;
    }
  return true;
}

}  // namespace detail

struct SolveStrategy {
  int multistarts = 8;  // random conjugate starts, uniform in [-2/gamma, 2/gamma]
  std::uint64_t seed = 0;
  std::vector<SaddleField> continuation;
  bool noise_path_seeds = true;
  Variant variant = Variant::simplified;
  FixedPointOptions fixed_point{};
  NewtonOptions newton{};
  double dedup_tol = 1e-6;
};

/// Adds y to the list unless an equal solution is already present.
inline bool insert_distinct(std::vector<SaddleField>& solutions, const SaddleField& y, double tol) {
  for (const auto& existing : solutions)
    if (detail::same_solution(existing, y, tol)) return false;
  solutions.push_back(y);
  return true;
}

inline void sort_by_action(std::vector<SaddleField>& solutions) {
  std::stable_sort(solutions.begin(), solutions.end(),
                   [](const SaddleField& a, const SaddleField& b) { return a.action < b.action; });
}

/// Drives one start to a converged solution: Newton first, and if that
/// fails, the damped iteration followed by Newton.
inline std::optional<SaddleField> converge_from(SaddleField start, const BanditSpec& spec, double r,
                                                const SolveStrategy& strategy, bool iterate_first) {
  start.variant = strategy.variant;
  auto attempt = [&](const SaddleField& y) -> std::optional<SaddleField> {
    SaddleField refined = newton_refine(y, spec, r, strategy.newton);
    if (detail::admissible(refined)) return refined;
    return std::nullopt;
  };
  if (!iterate_first) {
    if (auto direct = attempt(start)) return direct;
  }
  const SaddleField iterated = fixed_point_iterate(start, spec, r, strategy.fixed_point);
  if (!std::isfinite(iterated.residual)) return std::nullopt;
  return attempt(iterated);
}

/// All distinct saddle solutions found at regret r, ascending by action.
inline std::vector<SaddleField> solve_saddle(const BanditSpec& spec, double r, const SolveStrategy& strategy = {}) {
  detail::require_solver_spec(spec);
  if (!(spec.gamma > 0.0)) throw std::domain_error("solve_saddle: gamma must be positive");
  std::vector<SaddleField> solutions;
  auto keep = [&](const std::optional<SaddleField>& y) {
    if (y) insert_distinct(solutions, *y, strategy.dedup_tol);
  };

  for (const auto& seed : strategy.continuation) keep(converge_from(seed, spec, r, strategy, false));

  // The full equations linearize to the simplified ones, whose branches are
  // cheaper to find and sit close to their full counterparts.
  if (strategy.variant == Variant::full) {
    SolveStrategy linear = strategy;
    linear.variant = Variant::simplified;
    linear.continuation.clear();
    for (SaddleField seed : solve_saddle(spec, r, linear)) {
      seed.variant = Variant::full;
      keep(converge_from(seed, spec, r, strategy, false));
    }
  }

  // The noiseless path is the solution at r^mpv and a natural start nearby.
  keep(converge_from(noiseless_field(spec, strategy.variant), spec, r, strategy, false));

  if (strategy.noise_path_seeds) {
    for (const auto& z0 : detail::scenario_noise_starts(spec)) {
      try {
        const Eigen::MatrixXd z = detail::minimize_noise_action(z0, spec, r);
        keep(converge_from(detail::field_from_noise(z, spec, strategy.variant), spec, r, strategy, false));
      } catch (const NumericError&) {
      }
    }
  }

  std::mt19937_64 rng(strategy.seed);
  const double bound = 2.0 / spec.gamma;
  std::uniform_real_distribution<double> conjugate(-bound, bound);
  for (int i = 0; i < strategy.multistarts; ++i) {
    SaddleField y = SaddleField::zeros(spec, strategy.variant);
    for (Eigen::Index j = 0; j < y.is_hat.size(); ++j) y.is_hat(j) = conjugate(rng);
    for (Eigen::Index j = 0; j < y.in_hat.size(); ++j) y.in_hat(j) = conjugate(rng);
    y.ir_hat = conjugate(rng);
    try {
      auto fwd = forward_pass(y.is_hat, y.in_hat, spec, strategy.variant);
      y.n = fwd.n;
      y.s = fwd.s;
    } catch (const NumericError&) {
      continue;
    }
    keep(converge_from(y, spec, r, strategy, true));
  }

  sort_by_action(solutions);
  return solutions;
}

/// Maps a solution at gamma onto the solution at kappa * gamma for the same r:
/// trajectories are unchanged, conjugates and action scale by 1 / kappa.
inline SaddleField rescale_noise(const SaddleField& y, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("rescale_noise: kappa must be positive");
  SaddleField out = y;
  out.is_hat /= kappa;
  out.in_hat /= kappa;
  out.ir_hat /= kappa;
  out.action /= kappa;
  return out;
}

struct RatePoint {
  double r = 0.0;
  double action = std::numeric_limits<double>::quiet_NaN();
  double rate = std::numeric_limits<double>::quiet_NaN();
  int n_solutions = 0;
  bool converged = false;
  std::optional<SaddleField> minimal;  // minimal-action solution
};

/// I(r) = gamma * Phi*(r) on a grid, plus r^mpv.
struct RateCurve {
  std::vector<RatePoint> points;
  double r_mpv = 0.0;

  std::vector<double> r_grid() const {
    std::vector<double> out;
    for (const auto& p : points) out.push_back(p.r);
    return out;
  }
  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const RatePoint& p) { return !p.converged; }));
  }
};

struct RateOptions {
  int multistarts = 8;
  std::uint64_t seed = 0;
  bool noise_path_seeds = true;
  Variant variant = Variant::simplified;
  FixedPointOptions fixed_point{};
  NewtonOptions newton{};
};

namespace detail {

inline SolveStrategy strategy_from(const RateOptions& options, std::uint64_t seed) {
  SolveStrategy strategy;
  strategy.multistarts = options.multistarts;
  strategy.seed = seed;
  strategy.noise_path_seeds = options.noise_path_seeds;
  strategy.variant = options.variant;
  strategy.fixed_point = options.fixed_point;
  strategy.newton = options.newton;
  return strategy;
}

/// Newton continuation of one branch from r_from to r_to, halving the step
/// when a direct jump fails.
inline std::optional<SaddleField> continue_branch(const SaddleField& branch, double r_from, double r_to,
                                                  const BanditSpec& spec, const NewtonOptions& newton, int depth = 0) {
  SaddleField refined = newton_refine(branch, spec, r_to, newton);
  if (admissible(refined)) return refined;
  if (depth >= 4) return std::nullopt;
  const double middle = 0.5 * (r_from + r_to);
  auto half = continue_branch(branch, r_from, middle, spec, newton, depth + 1);
  if (!half) return std::nullopt;
  return continue_branch(*half, middle, r_to, spec, newton, depth + 1);
}

}  // namespace detail

/// Minimal action over every branch found at each grid point. A sweep up the
/// grid and a sweep down carry all known branches by continuation; fresh
/// starts at each point catch branches that appear in between.
inline RateCurve rate_curve(const BanditSpec& spec, const std::vector<double>& r_grid, const RateOptions& options = {}) {
  detail::require_solver_spec(spec);
  if (!(spec.gamma > 0.0)) throw std::domain_error("rate_curve: gamma must be positive");
  if (!std::is_sorted(r_grid.begin(), r_grid.end())) throw std::invalid_argument("rate_curve: grid must be sorted");

  const std::size_t count = r_grid.size();
  std::vector<std::vector<SaddleField>> found(count);

  for (std::size_t i = 0; i < count; ++i) {
    SolveStrategy strategy = detail::strategy_from(options, options.seed + i);
    found[i] = solve_saddle(spec, r_grid[i], strategy);
  }

  auto sweep = [&](std::size_t from, std::size_t to) {
    const std::vector<SaddleField> carried = found[from];
    for (const auto& branch : carried) {
      if (auto next = detail::continue_branch(branch, r_grid[from], r_grid[to], spec, options.newton))
        insert_distinct(found[to], *next, 1e-6);
    }
  };
  for (std::size_t i = 0; i + 1 < count; ++i) sweep(i, i + 1);
  for (std::size_t i = count; i-- > 1;) sweep(i, i - 1);

  RateCurve curve;
  curve.r_mpv = most_probable_regret(spec);
  for (std::size_t i = 0; i < count; ++i) {
    sort_by_action(found[i]);
    RatePoint point;
    point.r = r_grid[i];
    point.n_solutions = static_cast<int>(found[i].size());
    if (!found[i].empty()) {
      point.converged = true;
      point.minimal = found[i].front();
      point.action = point.minimal->action;
      point.rate = spec.gamma * point.action;
    }
    curve.points.push_back(std::move(point));
  }
  return curve;
}

/// Grid points whose centered second difference of I(r) falls below
/// -10x the noise floor; adjacent flagged points form one kink.
inline std::vector<double> detect_kinks(const std::vector<double>& r, const std::vector<double>& rate,
                                        double noise_floor = 1e-6) {
  std::vector<double> kinks;
  bool previous = false;
  for (std::size_t i = 1; i + 1 < r.size(); ++i) {
    const double h1 = r[i] - r[i - 1];
    const double h2 = r[i + 1] - r[i];
    const double second = 2.0 * (h1 * rate[i + 1] - (h1 + h2) * rate[i] + h2 * rate[i - 1]) / (h1 * h2 * (h1 + h2));
    const bool flagged = second < -10.0 * noise_floor;
    if (flagged && !previous) kinks.push_back(r[i]);
    previous = flagged;
  }
  return kinks;
}

}  // namespace banditpath
