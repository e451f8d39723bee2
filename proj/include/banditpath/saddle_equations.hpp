#pragma once

// Saddle-point equations of the path-integral action for the regret
// distribution. Order parameters live on a K x (T+1) grid (arm x time):
//
//   n, s          pull counts and reward sums
//   is_hat        i * s_hat, the (real) conjugate of s
//   in_hat        i * n_hat, the (real) conjugate of n
//   ir_hat        i * r_hat, the multiplier of the regret constraint
//
// The forward pass builds (n, s) from the conjugates in time order; the
// backward pass builds the conjugates from (n, s) in reverse time order.
// Their composition is the map whose fixed point, together with the regret
// constraint, is a saddle point.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "banditpath/bandit_core.hpp"

namespace banditpath {

/// Simplified: softmax linearized around beta*B (large-beta limit), the
/// default. Full: the untruncated equations, kept for validation.
enum class Variant { simplified, full };

inline const char* to_string(Variant v) { return v == Variant::full ? "full" : "simplified"; }

inline Variant parse_variant(const std::string& name) {
  if (name == "simplified") return Variant::simplified;
  if (name == "full") return Variant::full;
  throw std::invalid_argument("unknown saddle variant '" + name + "'");
}

/// Raised when a forward pass produces a non-positive or non-finite count.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SaddleField {
  Eigen::MatrixXd s;
  Eigen::MatrixXd n;
  Eigen::MatrixXd is_hat;
  Eigen::MatrixXd in_hat;
  double ir_hat = 0.0;
  double action = 0.0;
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
  Variant variant = Variant::simplified;

  static SaddleField zeros(const BanditSpec& spec, Variant variant = Variant::simplified) {
    const int K = spec.arms();
    const int cols = spec.horizon + 1;
    SaddleField y;
    y.s = Eigen::MatrixXd::Zero(K, cols);
    y.n = Eigen::MatrixXd::Ones(K, cols);
    y.is_hat = Eigen::MatrixXd::Zero(K, cols);
    y.in_hat = Eigen::MatrixXd::Zero(K, cols);
    y.variant = variant;
    return y;
  }

  int arms() const { return static_cast<int>(s.rows()); }
  int horizon() const { return static_cast<int>(s.cols()) - 1; }
};

struct CountsAndSums {
  Eigen::MatrixXd n;
  Eigen::MatrixXd s;
};

struct ConjugateFields {
  Eigen::MatrixXd is_hat;
  Eigen::MatrixXd in_hat;
};

namespace detail {

inline void require_solver_spec(const BanditSpec& spec) {
  if (spec.arms() < 2) throw std::invalid_argument("saddle solver: at least two arms required");
}

/// Suffix sums over time: out(k, t) = sum_{tau >= t} x(k, tau).
inline Eigen::MatrixXd suffix_sums(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  out.col(x.cols() - 1) = x.col(x.cols() - 1);
  for (Eigen::Index t = x.cols() - 2; t >= 0; --t) out.col(t) = out.col(t + 1) + x.col(t);
  return out;
}

inline Eigen::VectorXd checked_softmax(const Eigen::VectorXd& logits) {
  if (!logits.allFinite()) throw NumericError("saddle equations: non-finite softmax argument");
  return softmax(logits);
}

}  // namespace detail

/// n_k^t = 1 + sum_{tau<=t} rho_k(h^tau) and
/// s_k^t = mu_k n_k^t + sigma_k^2 sum_{t'} is_hat_k^{t'} n_k^{min(t,t')}.
/// The simplified variant uses h^tau = beta B^{tau-1}; the full variant adds
/// the future sums of in_hat.
inline CountsAndSums forward_pass(const Eigen::MatrixXd& is_hat, const Eigen::MatrixXd& in_hat,
                                  const BanditSpec& spec, Variant variant = Variant::simplified) {
  const int K = spec.arms();
  const int T = spec.horizon;
  const Eigen::MatrixXd is_suffix = detail::suffix_sums(is_hat);
  Eigen::MatrixXd in_suffix;
  if (variant == Variant::full) in_suffix = detail::suffix_sums(in_hat);

  CountsAndSums out{Eigen::MatrixXd(K, T + 1), Eigen::MatrixXd(K, T + 1)};
  // Running sum_{t' <= t} is_hat^{t'} n^{t'} per arm.
  Eigen::VectorXd weighted_prefix = Eigen::VectorXd::Zero(K);
  for (int t = 0; t <= T; ++t) {
    if (t == 0) {
      out.n.col(0).setOnes();
    } else {
      Eigen::VectorXd logits = spec.beta * ucb_indices(out.s.col(t - 1), out.n.col(t - 1), t - 1, spec);
      if (variant == Variant::full) logits += in_suffix.col(t);
      out.n.col(t) = out.n.col(t - 1) + detail::checked_softmax(logits);
    }
    for (int k = 0; k < K; ++k) {
      const double nk = out.n(k, t);
      if (!(nk > 0.0) || !std::isfinite(nk)) throw NumericError("forward_pass: non-positive pull count");
      weighted_prefix[k] += is_hat(k, t) * nk;
      const double later = t < T ? is_suffix(k, t + 1) : 0.0;
      out.s(k, t) = spec.mu[k] * nk + spec.variance(k) * (weighted_prefix[k] + nk * later);
    }
  }
  return out;
}

/// Reverse-time sweep for the conjugates with terminal data
/// is_hat^T = -ir_hat, in_hat^T = mu is_hat^T + sigma^2 (is_hat^T)^2 / 2.
inline ConjugateFields backward_pass(const Eigen::MatrixXd& n, const Eigen::MatrixXd& s, double ir_hat,
                                     const BanditSpec& spec, Variant variant = Variant::simplified) {
  const int K = spec.arms();
  const int T = spec.horizon;
  ConjugateFields out{Eigen::MatrixXd(K, T + 1), Eigen::MatrixXd(K, T + 1)};
  Eigen::VectorXd variances(K);
  Eigen::VectorXd means(K);
  for (int k = 0; k < K; ++k) {
    variances[k] = spec.variance(k);
    means[k] = spec.mu[k];
  }

  out.is_hat.col(T).setConstant(-ir_hat);
  out.in_hat.col(T) = means.cwiseProduct(out.is_hat.col(T)) +
                      0.5 * variances.cwiseProduct(out.is_hat.col(T).cwiseAbs2());

  Eigen::VectorXd in_future = out.in_hat.col(T);  // sum_{tau > t} in_hat^tau
  Eigen::VectorXd is_future = out.is_hat.col(T);  // sum_{t' > t} is_hat^{t'}
  for (int t = T - 1; t >= 0; --t) {
    const PolicyEval policy = evaluate_policy(s.col(t), n.col(t), t, spec);
    Eigen::VectorXd shift;
    if (variant == Variant::simplified) {
      shift = policy.jac * in_future;
    } else {
      shift = detail::checked_softmax(spec.beta * policy.B + in_future) - policy.rho;
    }
    const Eigen::VectorXd is_t = spec.beta * policy.B_s.cwiseProduct(shift);
    out.is_hat.col(t) = is_t;
    out.in_hat.col(t) = spec.beta * policy.B_n.cwiseProduct(shift) + means.cwiseProduct(is_t) +
                        variances.cwiseProduct(is_t.cwiseProduct(is_future)) +
                        0.5 * variances.cwiseProduct(is_t.cwiseAbs2());
    in_future += out.in_hat.col(t);
    is_future += is_t;
  }
  return out;
}

/// One application of the composed map: forward from y's conjugates, then
/// backward from the fresh (n, s). ir_hat is carried over.
inline SaddleField apply_saddle_map(const SaddleField& y, const BanditSpec& spec) {
  SaddleField out = y;
  auto fwd = forward_pass(y.is_hat, y.in_hat, spec, y.variant);
  auto bwd = backward_pass(fwd.n, fwd.s, y.ir_hat, spec, y.variant);
  out.n = std::move(fwd.n);
  out.s = std::move(fwd.s);
  out.is_hat = std::move(bwd.is_hat);
  out.in_hat = std::move(bwd.in_hat);
  out.converged = false;
  return out;
}

/// Sum_k s_k^T + r - (T+K) mu_*; zero when the field realizes regret r.
inline double constraint_violation(const SaddleField& y, const BanditSpec& spec, double r) {
  return y.s.col(y.horizon()).sum() + r - spec.total_pulls() * spec.mu_star;
}

/// ||y - f(y)||^2 + (sum_k s_k^T + r - (T+K) mu_*)^2
inline double residual(const SaddleField& y, const BanditSpec& spec, double r) {
  double fixed_point_gap = 0.0;
  try {
    const SaddleField image = apply_saddle_map(y, spec);
    fixed_point_gap = (y.s - image.s).squaredNorm() + (y.n - image.n).squaredNorm() +
                      (y.is_hat - image.is_hat).squaredNorm() + (y.in_hat - image.in_hat).squaredNorm();
  } catch (const NumericError&) {
    return std::numeric_limits<double>::infinity();
  }
  const double gap = constraint_violation(y, spec, r);
  return fixed_point_gap + gap * gap;
}

/// Phi* = 1/2 sum_k sigma_k^2 sum_{t,t'} is_k^t is_k^{t'} n_k^{min(t,t')},
/// evaluated through the increment form sum_t dn_k^t (sum_{t'>=t} is_k^{t'})^2.
inline double quadratic_action(const SaddleField& y, const BanditSpec& spec) {
  const Eigen::MatrixXd tail = detail::suffix_sums(y.is_hat);
  double total = 0.0;
  for (int k = 0; k < y.arms(); ++k) {
    double arm = 0.0;
    for (int t = 0; t <= y.horizon(); ++t) {
      const double dn = t == 0 ? y.n(k, 0) : y.n(k, t) - y.n(k, t - 1);
      arm += dn * tail(k, t) * tail(k, t);
    }
    total += spec.variance(k) * arm;
  }
  return 0.5 * total;
}

namespace detail {

inline double log_sum_exp(const Eigen::VectorXd& v) {
  const double vmax = v.maxCoeff();
  return vmax + std::log((v.array() - vmax).exp().sum());
}

}  // namespace detail

/// The untruncated stochastic action with real-valued conjugates:
///   ir (r + sum s^T - (T+K) mu_*) + sum [is s + in (n - 1)] - Q/2 - sum mu is n
///   - sum_{t>=1} [LSE(beta B^{t-1} + sum_{tau>=t} in^tau) - LSE(beta B^{t-1})]
/// where Q = sum_k sigma_k^2 sum_{t,t'} is^t is^{t'} n^{min(t,t')}.
inline double full_action(const SaddleField& y, const BanditSpec& spec, double r) {
  const int T = y.horizon();
  double value = y.ir_hat * constraint_violation(y, spec, r);
  value -= quadratic_action(y, spec);
  for (int k = 0; k < y.arms(); ++k)
    for (int t = 0; t <= T; ++t)
      value += y.is_hat(k, t) * (y.s(k, t) - spec.mu[k] * y.n(k, t)) + y.in_hat(k, t) * (y.n(k, t) - 1.0);
  const Eigen::MatrixXd in_suffix = detail::suffix_sums(y.in_hat);
  for (int t = 1; t <= T; ++t) {
    const Eigen::VectorXd logits = spec.beta * ucb_indices(y.s.col(t - 1), y.n.col(t - 1), t - 1, spec);
    value -= detail::log_sum_exp(logits + in_suffix.col(t)) - detail::log_sum_exp(logits);
  }
  return value;
}

/// Action of a saddle solution: the quadratic form for the simplified
/// equations, the untruncated action for the full ones.
inline double action_value(const SaddleField& y, const BanditSpec& spec, double r) {
  return y.variant == Variant::full ? full_action(y, spec, r) : quadratic_action(y, spec);
}

inline double action_value(const SaddleField& y, const BanditSpec& spec) {
  if (y.variant == Variant::full)
    throw std::invalid_argument("action_value: the full action needs the regret r");
  return quadratic_action(y, spec);
}

/// Newton step for ir_hat under the linearization s_k^T ~ -ir_hat sigma_k^2 n_k^T + const.
inline double update_r_hat(const SaddleField& y, const BanditSpec& spec, double r) {
  if (!(spec.gamma > 0.0)) throw std::domain_error("update_r_hat: gamma must be positive");
  const int T = y.horizon();
  double sensitivity = 0.0;
  for (int k = 0; k < y.arms(); ++k) sensitivity += spec.variance(k) * y.n(k, T);
  return y.ir_hat + constraint_violation(y, spec, r) / sensitivity;
}

/// Regret of the noiseless (zero-conjugate) path: (T+K) mu_* - sum_k mu_k n_k^T.
inline double most_probable_regret(const BanditSpec& spec) {
  detail::require_solver_spec(spec);
  const int K = spec.arms();
  const int T = spec.horizon;
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(K, T + 1);
  const auto path = forward_pass(zero, zero, spec, Variant::simplified);
  double collected = 0.0;
  for (int k = 0; k < K; ++k) collected += spec.mu[k] * path.n(k, T);
  return spec.total_pulls() * spec.mu_star - collected;
}

/// The zero-conjugate field: the noiseless path, a solution at r = r^mpv.
inline SaddleField noiseless_field(const BanditSpec& spec, Variant variant = Variant::simplified) {
  SaddleField y = SaddleField::zeros(spec, variant);
  auto path = forward_pass(y.is_hat, y.in_hat, spec, variant);
  y.n = std::move(path.n);
  y.s = std::move(path.s);
  return y;
}

}  // namespace banditpath
