#pragma once

// Policy kernel shared by the simulator and the saddle-point solver: UCB
// index, its partial derivatives, softmax and softmax Jacobian.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace banditpath {

/// Arms, horizon and policy/noise parameters of a softmax-UCB bandit.
///
/// Reward of arm k is N(mu[k], gamma * sigma_tilde[k]^2). The horizon counts
/// decision steps after the warm-up pull of every arm, so an episode holds
/// arms() + horizon pulls in total.
struct BanditSpec {
  std::vector<double> mu;
  std::vector<double> sigma_tilde;
  double gamma = 1.0;
  double beta = 10.0;
  double c = 0.4;
  int horizon = 20;
  double mu_star = 0.0;

  BanditSpec() = default;

  BanditSpec(std::vector<double> means, std::vector<double> deviations, double gamma_, double beta_,
             double c_, int horizon_)
      : mu(std::move(means)),
        sigma_tilde(std::move(deviations)),
        gamma(gamma_),
        beta(beta_),
        c(c_),
        horizon(horizon_) {
    validate();
  }

  /// Checks the invariants and refreshes mu_star. Single-arm specs are
  /// accepted here (the simulator's Gaussian sanity check uses them); the
  /// solver entry points demand at least two arms.
  void validate() {
    if (mu.empty()) throw std::invalid_argument("BanditSpec: at least one arm required");
    if (mu.size() != sigma_tilde.size())
      throw std::invalid_argument("BanditSpec: mu and sigma_tilde lengths differ");
    if (horizon < 1) throw std::invalid_argument("BanditSpec: horizon must be >= 1");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
      throw std::invalid_argument("BanditSpec: gamma must be finite and >= 0");
    if (!(beta >= 0.0) || !std::isfinite(beta))
      throw std::invalid_argument("BanditSpec: beta must be finite and >= 0");
    if (!(c >= 0.0) || !std::isfinite(c)) throw std::invalid_argument("BanditSpec: c must be finite and >= 0");
    for (std::size_t k = 0; k < mu.size(); ++k) {
      if (!std::isfinite(mu[k]) || !std::isfinite(sigma_tilde[k]) || sigma_tilde[k] < 0.0)
        throw std::invalid_argument("BanditSpec: non-finite mean or invalid deviation for arm " +
                                    std::to_string(k));
    }
    mu_star = *std::max_element(mu.begin(), mu.end());
  }

  int arms() const { return static_cast<int>(mu.size()); }

  /// sigma_k^2 = gamma * sigma_tilde_k^2
  double variance(int k) const { return gamma * sigma_tilde[k] * sigma_tilde[k]; }

  /// Regret is measured against (T + K) pulls of the best arm.
  double total_pulls() const { return static_cast<double>(horizon + arms()); }

  BanditSpec with_gamma(double g) const {
    BanditSpec out = *this;
    out.gamma = g;
    out.validate();
    return out;
  }
};

/// Everything the policy exposes at one state (s^t, n^t, t).
struct PolicyEval {
  Eigen::VectorXd B;    // UCB indices
  Eigen::VectorXd B_s;  // dB/ds
  Eigen::VectorXd B_n;  // dB/dn
  Eigen::VectorXd rho;  // softmax(beta * B)
  Eigen::MatrixXd jac;  // d rho / d(beta B)
};

namespace detail {

inline double exploration_log(int arms, int t) {
  const double total = static_cast<double>(arms) + static_cast<double>(t);
  if (!(total >= 2.0)) throw std::domain_error("ucb_index: K + t must be >= 2");
  return std::log(total);
}

inline void require_positive_count(double n) {
  if (!(n > 0.0)) throw std::domain_error("ucb_index: pull count must be positive");
}

}  // namespace detail

/// B = s/n + c * sqrt(log(K + t) / n)
inline double ucb_index(double s, double n, int t, int arms, double c) {
  detail::require_positive_count(n);
  return s / n + c * std::sqrt(detail::exploration_log(arms, t) / n);
}

inline double ucb_index(double s, double n, int t, const BanditSpec& spec) {
  return ucb_index(s, n, t, spec.arms(), spec.c);
}

struct UcbPartials {
  double B_s;
  double B_n;
};

/// B_s = 1/n, B_n = -s/n^2 - (c/2) sqrt(log(K+t)) n^{-3/2}
inline UcbPartials ucb_partials(double s, double n, int t, int arms, double c) {
  detail::require_positive_count(n);
  const double root_log = std::sqrt(detail::exploration_log(arms, t));
  return {1.0 / n, -s / (n * n) - 0.5 * c * root_log / (n * std::sqrt(n))};
}

inline UcbPartials ucb_partials(double s, double n, int t, const BanditSpec& spec) {
  return ucb_partials(s, n, t, spec.arms(), spec.c);
}

/// Max-subtracted softmax; never overflows for finite input.
inline void softmax_into(std::span<const double> v, std::span<double> out) {
  const double vmax = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) {
    out[k] = std::exp(v[k] - vmax);
    total += out[k];
  }
  for (std::size_t k = 0; k < v.size(); ++k) out[k] /= total;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
  Eigen::VectorXd out(v.size());
  softmax_into(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())),
               std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

/// J_kj = delta_kj rho_k - rho_k rho_j, symmetric with zero row sums.
inline Eigen::MatrixXd softmax_jacobian_from_probs(const Eigen::VectorXd& rho) {
  Eigen::MatrixXd jac = -rho * rho.transpose();
  jac.diagonal() += rho;
  return jac;
}

inline Eigen::MatrixXd softmax_jacobian(const Eigen::VectorXd& v) {
  return softmax_jacobian_from_probs(softmax(v));
}

/// UCB indices of every arm at time t.
inline Eigen::VectorXd ucb_indices(const Eigen::VectorXd& s, const Eigen::VectorXd& n, int t,
                                   const BanditSpec& spec) {
  Eigen::VectorXd B(s.size());
  for (Eigen::Index k = 0; k < s.size(); ++k) B[k] = ucb_index(s[k], n[k], t, spec);
  return B;
}

/// P(a^{t+1} = k) = softmax(beta * B^t)_k
inline Eigen::VectorXd policy_probabilities(const Eigen::VectorXd& s, const Eigen::VectorXd& n, int t,
                                            const BanditSpec& spec) {
  return softmax(spec.beta * ucb_indices(s, n, t, spec));
}

inline PolicyEval evaluate_policy(const Eigen::VectorXd& s, const Eigen::VectorXd& n, int t,
                                  const BanditSpec& spec) {
  const Eigen::Index K = s.size();
  PolicyEval out;
  out.B.resize(K);
  out.B_s.resize(K);
  out.B_n.resize(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    out.B[k] = ucb_index(s[k], n[k], t, spec);
    const auto partials = ucb_partials(s[k], n[k], t, spec);
    out.B_s[k] = partials.B_s;
    out.B_n[k] = partials.B_n;
  }
  out.rho = softmax(spec.beta * out.B);
  out.jac = softmax_jacobian_from_probs(out.rho);
  return out;
}

}  // namespace banditpath
