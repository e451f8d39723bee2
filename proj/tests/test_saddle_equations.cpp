#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "banditpath/saddle_equations.hpp"
#include "banditpath/saddle_solver.hpp"
#include "oracles.hpp"

using namespace banditpath;

namespace {

BanditSpec reference_spec(double gamma = 0.04, double c = 0.4, double beta = 10.0) {
  return BanditSpec({1.0, 2.0, 3.0}, {1.0, 1.0, 1.0}, gamma, beta, c, 20);
}

Eigen::MatrixXd random_matrix(int rows, int cols, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = d(rng);
  return m;
}

/// s_k^t = mu_k n_k^t + sigma_k^2 sum_{t'} is^{t'} n^{min(t,t')}, written as
/// the literal double sum.
Eigen::MatrixXd sums_by_double_loop(const Eigen::MatrixXd& n, const Eigen::MatrixXd& is_hat, const BanditSpec& spec) {
  Eigen::MatrixXd s(n.rows(), n.cols());
  for (int k = 0; k < n.rows(); ++k)
    for (int t = 0; t < n.cols(); ++t) {
      double acc = 0.0;
      for (int tp = 0; tp < n.cols(); ++tp) acc += is_hat(k, tp) * n(k, std::min(t, tp));
      s(k, t) = spec.mu[k] * n(k, t) + spec.variance(k) * acc;
    }
  return s;
}

}  // namespace

TEST(ForwardPass, ZeroConjugatesGiveMeanPath) {
  for (double gamma : {0.01, 0.36, 4.0}) {
    const BanditSpec spec = reference_spec(gamma);
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 21);
    const auto path = forward_pass(zero, zero, spec);
    for (int t = 0; t <= 20; ++t)
      for (int k = 0; k < 3; ++k) EXPECT_EQ(path.s(k, t), spec.mu[k] * path.n(k, t));
  }
}

TEST(ForwardPass, ZeroConjugatesMatchNoiselessRecursion) {
  for (double c : {0.0, 0.4, 1.0}) {
    const BanditSpec spec = reference_spec(0.04, c);
    const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 21);
    const auto path = forward_pass(zero, zero, spec);
    const auto ref = oracle::noiseless_recursion(spec.mu, spec.beta, c, spec.horizon);
    for (int t = 0; t <= 20; ++t)
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(path.n(k, t), ref.n[t][k], 1e-12);
    EXPECT_NEAR(most_probable_regret(spec), ref.regret, 1e-11);
  }
}

TEST(ForwardPass, SymmetricArmsSplitEvenly) {
  const BanditSpec spec({2.0, 2.0, 2.0, 2.0}, {1.0, 1.0, 1.0, 1.0}, 0.1, 10.0, 0.4, 12);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(4, 13);
  const auto path = forward_pass(zero, zero, spec);
  for (int t = 0; t <= 12; ++t)
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(path.n(k, t), 1.0 + t / 4.0, 1e-13);
}

TEST(ForwardPass, SumsMatchLiteralDoubleSum) {
  std::mt19937_64 rng(3);
  const BanditSpec spec = reference_spec(0.16);
  for (Variant v : {Variant::simplified, Variant::full}) {
    const Eigen::MatrixXd is_hat = random_matrix(3, 21, 0.5, rng);
    const Eigen::MatrixXd in_hat = random_matrix(3, 21, 0.5, rng);
    const auto path = forward_pass(is_hat, in_hat, spec, v);
    EXPECT_LE((path.s - sums_by_double_loop(path.n, is_hat, spec)).cwiseAbs().maxCoeff(), 1e-12);
    for (int t = 0; t <= 20; ++t) EXPECT_NEAR(path.n.col(t).sum(), 3.0 + t, 1e-12);
  }
}

TEST(ForwardPass, NonFiniteInputIsNumericError) {
  const BanditSpec spec = reference_spec();
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(3, 21);
  bad(1, 5) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(forward_pass(bad, bad, spec, Variant::full), NumericError);
}

TEST(BackwardPass, ZeroTerminalDataGivesZeroFields) {
  const BanditSpec spec = reference_spec();
  const SaddleField y = noiseless_field(spec);
  for (Variant v : {Variant::simplified, Variant::full}) {
    const auto conj = backward_pass(y.n, y.s, 0.0, spec, v);
    EXPECT_EQ(conj.is_hat.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(conj.in_hat.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(BackwardPass, TerminalConditionsExact) {
  const BanditSpec spec = reference_spec(0.16);
  const SaddleField y = noiseless_field(spec);
  for (double ir : {-3.0, 0.7, 12.5}) {
    const auto conj = backward_pass(y.n, y.s, ir, spec);
    for (int k = 0; k < 3; ++k) {
      EXPECT_EQ(conj.is_hat(k, 20), -ir);
      EXPECT_EQ(conj.in_hat(k, 20), spec.mu[k] * (-ir) + 0.5 * spec.variance(k) * ir * ir);
    }
  }
}

TEST(BackwardPass, FullLinearizesToSimplified) {
  std::mt19937_64 rng(21);
  for (double beta : {1.0, 10.0}) {
    const BanditSpec spec = reference_spec(0.16, 0.4, beta);
    const SaddleField y = noiseless_field(spec);
    const double eps = 1e-6;
    for (double ir : {-2.0, 1.0, 5.0}) {
      const auto a = backward_pass(y.n, y.s, eps * ir, spec, Variant::simplified);
      const auto b = backward_pass(y.n, y.s, eps * ir, spec, Variant::full);
      EXPECT_LE((a.is_hat - b.is_hat).cwiseAbs().maxCoeff(), 1e-9);
      EXPECT_LE((a.in_hat - b.in_hat).cwiseAbs().maxCoeff(), 1e-9);
    }
    const Eigen::MatrixXd is_hat = eps * random_matrix(3, 21, 1.0, rng);
    const Eigen::MatrixXd in_hat = eps * random_matrix(3, 21, 1.0, rng);
    const auto fa = forward_pass(is_hat, in_hat, spec, Variant::simplified);
    const auto fb = forward_pass(is_hat, in_hat, spec, Variant::full);
    // The full forward pass differs at first order in in_hat; the gap must
    // shrink linearly with eps.
    EXPECT_LE((fa.n - fb.n).cwiseAbs().maxCoeff(), 50.0 * beta * eps);
  }
}

TEST(BackwardPass, SimplifiedConjugateMatchesToyReconstruction) {
  // K = 2, T = 1: is^0 = +-beta rho_1 rho_2 (mu_2 - mu_1) ir.
  const BanditSpec spec({1.0, 2.0}, {1.0, 1.0}, 0.16, 10.0, 0.4, 1);
  const SaddleField y = noiseless_field(spec);
  const double ir = 0.8;
  const auto conj = backward_pass(y.n, y.s, ir, spec);
  const double rho2 = oracle::logistic(10.0 * (y.s(1, 0) - y.s(0, 0)));
  const double a = 10.0 * rho2 * (1.0 - rho2) * 1.0 * ir;
  EXPECT_NEAR(conj.is_hat(0, 0), a, 1e-15);
  EXPECT_NEAR(conj.is_hat(1, 0), -a, 1e-15);
}

TEST(FixedPointStep, FixedPointIsUnchanged) {
  const BanditSpec spec = reference_spec();
  const SaddleField y = noiseless_field(spec);
  const SaddleField out = fixed_point_step(y, 0.3, spec);
  EXPECT_LE((out.n - y.n).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((out.s - y.s).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(out.is_hat.cwiseAbs().maxCoeff(), 0.0);
}

TEST(FixedPointStep, UndampedEqualsMapImage) {
  std::mt19937_64 rng(4);
  const BanditSpec spec = reference_spec(0.16);
  SaddleField y = noiseless_field(spec);
  y.is_hat = random_matrix(3, 21, 0.3, rng);
  y.in_hat = random_matrix(3, 21, 0.3, rng);
  y.ir_hat = 0.4;
  const SaddleField a = fixed_point_step(y, 1.0, spec);
  const SaddleField b = apply_saddle_map(y, spec);
  EXPECT_EQ(a.n, b.n);
  EXPECT_EQ(a.is_hat, b.is_hat);
  EXPECT_EQ(a.ir_hat, y.ir_hat);
  EXPECT_THROW(fixed_point_step(y, 0.0, spec), std::invalid_argument);
  EXPECT_THROW(fixed_point_step(y, 1.5, spec), std::invalid_argument);
}

TEST(FixedPointStep, LocallyContractsNearSolution) {
  std::mt19937_64 rng(8);
  const BanditSpec spec = reference_spec(0.04);
  const double r = 6.0;
  const SaddleField solved = newton_refine(fixed_point_iterate(noiseless_field(spec), spec, r), spec, r);
  ASSERT_TRUE(solved.converged);
  for (int trial = 0; trial < 10; ++trial) {
    SaddleField y = solved;
    y.is_hat += random_matrix(3, 21, 1e-4, rng);
    y.in_hat += random_matrix(3, 21, 1e-4, rng);
    y.s += random_matrix(3, 21, 1e-4, rng);
    const double before = residual(y, spec, r);
    const double after = residual(fixed_point_step(y, 0.5, spec), spec, r);
    EXPECT_LE(after, before);
  }
}

TEST(UpdateRHat, LinearCorrection) {
  const BanditSpec spec = reference_spec(0.16);
  SaddleField y = noiseless_field(spec);
  y.ir_hat = 0.25;
  const double r_mpv = most_probable_regret(spec);
  EXPECT_EQ(update_r_hat(y, spec, r_mpv), 0.25);
  const double delta = 0.7;
  // Sum s^T too large by delta relative to the target for r_mpv - delta.
  const double expected = 0.25 + delta / (0.16 * y.n.col(20).sum());
  EXPECT_NEAR(update_r_hat(y, spec, r_mpv + delta), expected, 1e-14);
  EXPECT_THROW(update_r_hat(y, spec.with_gamma(0.0), r_mpv), std::domain_error);
}

TEST(Residual, ZeroConjugatesAtAndAwayFromMostProbableRegret) {
  const BanditSpec spec = reference_spec();
  const SaddleField y = noiseless_field(spec);
  const double r_mpv = most_probable_regret(spec);
  EXPECT_LE(residual(y, spec, r_mpv), 1e-24);
  for (double r : {-3.0, 10.0, 40.0}) EXPECT_NEAR(residual(y, spec, r), (r - r_mpv) * (r - r_mpv), 1e-9);
}

TEST(MostProbableRegret, GreedyLimitAndToy) {
  const BanditSpec greedy({1.0, 2.0, 3.0}, {1.0, 1.0, 1.0}, 0.04, 1e6, 0.0, 20);
  EXPECT_NEAR(most_probable_regret(greedy), 3.0, 1e-12);
  const BanditSpec toy({1.0, 2.0}, {1.0, 1.0}, 0.16, 10.0, 0.4, 1);
  EXPECT_NEAR(most_probable_regret(toy), 1.0 + (1.0 - oracle::logistic(10.0)), 1e-14);
  EXPECT_NEAR(most_probable_regret(toy), 1.0000454, 1e-7);
}

TEST(QuadraticAction, ZeroAndDoubleSumForm) {
  std::mt19937_64 rng(12);
  const BanditSpec spec = reference_spec(0.36);
  SaddleField y = noiseless_field(spec);
  EXPECT_EQ(quadratic_action(y, spec), 0.0);
  y.is_hat = random_matrix(3, 21, 1.0, rng);
  double literal = 0.0;
  for (int k = 0; k < 3; ++k)
    for (int t = 0; t <= 20; ++t)
      for (int tp = 0; tp <= 20; ++tp)
        literal += spec.variance(k) * y.is_hat(k, t) * y.is_hat(k, tp) * y.n(k, std::min(t, tp));
  EXPECT_NEAR(quadratic_action(y, spec), 0.5 * literal, 1e-10 * std::abs(literal));
  EXPECT_EQ(action_value(y, spec), quadratic_action(y, spec));
  y.variant = Variant::full;
  EXPECT_THROW(action_value(y, spec), std::invalid_argument);
}

TEST(FullAction, StationaryAtFullSolution) {
  // At a solution of the full equations the untruncated action is stationary
  // in every order parameter.
  const BanditSpec spec = reference_spec(0.16);
  const double r = 6.0;
  SaddleField y = noiseless_field(spec, Variant::full);
  y = newton_refine(fixed_point_iterate(y, spec, r), spec, r);
  ASSERT_TRUE(y.converged);
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < y.s.size(); ++i) {
    for (Eigen::MatrixXd SaddleField::*field : {&SaddleField::s, &SaddleField::n, &SaddleField::is_hat, &SaddleField::in_hat}) {
      if (field == &SaddleField::n && i < 3) continue;  // n^0 is fixed
      SaddleField plus = y, minus = y;
      (plus.*field)(i) += h;
      (minus.*field)(i) -= h;
      worst = std::max(worst, std::abs(full_action(plus, spec, r) - full_action(minus, spec, r)) / (2 * h));
    }
  }
  EXPECT_LE(worst, 1e-5);
}
