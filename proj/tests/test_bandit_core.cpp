#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "banditpath/bandit_core.hpp"
#include "oracles.hpp"

using namespace banditpath;

namespace {

BanditSpec reference_spec(double c = 0.4) { return BanditSpec({1.0, 2.0, 3.0}, {1.0, 1.0, 1.0}, 0.04, 10.0, c, 20); }

}  // namespace

TEST(BanditSpec, CachesBestMean) {
  const BanditSpec spec({0.5, 2.5, 1.0}, {1.0, 2.0, 1.0}, 0.25, 10.0, 0.4, 5);
  EXPECT_EQ(spec.mu_star, 2.5);
  EXPECT_EQ(spec.arms(), 3);
  EXPECT_DOUBLE_EQ(spec.variance(1), 0.25 * 4.0);
  EXPECT_EQ(spec.total_pulls(), 8);
}

TEST(BanditSpec, RejectsMismatchedLengths) {
  EXPECT_THROW(BanditSpec({1.0, 2.0}, {1.0}, 0.1, 10.0, 0.4, 5), std::invalid_argument);
  EXPECT_THROW(BanditSpec({1.0, 2.0}, {1.0, 1.0}, -0.1, 10.0, 0.4, 5), std::invalid_argument);
  EXPECT_THROW(BanditSpec({1.0, 2.0}, {1.0, 1.0}, 0.1, 10.0, -0.4, 5), std::invalid_argument);
}

TEST(UcbIndex, NoBonusIsSampleMean) { EXPECT_DOUBLE_EQ(ucb_index(2.0, 1.0, 0, 3, 0.0), 2.0); }

TEST(UcbIndex, BonusAtFirstStep) {
  EXPECT_NEAR(ucb_index(2.0, 1.0, 0, 3, 1.0), 2.0 + std::sqrt(std::log(3.0)), 1e-15);
  EXPECT_NEAR(ucb_index(2.0, 1.0, 0, 3, 1.0), 3.048147, 1e-6);
}

TEST(UcbIndex, BonusHalvesAtFourPulls) {
  EXPECT_NEAR(ucb_index(4.0, 4.0, 0, 3, 1.0), 1.0 + std::sqrt(std::log(3.0)) / 2.0, 1e-15);
}

TEST(UcbIndex, RejectsNonPositiveCount) {
  EXPECT_THROW(ucb_index(1.0, 0.0, 0, 3, 0.4), std::domain_error);
  EXPECT_THROW(ucb_index(1.0, -1.0, 0, 3, 0.4), std::domain_error);
  EXPECT_THROW(ucb_partials(1.0, 0.0, 0, 3, 0.4), std::domain_error);
}

TEST(UcbPartials, ClosedFormExamples) {
  const auto a = ucb_partials(3.0, 1.0, 0, 3, 0.0);
  EXPECT_DOUBLE_EQ(a.B_s, 1.0);
  EXPECT_DOUBLE_EQ(a.B_n, -3.0);
  const auto b = ucb_partials(0.0, 1.0, 0, 3, 1.0);
  EXPECT_DOUBLE_EQ(b.B_s, 1.0);
  EXPECT_NEAR(b.B_n, -std::sqrt(std::log(3.0)) / 2.0, 1e-15);
}

TEST(UcbPartials, MatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> s_dist(-5.0, 10.0), c_dist(0.0, 2.0);
  std::uniform_int_distribution<int> k_dist(2, 5), t_dist(0, 20);
  const double h = 1e-5;
  for (int i = 0; i < 500; ++i) {
    const int K = k_dist(rng), t = t_dist(rng);
    std::uniform_real_distribution<double> n_dist(1.0, K + 20.0);
    const double s = s_dist(rng), n = n_dist(rng), c = c_dist(rng);
    const auto p = ucb_partials(s, n, t, K, c);
    const double fd_s = (ucb_index(s + h, n, t, K, c) - ucb_index(s - h, n, t, K, c)) / (2 * h);
    const double fd_n = (ucb_index(s, n + h, t, K, c) - ucb_index(s, n - h, t, K, c)) / (2 * h);
    EXPECT_LE(std::abs(p.B_s - fd_s), 1e-6 * std::abs(p.B_s));
    EXPECT_LE(std::abs(p.B_n - fd_n), 1e-6 * std::max(std::abs(p.B_n), 1e-3));
  }
}

TEST(UcbIndex, DecreasesInPullsAlongMeanLine) {
  for (double mu : {0.0, 0.5, 2.0, 3.0})
    for (double c : {0.1, 0.4, 1.0})
      for (int t : {0, 5, 19}) {
        double previous = ucb_index(mu, 1.0, t, 3, c);
        for (double n = 1.25; n <= 23.0; n += 0.25) {
          const double current = ucb_index(mu * n, n, t, 3, c);
          EXPECT_LT(current, previous);
          previous = current;
        }
      }
}

TEST(Softmax, UniformOnEqualLogits) {
  const Eigen::VectorXd p = softmax(Eigen::VectorXd::Zero(3));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(p[k], 1.0 / 3.0, 1e-16);
}

TEST(Softmax, TwoArmsIsLogistic) {
  const Eigen::VectorXd p = softmax(Eigen::Vector2d(0.0, 10.0));
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(10.0)), 1e-18);
  EXPECT_NEAR(p[1], std::exp(10.0) / (1.0 + std::exp(10.0)), 1e-15);
}

TEST(Softmax, NeverOverflows) {
  const Eigen::VectorXd p = softmax(Eigen::Vector3d(1000.0, 1001.0, -1000.0));
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
  EXPECT_NEAR(p[1], oracle::logistic(1.0), 1e-15);
}

TEST(Softmax, NormalizedAndShiftInvariant) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> v_dist(-50.0, 50.0), shift(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd v(4);
    for (auto& x : v) x = v_dist(rng);
    const Eigen::VectorXd p = softmax(v);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_TRUE((p.array() >= 0.0).all());
    const Eigen::VectorXd q = softmax((v.array() + shift(rng)).matrix());
    EXPECT_LE((p - q).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SoftmaxJacobian, EqualLogitsTwoArms) {
  const Eigen::MatrixXd J = softmax_jacobian(Eigen::Vector2d::Zero());
  EXPECT_NEAR(J(0, 0), 0.25, 1e-16);
  EXPECT_NEAR(J(0, 1), -0.25, 1e-16);
  EXPECT_NEAR(J(1, 0), -0.25, 1e-16);
  EXPECT_NEAR(J(1, 1), 0.25, 1e-16);
}

TEST(SoftmaxJacobian, SaturatedIsNearZero) {
  const Eigen::MatrixXd J = softmax_jacobian(Eigen::Vector3d(0.0, 20.0, 0.0));
  EXPECT_LE(J.cwiseAbs().maxCoeff(), 5e-9);
}

TEST(SoftmaxJacobian, StructureAndFiniteDifferences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> v_dist(-4.0, 4.0);
  const double h = 1e-6;
  for (int i = 0; i < 200; ++i) {
    Eigen::VectorXd v(3);
    for (auto& x : v) x = v_dist(rng);
    const Eigen::MatrixXd J = softmax_jacobian(v);
    EXPECT_LE((J - J.transpose()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE(J.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_TRUE((J.diagonal().array() > 0.0).all());
    Eigen::MatrixXd fd(3, 3);
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd plus = v, minus = v;
      plus[j] += h;
      minus[j] -= h;
      fd.col(j) = (softmax(plus) - softmax(minus)) / (2 * h);
    }
    EXPECT_LE((J - fd).cwiseAbs().maxCoeff(), 1e-6 * J.cwiseAbs().maxCoeff());
  }
}

TEST(PolicyProbabilities, SymmetricStateIsUniform) {
  const BanditSpec spec = reference_spec();
  const Eigen::VectorXd p = policy_probabilities(Eigen::Vector3d(2.0, 2.0, 2.0), Eigen::Vector3d(2.0, 2.0, 2.0), 3, spec);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(p[k], 1.0 / 3.0, 1e-15);
}

TEST(PolicyProbabilities, ZeroBetaIsUniform) {
  const BanditSpec spec({1.0, 2.0, 3.0}, {1.0, 1.0, 1.0}, 0.04, 0.0, 0.4, 20);
  const Eigen::VectorXd p = policy_probabilities(Eigen::Vector3d(1.0, 5.0, -3.0), Eigen::Vector3d(1.0, 4.0, 2.0), 7, spec);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(p[k], 1.0 / 3.0, 1e-15);
}

TEST(PolicyProbabilities, MatchesScriptedEvaluation) {
  const BanditSpec spec = reference_spec();
  const Eigen::VectorXd p = policy_probabilities(Eigen::Vector3d(1.0, 2.0, 3.0), Eigen::Vector3d::Ones(), 0, spec);
  const double bonus = 0.4 * std::sqrt(std::log(3.0));
  double w[3], z = 0.0;
  for (int k = 0; k < 3; ++k) z += (w[k] = std::exp(10.0 * (k + 1 + bonus) - 10.0 * (3 + bonus)));
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(p[k], w[k] / z, 1e-15);
  EXPECT_THROW(policy_probabilities(Eigen::Vector3d(1.0, 2.0, 3.0), Eigen::Vector3d(1.0, 0.0, 1.0), 0, spec),
               std::domain_error);
}

TEST(EvaluatePolicy, BundlesConsistentPieces) {
  const BanditSpec spec = reference_spec();
  const Eigen::Vector3d s(1.5, 5.0, 9.0), n(1.0, 3.0, 4.0);
  const PolicyEval eval = evaluate_policy(s, n, 4, spec);
  EXPECT_NEAR(eval.rho.sum(), 1.0, 1e-12);
  EXPECT_TRUE((eval.rho.array() > 0.0).all() && (eval.rho.array() < 1.0).all());
  EXPECT_LE(eval.jac.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  for (int k = 0; k < 3; ++k) {
    EXPECT_DOUBLE_EQ(eval.B[k], ucb_index(s[k], n[k], 4, spec));
    EXPECT_DOUBLE_EQ(eval.B_s[k], 1.0 / n[k]);
  }
}
