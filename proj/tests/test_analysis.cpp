#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <chrono>

using namespace tlmc;

namespace {

double sum_principal_minors(const Mat3& s) {
  return s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0) + s(0, 0) * s(2, 2) - s(0, 2) * s(2, 0) + s(1, 1) * s(2, 2) -
         s(1, 2) * s(2, 1);
}

}  // namespace

TEST(Analysis, SMatrixAtKappaOne) {
  EXPECT_LE((s_matrix(1.0).s - oracle::s_matrix_kappa1()).cwiseAbs().maxCoeff(), 1e-15);
  Vector dx = Vector::Zero(3);
  EXPECT_EQ(s_norm(dx, s_matrix(1.0)), 0.0);
  dx[0] = 1.0;
  EXPECT_DOUBLE_EQ(s_norm(dx, s_matrix(1.0)), 11.0 / 4.0);
  EXPECT_THROW(s_norm(Vector::Ones(4), s_matrix(1.0)), ArgumentError);
  EXPECT_THROW(s_matrix(0.5), ArgumentError);
}

TEST(Analysis, SMatrixAgainstPolynomialForm) {
  for (double k : {1.0, 2.0, 7.5, 40.0}) {
    const Mat3 s = s_matrix(k).s;
    EXPECT_NEAR(s(0, 0), (std::pow(k, 7) + 3 * std::pow(k, 4) + 5 * std::pow(k, 3) + k + 1) / (4 * std::pow(k, 5)),
                1e-13 * s(0, 0));
    EXPECT_NEAR(s(0, 2), (std::pow(k, 4) - k - 1) / (4 * std::pow(k, 3)), 1e-13 * std::abs(s(0, 0)));
    EXPECT_NEAR(s(1, 1), (4 * std::pow(k, 4) + 6 * std::pow(k, 3) + k + 1) / (4 * std::pow(k, 4)), 1e-13 * s(1, 1));
  }
}

TEST(Analysis, SNormWithinEigenvalueBounds) {
  NormalStream rng(3, 0);
  for (double kappa : {1.0, 5.0, 300.0}) {
    const auto S = s_matrix(kappa);
    for (int k = 0; k < 100; ++k) {
      Vector dx(12);
      rng.fill(dx);
      const double v = s_norm(dx, S), n2 = dx.squaredNorm();
      EXPECT_GE(v, n2 / (5.0 * kappa) * (1.0 - 1e-12));
      EXPECT_LE(v, n2 * (kappa * kappa + 10.0) * (1.0 + 1e-12));
    }
  }
}

TEST(Analysis, CouplingDriftExamples) {
  EXPECT_LE(check_lemma2(1.0, 1.0), -0.2);
  EXPECT_LE(check_lemma2(100.0, 0.01), -0.2);
  EXPECT_THROW(check_lemma2(4.0, 0.1), ArgumentError);
  EXPECT_THROW(check_lemma2(4.0, 1.5), ArgumentError);
}

TEST(Analysis, CouplingDriftByHandAtKappaOne) {
  Mat3 M;
  M << 0, 1, 0, -1, 0, 1, 0, -1, -2;
  const Mat3 s = oracle::s_matrix_kappa1();
  const Mat3 want = s * M + M.transpose() * s;
  EXPECT_LE((lyapunov_derivative(1.0, 1.0) - want).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Analysis, DriftEigenvaluesClosedFormAndTrigonometricSolver) {
  for (double kappa : {1.0, 2.0, 10.0, 1e3}) {
    for (double l : {1.0 / kappa, 0.5 * (1.0 + 1.0 / kappa), 1.0}) {
      const Mat3 D = lyapunov_derivative(kappa, l);
      const Vec3 trig = oracle::sym3_eig_trig(D);
      const Vec3 cf = drift_eigenvalues_closed_form(kappa, l);
      EXPECT_LE((trig - cf).cwiseAbs().maxCoeff(), 1e-9 * D.norm()) << "kappa=" << kappa << " l=" << l;
      EXPECT_LE(check_lemma2(kappa, l), -0.2);
    }
  }
}

TEST(Analysis, CubicCoefficientsAreInvariantsOfS) {
  // y^3 - c2 y^2 + c1 y - c0 is the characteristic polynomial of s.
  for (double k : {1.0, 3.0, 17.0, 250.0}) {
    const auto g = g_functions(k);
    const Mat3 s = s_matrix(k).s;
    EXPECT_NEAR(std::pow(k, 5) * g.g2 / 4.0, s.trace(), 1e-12 * s.trace());
    EXPECT_NEAR(k * g.g3 / 16.0, sum_principal_minors(s), 1e-11 * std::abs(sum_principal_minors(s)));
    EXPECT_NEAR(g.g3 / 64.0, s.determinant(), 1e-9 * std::abs(s.determinant())) << "kappa=" << k;
  }
}

TEST(Analysis, GFunctionIdentity) {
  for (double k : kappa_grid(20)) EXPECT_LE(g_identity_mismatch(k), 1e-30) << "kappa=" << k;
}

TEST(Analysis, SqrtG1Checks) {
  for (double k : {1.0, 1e4}) {
    const auto r = check_lemma4(k);
    EXPECT_TRUE(r.ok()) << "kappa=" << k;
  }
  EXPECT_NEAR(check_lemma4(1.0).first, 2.0 - std::sqrt(164.0), 1e-13);
}

TEST(Analysis, CubicChecks) {
  for (double k : {1.0, 3.0, 1e4}) {
    const auto r = check_lemma5(k);
    EXPECT_TRUE(r.ok()) << "kappa=" << k << " mismatch=" << r.max_rel_mismatch;
  }
  const auto r = check_lemma5(3.0);
  const Vec3 trig = oracle::sym3_eig_trig(s_matrix(3.0).s);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(r.roots_scaled[i], trig[i], 1e-10 * trig[i]);
}

TEST(Analysis, FlowRateFromGeneralizedEigenvalue) {
  // max over v of v^T (sM + M^T s) v / v^T s v bounds (dV/dt)/V.
  for (double kappa : {1.0, 3.0, 10.0}) {
    for (double l : {1.0 / kappa, 1.0}) {
      const Mat3 s = s_matrix(kappa).s;
      Eigen::GeneralizedSelfAdjointEigenSolver<Mat3> ges(lyapunov_derivative(kappa, l), s);
      EXPECT_LE(ges.eigenvalues().maxCoeff(), -contraction_rate(kappa)) << "kappa=" << kappa << " l=" << l;
      const auto rep = flow_contraction_check(kappa, l, Vec3(0.3, 1.0, -0.7), 10.0, 1e-3);
      EXPECT_TRUE(rep.ok());
      EXPECT_LE(rep.worst_ratio, ges.eigenvalues().maxCoeff() + rep.tolerance);
    }
  }
}

TEST(Analysis, ContractionOfCoupledDynamics) {
  const auto pot = fixture::quadratic(2, 1.0, 1.0);
  NormalStream rng(11, 0);
  const double t = 5.0;
  const auto rep = contraction_test(pot, t, 2000, 20, rng, 10);
  EXPECT_EQ(rep.times.size(), 11u);
  EXPECT_DOUBLE_EQ(rep.mean_ratio.front(), 1.0);
  EXPECT_TRUE(rep.ok());
  EXPECT_THROW(contraction_test(pot, t, 20, 2, rng), ArgumentError);
}

TEST(Analysis, KappaGrid) {
  const auto g = kappa_grid(50);
  ASSERT_EQ(g.size(), 50u);
  EXPECT_DOUBLE_EQ(g.front(), 1.0);
  EXPECT_NEAR(g.back(), 1e4, 1e-8);
  for (std::size_t i = 1; i + 1 < g.size(); ++i) EXPECT_NEAR(g[i] * g[i], g[i - 1] * g[i + 1], 1e-9 * g[i] * g[i]);
}

TEST(Analysis, SpectralSuitePassesQuickly) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = run_spectral_suite(1, 1000, 50);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ASSERT_EQ(checks.size(), 10u);
  for (const auto& c : checks) EXPECT_TRUE(c.passed) << c.name << " worst=" << c.worst;
  EXPECT_LT(secs, 10.0);
}
