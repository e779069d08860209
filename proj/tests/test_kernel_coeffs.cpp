#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace tlmc;

namespace {

std::map<std::string, double> as_map(const MeanCoeffs& m, const NoiseCoeffs& s) {
  return {{"mu12", m.mu12}, {"mu13", m.mu13}, {"mu22", m.mu22}, {"mu23", m.mu23}, {"mu31", m.mu31},
          {"mu32", m.mu32}, {"mu33", m.mu33}, {"s11", s.s11},   {"s12", s.s12},   {"s13", s.s13},
          {"s22", s.s22},   {"s23", s.s23},   {"s33", s.s33}};
}

}  // namespace

TEST(KernelCoeffs, ZeroStepIsIdentity) {
  const DynamicsParams prm{1.0, 2.0, 0.0, 1.0};
  const auto m = mean_coeffs(prm);
  const auto s = noise_coeffs(prm);
  EXPECT_EQ(m.mu22, 1.0);
  EXPECT_EQ(m.mu33, 1.0);
  for (double v : {m.mu12, m.mu13, m.mu23, m.mu31, m.mu32}) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(s.matrix().cwiseAbs().maxCoeff(), 0.0);
}

TEST(KernelCoeffs, MatchesFrozenHighPrecisionValues) {
  for (const auto& ref : oracle::frozen_coeffs()) {
    const DynamicsParams prm{ref.gamma, ref.xi, ref.eta, 1.0};
    const auto got = as_map(mean_coeffs(prm), noise_coeffs(prm));
    for (const auto& [name, want] : ref.values) {
      EXPECT_NEAR(got.at(name), want, 1e-13 * std::abs(want) + 1e-15) << name << " at eta=" << ref.eta;
    }
  }
}

TEST(KernelCoeffs, AgreesWithQuadratureOracleRelative) {
  const DynamicsParams prm{2.0, 4.0, 0.1, 1.0};
  for (const auto& d : oracle_deltas(prm)) {
    EXPECT_LE(d.abs_delta(), 1e-10 * std::abs(d.oracle) + 1e-300) << d.name;
  }
}

TEST(KernelCoeffs, OracleGrid) {
  const auto grid = oracle_grid();
  ASSERT_EQ(grid.size(), 18u);
  for (const auto& prm : grid) {
    for (const auto& d : oracle_deltas(prm)) {
      EXPECT_LE(d.abs_delta(), 1e-9) << d.name << " gamma=" << prm.gamma << " eta=" << prm.eta;
      EXPECT_LE(d.abs_delta(), 1e-8 * std::abs(d.oracle) + 1e-300) << d.name << " gamma=" << prm.gamma
                                                                   << " eta=" << prm.eta;
    }
  }
}

TEST(KernelCoeffs, SmallStepTaylor) {
  const double g = 1.0, xi = 2.0, eta = 1e-4;
  const auto m = mean_coeffs({g, xi, eta, 1.0});
  EXPECT_NEAR(m.mu12, eta - g * g * eta * eta * eta / 6.0, 1e-6 * eta);
  EXPECT_NEAR(m.mu13, 0.5 * g * eta * eta, 1e-3 * 0.5 * g * eta * eta);
  EXPECT_NEAR(m.mu23, g * eta, 1e-3 * g * eta);
  EXPECT_NEAR(m.mu32, -g * eta, 1e-3 * g * eta);
  EXPECT_NEAR(m.mu33, 1.0 - xi * eta, 1e-7);
  EXPECT_NEAR(m.mu22, 1.0, 1e-7);
}

TEST(KernelCoeffs, LinearPartMatchesGeneratorToFirstOrder) {
  // (mu(x) - x) / eta -> M x for the Delta-free part, M = [[0,1,0],[0,0,g],[0,-g,-xi]].
  const double g = 3.0, xi = 5.0;
  Mat3 M;
  M << 0, 1, 0, 0, 0, g, 0, -g, -xi;
  double prev = 0.0;
  for (double eta : {1e-2, 5e-3, 2.5e-3}) {
    const Mat3 T = mean_coeffs({g, xi, eta, 1.0}).linear_part();
    const double err = ((T - Mat3::Identity()) / eta - M).norm();
    if (prev > 0.0) EXPECT_NEAR(prev / err, 2.0, 0.1);
    prev = err;
  }
}

TEST(KernelCoeffs, SigmaElevenSeriesLimit) {
  const double g = 1.0, xi = 2.0, eta = 1e-3 / xi;
  const auto s = noise_coeffs({g, xi, eta, 1.0});
  EXPECT_NEAR(s.s11 / (g * g * xi * std::pow(eta, 5)), 0.1, 1e-3);
}

TEST(KernelCoeffs, CancellationHazardIsRealAndHandled) {
  const DynamicsParams prm{1.0, 2.0, 5e-5, 1.0};  // xi eta = 1e-4
  const double stable = noise_coeffs(prm).s11;
  const double naive = noise_coeffs_naive(prm).s11;
  const double want = oracle::kS11AtXiEta1em4;
  EXPECT_NEAR(stable, want, 1e-6 * want);
  EXPECT_GT(std::abs(naive - want), 1.0 * want);  // no significant digits left
}

TEST(KernelCoeffs, NaiveFormsAgreeWhereWellConditioned) {
  const DynamicsParams prm{2.0, 4.0, 0.25, 1.0};
  const auto a = as_map(mean_coeffs(prm), noise_coeffs(prm));
  const auto b = as_map(mean_coeffs_naive(prm), noise_coeffs_naive(prm));
  for (const auto& [k, v] : a) EXPECT_NEAR(v, b.at(k), 1e-10 * (1.0 + std::abs(v))) << k;
}

TEST(KernelCoeffs, NoiseMatrixIsPsdOnGrid) {
  for (const auto& prm : oracle_grid()) {
    const Mat3 S = noise_coeffs(prm).matrix();
    EXPECT_EQ(S, S.transpose());
    const double lo = Eigen::SelfAdjointEigenSolver<Mat3>(S).eigenvalues().minCoeff();
    EXPECT_GE(lo, -1e-13 * S.trace()) << "gamma=" << prm.gamma << " eta=" << prm.eta;
  }
}

TEST(KernelCoeffs, FactorExamples) {
  const NoiseCoeffs id = NoiseCoeffs::from_matrix(Mat3::Identity());
  EXPECT_LE((factor_noise(id).g - Mat3::Identity()).norm(), 1e-15);
  const NoiseCoeffs diag = NoiseCoeffs::from_matrix(Vec3(4.0, 1.0, 0.0).asDiagonal());
  EXPECT_LE((factor_noise(diag).g - Mat3(Vec3(2.0, 1.0, 0.0).asDiagonal())).norm(), 1e-15);
  for (const auto& prm : {DynamicsParams{2.0, 4.0, 0.25, 1.0}, DynamicsParams{1.0, 2.0, 1e-3, 1.0},
                          DynamicsParams{10.0, 20.0, 0.5, 1.0}}) {
    const NoiseCoeffs nc = noise_coeffs(prm);
    const Mat3 g = factor_noise(nc).g;
    EXPECT_EQ(g(0, 1), 0.0);
    EXPECT_EQ(g(0, 2), 0.0);
    EXPECT_EQ(g(1, 2), 0.0);
    const Mat3 S = nc.matrix();
    // Entrywise relative to the scale of each entry's row and column.
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        EXPECT_NEAR((g * g.transpose())(i, j), S(i, j), 1e-12 * std::sqrt(S(i, i) * S(j, j)));
  }
}

TEST(KernelCoeffs, FactorRejectsIndefinite) {
  Mat3 bad = Mat3::Identity();
  bad(0, 1) = bad(1, 0) = 2.0;
  EXPECT_THROW(factor_noise(NoiseCoeffs::from_matrix(bad)), NumericalError);
}

TEST(KernelCoeffs, OracleZeroStepAndSelfConvergence) {
  const auto zero = quadrature_oracle({2.0, 4.0, 0.0, 1.0});
  EXPECT_EQ(zero.mean.mu22, 1.0);
  EXPECT_EQ(zero.mean.mu33, 1.0);
  EXPECT_EQ(zero.noise.matrix().cwiseAbs().maxCoeff(), 0.0);

  // Midpoint panels are second order: doubling panels quarters the error.
  const auto& ref = oracle::frozen_coeffs().front();
  const DynamicsParams prm{ref.gamma, ref.xi, ref.eta, 1.0};
  const double e256 = std::abs(quadrature_oracle(prm, 256, 1).noise.s33 - ref.values.at("s33"));
  const double e512 = std::abs(quadrature_oracle(prm, 512, 1).noise.s33 - ref.values.at("s33"));
  EXPECT_NEAR(e256 / e512, 4.0, 0.3);
  EXPECT_THROW(quadrature_oracle(prm, 32), ArgumentError);
}

TEST(KernelCoeffs, SeriesAndDirectAgreeAtSwitch) {
  const auto& b = detail::brackets();
  for (const detail::ExpPoly* f : {&b.s11, &b.s13a, &b.s33a, &b.m12, &b.m31}) {
    const double x = detail::ExpPoly::kSeriesSwitch;
    const double below = (*f)(std::nextafter(x, 0.0));
    const double above = (*f)(x);
    EXPECT_NEAR(below, above, 1e-13 * std::abs(above));
  }
}

TEST(KernelCoeffs, RejectsInvalidParams) {
  EXPECT_THROW(mean_coeffs({0.0, 1.0, 0.1, 1.0}), ArgumentError);
  EXPECT_THROW(noise_coeffs({1.0, -1.0, 0.1, 1.0}), ArgumentError);
  EXPECT_THROW(mean_coeffs({1.0, 1.0, -0.1, 1.0}), ArgumentError);
  EXPECT_THROW(mean_coeffs({1.0, 1.0, 0.1, 0.0}), ArgumentError);
}
