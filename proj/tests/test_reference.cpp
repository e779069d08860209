#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace tlmc;

namespace {

// Classical RK4 on dPhi/dt = A Phi and dQ/dt = A Q + Q A^T + N.
std::pair<Mat3, Mat3> rk4_moments(const Mat3& A, const Mat3& N, double t, int n) {
  Mat3 Phi = Mat3::Identity(), Q = Mat3::Zero();
  const double h = t / n;
  auto fq = [&](const Mat3& q) -> Mat3 { return A * q + q * A.transpose() + N; };
  for (int k = 0; k < n; ++k) {
    const Mat3 a1 = A * Phi, a2 = A * (Phi + 0.5 * h * a1), a3 = A * (Phi + 0.5 * h * a2), a4 = A * (Phi + h * a3);
    Phi += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    const Mat3 b1 = fq(Q), b2 = fq(Q + 0.5 * h * b1), b3 = fq(Q + 0.5 * h * b2), b4 = fq(Q + h * b3);
    Q += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
  }
  return {Phi, Q};
}

}  // namespace

TEST(Reference, ZeroTimeIsIdentity) {
  const auto tr = exact_transition(2.0, {2.0, 4.0, 0.1, 3.0}, 0.0);
  EXPECT_EQ(tr.Phi, Mat3::Identity());
  EXPECT_EQ(tr.Q, Mat3::Zero());
}

TEST(Reference, MatchesRungeKutta) {
  for (const auto& [lambda, prm, t] : {std::tuple{1.0, DynamicsParams{1.0, 2.0, 0.0, 1.0}, 0.7},
                                       std::tuple{0.5, DynamicsParams{4.0, 8.0, 0.0, 2.0}, 2.5},
                                       std::tuple{3.0, DynamicsParams{3.0, 6.0, 0.0, 3.0}, 10.0}}) {
    const auto tr = exact_transition(lambda, prm, t);
    const auto [Phi, Q] = rk4_moments(mode_drift(lambda, prm), tr.N, t, 20000);
    EXPECT_LE((tr.Phi - Phi).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((tr.Q - Q).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Reference, PreservesStationaryCovariance) {
  for (double lambda : {0.1, 1.0, 4.0}) {
    const DynamicsParams prm{4.0, 8.0, 0.0, 4.0};
    for (double t : {0.05, 1.0, 20.0}) {
      const auto tr = exact_transition(lambda, prm, t);
      const Mat3 S = tr.stationary_cov(prm.L);
      const Mat3 next = tr.Phi * S * tr.Phi.transpose() + tr.Q;
      EXPECT_LE((next - S).cwiseAbs().maxCoeff(), 1e-9 * S.cwiseAbs().maxCoeff()) << "lambda=" << lambda << " t=" << t;
    }
  }
}

TEST(Reference, DiscreteMeanMapConvergesToFlow) {
  const double kappa = 3.0, L = 1.0, l = 0.5;
  double prev = 0.0;
  for (double eta : {0.04, 0.02, 0.01}) {
    const DynamicsParams prm = DynamicsParams::standard(kappa, L, eta);
    const Mat3 T = mode_transition_matrix(mean_coeffs(prm), l);
    const Mat3 Phi = exact_transition(l * L, prm, eta).Phi;
    const double err = (T - Phi).norm();
    if (prev > 0.0) EXPECT_GT(prev / err, 3.5) << "eta=" << eta;
    prev = err;
  }
}

TEST(Reference, FineEulerNoiseFreeTracksFlow) {
  const auto pot = fixture::quadratic(1, 1.0, 2.0);
  const DynamicsParams prm{2.0, 4.0, 0.0, 2.0};
  ChainState x0(Vector::Constant(1, 1.0), Vector::Constant(1, -0.5), Vector::Constant(1, 0.25));
  auto none = NoiseSource::none();
  const double t = 3.0;
  const Vec3 want = exact_transition(2.0, prm, t).Phi * Vec3(1.0, -0.5, 0.25);
  double prev = 0.0;
  for (std::size_t n : {2000u, 4000u}) {
    const ChainState y = fine_euler(pot, prm, x0, t, n, none);
    const double err = (Vec3(y.theta[0], y.p[0], y.r[0]) - want).norm();
    EXPECT_LE(err, 5e-3);
    if (prev > 0.0) EXPECT_NEAR(prev / err, 2.0, 0.2);
    prev = err;
  }
  EXPECT_THROW(fine_euler(pot, prm, x0, t, 10, none), ArgumentError);
}

TEST(Reference, FineEulerNoiseMatchesExactMoments) {
  const auto pot = fixture::quadratic(1, 1.0, 1.0);
  const DynamicsParams prm{1.0, 2.0, 0.0, 1.0};
  const double t = 1.5;
  const auto tr = exact_transition(1.0, prm, t);
  const int reps = 4000;
  Matrix X(reps, 3);
  NormalStream rng(21, 0);
  for (int i = 0; i < reps; ++i) {
    const ChainState y = fine_euler(pot, prm, ChainState(1), t, 500, rng);
    X.row(i) << y.theta[0], y.p[0], y.r[0];
  }
  const auto m = oracle::moments(X);
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(m.mean[i], 0.0, 4.0 * std::sqrt(tr.Q(i, i) / reps));
    for (int j = 0; j < 3; ++j) {
      const double se = std::sqrt((tr.Q(i, i) * tr.Q(j, j) + tr.Q(i, j) * tr.Q(i, j)) / reps);
      EXPECT_NEAR(m.cov(i, j), tr.Q(i, j), 4.0 * se + 0.02 * std::abs(tr.Q(i, j))) << i << "," << j;
    }
  }
}

TEST(Reference, CoupledPairCancelsNoiseOnQuadratics) {
  const auto pot = fixture::quadratic(3, 4.0, 2.0, true);
  const DynamicsParams prm = DynamicsParams::standard(4.0, 2.0, 0.0);
  NormalStream rng(4, 0);
  ChainState x(3), y(3);
  rng.fill(x.theta);
  rng.fill(y.theta);
  rng.fill(y.p);
  const double t = 1.0;
  const std::size_t n = 4000;
  const auto [xt, yt] = coupled_fine_pair(pot, prm, x, y, t, n, rng);
  ChainState diff(Vector(y.theta - x.theta), Vector(y.p - x.p), Vector(y.r - x.r));
  auto none = NoiseSource::none();
  const ChainState dt = fine_euler(pot, prm, diff, t, n, none);
  EXPECT_LE((yt.flat() - xt.flat() - dt.flat()).cwiseAbs().maxCoeff(), 1e-10);

  const auto [a, b] = coupled_fine_pair(pot, prm, x, x, t, n, rng);
  EXPECT_EQ(a.flat(), b.flat());
}

TEST(Reference, RejectsInvalidArguments) {
  EXPECT_THROW(exact_transition(0.0, {1.0, 2.0, 0.0, 1.0}, 1.0), ArgumentError);
  EXPECT_THROW(exact_transition(1.0, {1.0, 2.0, 0.0, 1.0}, -1.0), ArgumentError);
}
