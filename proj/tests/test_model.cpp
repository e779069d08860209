#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

using namespace tlmc;

TEST(Model, DiagonalQuadraticGradient) {
  const auto pot = make_diagonal_quadratic(Vector::Zero(2), Vector::Map(std::vector<double>{1.0, 4.0}.data(), 2));
  const Vector g = gradient(pot, Vector::Ones(2));
  EXPECT_DOUBLE_EQ(g[0], 1.0);
  EXPECT_DOUBLE_EQ(g[1], 4.0);
  EXPECT_DOUBLE_EQ(pot.m(), 1.0);
  EXPECT_DOUBLE_EQ(pot.L(), 4.0);
}

TEST(Model, LogisticGradientAtOrigin) {
  const auto pot = fixture::logistic(30, 4, 1);
  const auto* lr = pot.as<LogisticRegression>();
  ASSERT_NE(lr, nullptr);
  Vector expect = Vector::Zero(4);
  for (Eigen::Index i = 0; i < lr->X.rows(); ++i) expect += -0.5 * lr->y[i] * lr->X.row(i).transpose();
  EXPECT_LE((gradient(pot, Vector::Zero(4)) - expect).norm(), 1e-13 * (1.0 + expect.norm()));
}

TEST(Model, GradientMatchesFiniteDifferences) {
  Vector lam(3);
  lam << 1.0, 2.0, 3.0;
  const std::vector<PotentialSpec> pots = {
      fixture::quadratic(5, 10.0, 3.0, true),
      fixture::logistic(40, 5, 2),
      fixture::logcosh_ridge(4, 5),
      make_softened_radial(lam, 0.5),
  };
  NormalStream rng(1, 0);
  for (const auto& pot : pots) {
    for (int k = 0; k < 100; ++k) {
      Vector th(pot.dim());
      rng.fill(th);
      const Vector g = gradient(pot, th);
      const Vector fd = oracle::fd_gradient(pot, th);
      EXPECT_LE((g - fd).norm(), 1e-5 * (1.0 + g.norm())) << pot.kind_name();
    }
  }
}

TEST(Model, BoundsInvariants) {
  for (const auto& pot : {fixture::quadratic(6, 7.0, 2.0, true), fixture::logistic(25, 3, 4, 0.5)}) {
    EXPECT_GT(pot.m(), 0.0);
    EXPECT_GE(pot.kappa(), 1.0);
    EXPECT_NEAR(pot.kappa() * pot.m(), pot.L(), 1e-12 * pot.L());
  }
  const auto q = fixture::quadratic(6, 7.0, 2.0);
  EXPECT_DOUBLE_EQ(q.m(), q.as<Quadratic>()->eigenvalues.minCoeff());
  EXPECT_DOUBLE_EQ(q.L(), q.as<Quadratic>()->eigenvalues.maxCoeff());
}

TEST(Model, LogisticCertificate) {
  const auto pot = fixture::logistic(50, 5, 9, 0.7);
  const auto* lr = pot.as<LogisticRegression>();
  Eigen::SelfAdjointEigenSolver<Matrix> es(lr->X.transpose() * lr->X);
  const double top = es.eigenvalues().maxCoeff();
  EXPECT_DOUBLE_EQ(pot.m(), 0.7);
  EXPECT_GE(pot.L(), 0.7 + 0.25 * top);
  EXPECT_LE(pot.L(), (0.7 + 0.25 * top) * (1.0 + 1e-8));
}

TEST(Model, SandwichHoldsForCertifiedBounds) {
  boost::random::mt19937_64 rng(5);
  const auto q = fixture::quadratic(4, 8.0, 2.0, true);
  EXPECT_TRUE(sandwich_check(q, ball_probes(q, Vector::Zero(4), 500, rng)).ok());

  const auto lr = fixture::logistic(50, 5, 3);
  const Vector c = minimize(lr, Vector::Zero(5), 1e-8).theta;
  const auto rep = sandwich_check(lr, ball_probes(lr, c, 1000, rng));
  EXPECT_EQ(rep.probes, 1000u);
  EXPECT_TRUE(rep.ok());
}

TEST(Model, SandwichFlagsUnderstatedL) {
  const auto base = fixture::quadratic(3, 4.0, 2.0);
  const PotentialSpec wrong(*base.as<Quadratic>(), ConvexSmoothBounds(0.5, 1.0), 3);
  boost::random::mt19937_64 rng(6);
  EXPECT_FALSE(sandwich_check(wrong, ball_probes(wrong, Vector::Zero(3), 200, rng)).ok());
}

TEST(Model, MinimizeQuadraticReturnsCenter) {
  Vector c(3);
  c << 1.0, -2.0, 0.5;
  const auto base = fixture::quadratic(3, 20.0, 4.0, true);
  const auto* q = base.as<Quadratic>();
  const auto pot = make_quadratic(c, q->eigenvalues, q->directions);
  const auto mn = minimize(pot, Vector::Constant(3, 10.0), 1e-10);
  EXPECT_LE((mn.theta - c).norm(), 1e-10);
}

TEST(Model, MinimizeLogisticPostcondition) {
  const auto pot = fixture::logistic(60, 6, 8);
  const double tol = 1e-6;
  const auto mn = minimize(pot, Vector::Zero(6), tol);
  EXPECT_LE(gradient(pot, mn.theta).norm(), pot.m() * tol);
  EXPECT_EQ(mn.gradient_evals, mn.iterations + 1);
}

TEST(Model, MinimizeRejectsZeroTolerance) {
  const auto pot = fixture::quadratic(2, 2.0, 1.0);
  EXPECT_THROW(minimize(pot, Vector::Zero(2), 0.0), ArgumentError);
}

TEST(Model, RidgeEncodingOfLogisticMatchesDirect) {
  const auto lr = fixture::logistic(40, 5, 12);
  const auto rs = to_ridge_separable(lr);
  ASSERT_NE(rs.as<RidgeSeparable>(), nullptr);
  NormalStream rng(2, 0);
  for (int k = 0; k < 50; ++k) {
    Vector th(5);
    rng.fill(th);
    EXPECT_LE((gradient(lr, th) - gradient(rs, th)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(value(lr, th), value(rs, th), 1e-10 * (1.0 + std::abs(value(lr, th))));
  }
}

TEST(Model, RidgeEncodingOfQuadraticMatchesDirect) {
  const auto q = fixture::quadratic(4, 5.0, 2.0, true);
  const auto rs = to_ridge_separable(q);
  const Vector th = Vector::LinSpaced(4, -1.0, 2.0);
  EXPECT_LE((gradient(q, th) - gradient(rs, th)).norm(), 1e-12);
}

TEST(Model, BlackBoxHasNoRidgeForm) {
  Vector lam(2);
  lam << 1.0, 2.0;
  EXPECT_THROW(to_ridge_separable(make_softened_radial(lam, 0.1)), ArgumentError);
}

TEST(Model, ReadsLogisticCsv) {
  const std::string path = ::testing::TempDir() + "tlmc_logistic.csv";
  {
    std::ofstream f(path);
    f << "y,x1,x2\n1,0.5,-1\n-1,2,0.25\n";
  }
  auto [X, y] = read_logistic_csv(path);
  ASSERT_EQ(X.rows(), 2);
  ASSERT_EQ(X.cols(), 2);
  EXPECT_DOUBLE_EQ(y[1], -1.0);
  EXPECT_DOUBLE_EQ(X(1, 1), 0.25);
  {
    std::ofstream f(path);
    f << "1,0.5,-1\n-1,2\n";
  }
  EXPECT_THROW(read_logistic_csv(path), ArgumentError);
  std::remove(path.c_str());
}

TEST(Model, RejectsInvalidConstruction) {
  EXPECT_THROW(ConvexSmoothBounds(2.0, 1.0), ArgumentError);
  EXPECT_THROW(ConvexSmoothBounds(0.0, 1.0), ArgumentError);
  Matrix X = Matrix::Ones(2, 2);
  Vector y(2);
  y << 1.0, 0.0;
  EXPECT_THROW(make_logistic(X, y, 1.0), ArgumentError);
}
