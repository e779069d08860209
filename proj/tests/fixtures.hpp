#pragma once

// Small potentials shared by the test suites.

#include "tlmc/tlmc.hpp"

#include <cmath>

namespace fixture {

using tlmc::Matrix;
using tlmc::Vector;

/// Logistic regression on n synthetic rows in dimension d.
inline tlmc::PotentialSpec logistic(Eigen::Index n, Eigen::Index d, std::uint64_t seed, double ridge = 1.0) {
  tlmc::NormalStream rng(seed, 7);
  Matrix X(n, d);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      X(i, j) = rng();
      s += X(i, j) * (j % 2 == 0 ? 1.0 : -0.5);
    }
    y[i] = (s + 0.5 * rng()) > 0.0 ? 1.0 : -1.0;
  }
  return tlmc::make_logistic(X, y, ridge);
}

/// Quadratic with linearly spaced spectrum [L / kappa, L], optionally rotated.
inline tlmc::PotentialSpec quadratic(Eigen::Index d, double kappa, double L, bool rotate = false,
                                     std::uint64_t seed = 3) {
  const Vector lam = d == 1 ? Vector::Constant(1, L) : Vector(Vector::LinSpaced(d, L / kappa, L));
  Matrix V = Matrix::Identity(d, d);
  if (rotate) {
    tlmc::NormalStream rng(seed, 11);
    Matrix G(d, d);
    for (Eigen::Index i = 0; i < d * d; ++i) G.data()[i] = rng();
    Eigen::HouseholderQR<Matrix> qr(G);
    V = qr.householderQ() * Matrix::Identity(d, d);
  }
  return tlmc::make_quadratic(Vector::Zero(d), lam, V);
}

/// Ridge-separable potential with u(t) = t^2/2 + log cosh(t) on random
/// directions; u'' lies in (1, 2].
inline tlmc::PotentialSpec logcosh_ridge(Eigen::Index d, std::uint64_t seed) {
  tlmc::NormalStream rng(seed, 13);
  std::vector<tlmc::RidgeComponent> comps;
  for (Eigen::Index i = 0; i < d + 2; ++i) {
    Vector a(d);
    rng.fill(a);
    a /= a.norm();
    comps.push_back({[](double t) { return 0.5 * t * t + std::log(std::cosh(t)); },
                     [](double t) { return t + std::tanh(t); }, a});
  }
  // A^T A has eigenvalues in [lo, hi]; curvature per term in (1, 2].
  Matrix A(d + 2, d);
  for (Eigen::Index i = 0; i < d + 2; ++i) A.row(i) = comps[static_cast<std::size_t>(i)].a.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> es(A.transpose() * A);
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  return tlmc::make_ridge_separable(std::move(comps), tlmc::ConvexSmoothBounds(lo, 2.0 * hi));
}

}  // namespace fixture
