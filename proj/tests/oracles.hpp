#pragma once

// Reference values and independent numerical routes used by the tests.
// Nothing here calls into the code under test except for potential
// evaluation (value/gradient), which the oracles need as input.

#include "tlmc/tlmc.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

namespace oracle {

using tlmc::Matrix;
using tlmc::Vector;

/// Adaptive Gauss-Kronrod (61 points) on [a, b].
template <class F>
double integrate(F&& f, double a, double b, double tol = 1e-13) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, tol);
}

/// Componentwise (1/L) int_0^eta grad U(theta + t p) dt by adaptive quadrature.
inline Vector line_integral(const tlmc::PotentialSpec& pot, const Vector& theta, const Vector& p, double eta) {
  Vector out(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    out[j] = integrate([&](double t) { return tlmc::gradient(pot, Vector(theta + t * p))[j]; }, 0.0, eta);
  }
  return out / pot.L();
}

/// Central finite-difference gradient of U.
inline Vector fd_gradient(const tlmc::PotentialSpec& pot, const Vector& theta, double h = 1e-5) {
  Vector g(theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Vector a = theta, b = theta;
    a[j] += h;
    b[j] -= h;
    g[j] = (tlmc::value(pot, a) - tlmc::value(pot, b)) / (2.0 * h);
  }
  return g;
}

/// Fejer's first rule on [0, eta]: nodes (eta/2)(1 + cos((2k-1) pi / 2n)) and
/// weights (eta/n)(1 - 2 sum_{j=1}^{n/2} cos(2 j t_k) / (4 j^2 - 1)).
struct FejerRule {
  std::vector<double> nodes, weights;
};

inline FejerRule fejer_first(int n, double eta) {
  FejerRule r;
  for (int k = 1; k <= n; ++k) {
    const double t = (2.0 * k - 1.0) * std::numbers::pi / (2.0 * n);
    double s = 0.0;
    for (int j = 1; j <= n / 2; ++j) s += std::cos(2.0 * j * t) / (4.0 * j * j - 1.0);
    r.nodes.push_back(0.5 * eta * (1.0 + std::cos(t)));
    r.weights.push_back(eta / n * (1.0 - 2.0 * s));
  }
  return r;
}

/// Kernel constants at three parameter points, from 40-digit mpmath
/// quadrature of the three-stage splitting integrals.
struct FrozenCoeffs {
  double gamma, xi, eta;
  std::map<std::string, double> values;
};

inline const std::vector<FrozenCoeffs>& frozen_coeffs() {
  static const std::vector<FrozenCoeffs> table = {
      {2.0, 4.0, 0.25,
       {{"mu12", 0.2417424650732151451},   {"mu13", 0.045984930146430290199}, {"mu22", 0.9080301397071394196},
        {"mu23", 0.3160602794142788392},   {"mu31", 0.1839397205857211608},   {"mu32", -0.3031054889749879686},
        {"mu33", 0.30181916175716348239},  {"s11", 0.0009345877928794482561}, {"s12", 0.0084584552022882932434},
        {"s13", 0.014687765080057031261},  {"s22", 0.084045620362289148622},  {"s23", 0.18670103528686316897},
        {"s33", 0.81555467595277159995}}},
      {1.0, 2.0, 5e-4,
       {{"mu12", 0.00049999997917187396892}, {"mu13", 1.2495834374791701904e-7}, {"mu22", 0.99999987504165625208},
        {"mu23", 0.00049975008331250417637}, {"mu31", 0.00024991668749583403288}, {"mu32", -0.0004997500624895843854},
        {"mu33", 0.99900037491667708331},    {"s11", 6.2465290175100032511e-18},  {"s12", 3.1229175344445184722e-14},
        {"s13", 8.3250039570489290292e-11},  {"s22", 1.665417249791728263e-10},   {"s23", 4.9950026032086077833e-7},
        {"s33", 0.0019980011662084645971}}},
      {10.0, 20.0, 0.5,
       {{"mu12", -0.012499432500877968939}, {"mu13", 0.22500113499824406212},  {"mu22", -1.2500113499824406212},
        {"mu23", 0.49997730003511875757},   {"mu31", 0.45000226999648812424},  {"mu32", 0.5000907998595249697},
        {"mu33", -0.24982975026339068181},  {"s11", 0.30479053166713438353},   {"s12", 1.0125102150099609794},
        {"s13", -0.46571580005919922688},   {"s22", 4.2500453994144740792},    {"s23", -1.4376929457080054171},
        {"s33", 1.6564315687373345521}}},
  };
  return table;
}

/// s11 at (gamma, xi, eta) = (1, 2, 5e-5), i.e. xi eta = 1e-4 (mpmath, 40 digits).
inline constexpr double kS11AtXiEta1em4 = 6.249652790178225712e-23;

/// Lyapunov block at kappa = 1, rational entries.
inline tlmc::Mat3 s_matrix_kappa1() {
  tlmc::Mat3 s;
  s << 11.0 / 4.0, 0.5, -0.25, 0.5, 3.0, 1.0, -0.25, 1.0, 0.75;
  return s;
}

/// Eigenvalues of a symmetric 3x3 matrix by the trigonometric solution of its
/// characteristic cubic, ascending.
inline tlmc::Vec3 sym3_eig_trig(const tlmc::Mat3& A) {
  const double q = A.trace() / 3.0;
  const double p1 = A(0, 1) * A(0, 1) + A(0, 2) * A(0, 2) + A(1, 2) * A(1, 2);
  const double p2 = (A(0, 0) - q) * (A(0, 0) - q) + (A(1, 1) - q) * (A(1, 1) - q) + (A(2, 2) - q) * (A(2, 2) - q) +
                    2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  if (p == 0.0) return tlmc::Vec3::Constant(q);
  const tlmc::Mat3 B = (A - q * tlmc::Mat3::Identity()) / p;
  const double r = std::clamp(B.determinant() / 2.0, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  const double e1 = q + 2.0 * p * std::cos(phi);
  const double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  const double e2 = 3.0 * q - e1 - e3;
  tlmc::Vec3 out(e3, e2, e1);
  std::sort(out.data(), out.data() + 3);
  return out;
}

/// Sample mean and covariance of the rows of X.
struct Moments {
  Vector mean;
  Matrix cov;
};

inline Moments moments(const Matrix& X) {
  Moments m;
  m.mean = X.colwise().mean().transpose();
  const Matrix C = X.rowwise() - m.mean.transpose();
  m.cov = C.transpose() * C / static_cast<double>(X.rows() - 1);
  return m;
}

}  // namespace oracle
