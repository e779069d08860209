#pragma once

// Closed-form mean and covariance constants of the discretized third-order
// Langevin transition kernel, together with an independent quadrature route
// through the three-stage splitting that produces them.
//
// Conventions: the kernel acts on x = (theta, p, r). Given the normalized line
// integral Delta = (1/L) int_0^eta grad U(theta + t p) dt,
//
//   theta' = theta - (eta/2) Delta + mu12 p + mu13 r
//   p'     =       -        Delta + mu22 p + mu23 r
//   r'     =           mu31 Delta + mu32 p + mu33 r
//
// plus Gaussian noise with covariance (1/L) [s_ij] (x) I_d. The s_ij stored
// here are dimensionless; the single 1/L is applied at sampling time.

#include "tlmc/core.hpp"
#include "tlmc/exp_poly.hpp"

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace tlmc {

struct DynamicsParams {
  double gamma = 1.0;
  double xi = 2.0;
  double eta = 0.0;
  double L = 1.0;

  void validate() const {
    require(gamma > 0.0 && std::isfinite(gamma), "DynamicsParams: gamma must be positive");
    require(xi > 0.0 && std::isfinite(xi), "DynamicsParams: xi must be positive");
    require(eta >= 0.0 && std::isfinite(eta), "DynamicsParams: eta must be non-negative");
    require(L > 0.0 && std::isfinite(L), "DynamicsParams: L must be positive");
  }

  /// gamma = kappa, xi = 2 kappa.
  static DynamicsParams standard(double kappa, double L, double eta) {
    require(kappa >= 1.0, "DynamicsParams::standard: kappa must be >= 1");
    return DynamicsParams{kappa, 2.0 * kappa, eta, L};
  }
};

struct MeanCoeffs {
  double mu12 = 0, mu13 = 0, mu22 = 1, mu23 = 0, mu31 = 0, mu32 = 0, mu33 = 1;
  double eta = 0;

  double theta_row_weight() const { return -0.5 * eta; }
  static constexpr double p_row_weight() { return -1.0; }
  double r_row_weight() const { return mu31; }

  /// Linear part acting on one coordinate's (theta, p, r) when Delta = 0.
  Mat3 linear_part() const {
    Mat3 m;
    m << 1.0, mu12, mu13, 0.0, mu22, mu23, 0.0, mu32, mu33;
    return m;
  }
};

struct NoiseCoeffs {
  double s11 = 0, s12 = 0, s13 = 0, s22 = 0, s23 = 0, s33 = 0;

  Mat3 matrix() const {
    Mat3 m;
    m << s11, s12, s13, s12, s22, s23, s13, s23, s33;
    return m;
  }
  static NoiseCoeffs from_matrix(const Mat3& m) {
    return NoiseCoeffs{m(0, 0), m(0, 1), m(0, 2), m(1, 1), m(1, 2), m(2, 2)};
  }
};

/// Lower-triangular g with g g^T = [s_ij].
struct NoiseFactor {
  Mat3 g = Mat3::Zero();
};

namespace detail {

using E = ExpTerm;

// Brackets F(x), x = xi * eta. Each coefficient is a sum of
// gamma^a xi^-b F(x) groups; see mean_coeffs / noise_coeffs.
struct KernelBrackets {
  // means
  ExpPoly m12{2, {E{2, 1, 0}, E{-1, 2, 0}, E{-2, 0, 0}, E{2, 0, 1}}};  // x - x^2/2 - 1 + e^-x
  ExpPoly m13{1, {E{1, 1, 0}, E{-1, 0, 0}, E{1, 0, 1}}};               // x - 1 + e^-x
  ExpPoly m22{1, {E{1, 0, 0}, E{-1, 1, 0}, E{-1, 0, 1}}};              // 1 - x - e^-x
  ExpPoly one_minus_e{1, {E{1, 0, 0}, E{-1, 0, 1}}};                   // 1 - e^-x
  ExpPoly m31{1, {E{1, 1, 0}, E{-1, 0, 0}, E{1, 0, 1}}, -1};           // (x - 1 + e^-x) / x
  ExpPoly m32{1, {E{1, 1, 0}, E{1, 1, 1}, E{-2, 0, 0}, E{2, 0, 1}}};   // x + x e^-x - 2 (1 - e^-x)
  ExpPoly m33{1, {E{1, 1, 1}, E{-1, 0, 0}, E{1, 0, 1}}};               // x e^-x - 1 + e^-x
  // covariances
  ExpPoly s11{3, {E{6, 1, 0}, E{-6, 2, 0}, E{2, 3, 0}, E{-12, 1, 1}, E{3, 0, 0}, E{-3, 0, 2}}};
  ExpPoly s12{1, {E{1, 2, 0}, E{-2, 1, 0}, E{1, 0, 0}, E{2, 1, 1}, E{-2, 0, 1}, E{1, 0, 2}}};
  ExpPoly s22{1, {E{2, 1, 0}, E{-3, 0, 0}, E{4, 0, 1}, E{-1, 0, 2}}};
  ExpPoly s13a{2, {E{-4, 2, 1}, E{-2, 2, 0}, E{4, 1, 0}, E{-2, 1, 2}, E{-8, 1, 1}, E{3, 0, 0}, E{-3, 0, 2}}};
  ExpPoly s13b{1, {E{-2, 1, 1}, E{1, 0, 0}, E{-1, 0, 2}}};
  ExpPoly s23a{2, {E{2, 1, 2}, E{-4, 1, 1}, E{-4, 1, 0}, E{3, 0, 2}, E{-12, 0, 1}, E{9, 0, 0}}};
  ExpPoly s23b{1, {E{1, 0, 0}, E{-2, 0, 1}, E{1, 0, 2}}};  // (1 - e^-x)^2
  ExpPoly s33a{2, {E{-2, 2, 2}, E{-6, 1, 2}, E{8, 1, 1}, E{4, 1, 0}, E{-5, 0, 2}, E{16, 0, 1}, E{-11, 0, 0}}};
  ExpPoly s33b{1, {E{-2, 1, 2}, E{-3, 0, 2}, E{4, 0, 1}, E{-1, 0, 0}}};
  ExpPoly s33c{1, {E{1, 0, 0}, E{-1, 0, 2}}};  // 1 - e^-2x
};

inline const KernelBrackets& brackets() {
  static const KernelBrackets b;
  return b;
}

}  // namespace detail

/// The seven mean constants, evaluated without cancellation.
inline MeanCoeffs mean_coeffs(const DynamicsParams& prm) {
  prm.validate();
  const auto& B = detail::brackets();
  const double g = prm.gamma, xi = prm.xi, eta = prm.eta, x = xi * eta;
  const double g2 = g * g, g3 = g2 * g;
  MeanCoeffs mc;
  mc.eta = eta;
  mc.mu12 = eta + g2 / (xi * xi * xi) * B.m12(x);
  mc.mu13 = g / (xi * xi) * B.m13(x);
  mc.mu22 = 1.0 + g2 / (xi * xi) * B.m22(x);
  mc.mu23 = g / xi * B.one_minus_e(x);
  mc.mu31 = g / xi * B.m31(x);
  mc.mu32 = g3 / (xi * xi * xi) * B.m32(x) - g / xi * B.one_minus_e(x);
  mc.mu33 = std::exp(-x) + g2 / (xi * xi) * B.m33(x);
  return mc;
}

/// The six (dimensionless) covariance constants, evaluated without cancellation.
inline NoiseCoeffs noise_coeffs(const DynamicsParams& prm) {
  prm.validate();
  const auto& B = detail::brackets();
  const double g = prm.gamma, xi = prm.xi, x = xi * prm.eta;
  const double g2 = g * g, g3 = g2 * g, g4 = g2 * g2;
  const double xi2 = xi * xi, xi3 = xi2 * xi, xi4 = xi2 * xi2;
  NoiseCoeffs nc;
  nc.s11 = g2 / xi4 * B.s11(x);
  nc.s12 = g2 / xi3 * B.s12(x);
  nc.s22 = g2 / xi2 * B.s22(x);
  nc.s13 = g3 / xi4 * B.s13a(x) + g / xi2 * B.s13b(x);
  nc.s23 = g3 / xi3 * B.s23a(x) + g / xi * B.s23b(x);
  nc.s33 = g4 / xi4 * B.s33a(x) + g2 / xi2 * B.s33b(x) + B.s33c(x);
  return nc;
}

/// Literal double-precision transcription of the published formulas. Kept as
/// a regression reference: it loses all significant digits for small xi*eta.
inline MeanCoeffs mean_coeffs_naive(const DynamicsParams& prm) {
  prm.validate();
  const double g = prm.gamma, xi = prm.xi, eta = prm.eta, e = std::exp(-xi * eta);
  MeanCoeffs mc;
  mc.eta = eta;
  mc.mu12 = (1 + g * g / (xi * xi)) * eta - g * g / (2 * xi) * eta * eta - g * g / (xi * xi * xi) * (1 - e);
  mc.mu13 = g / xi * eta + g / (xi * xi) * (e - 1);
  mc.mu22 = 1 + g * g / (xi * xi) * (1 - xi * eta - e);
  mc.mu23 = g / xi * (1 - e);
  mc.mu31 = eta > 0 ? g / xi - g / (xi * xi) * (1 - e) / eta : 0.0;
  mc.mu32 = std::pow(g, 3) / (xi * xi) * eta + std::pow(g, 3) / (xi * xi) * eta * e -
            (2 * std::pow(g, 3) / std::pow(xi, 3) + g / xi) * (1 - e);
  mc.mu33 = e + g * g / xi * eta * e - g * g / (xi * xi) * (1 - e);
  return mc;
}

inline NoiseCoeffs noise_coeffs_naive(const DynamicsParams& prm) {
  prm.validate();
  const double g = prm.gamma, xi = prm.xi, eta = prm.eta;
  const double e = std::exp(-xi * eta), e2 = std::exp(-2 * xi * eta);
  const double g2 = g * g, g3 = g2 * g, g4 = g2 * g2;
  const double xi2 = xi * xi, xi3 = xi2 * xi, xi4 = xi2 * xi2;
  NoiseCoeffs nc;
  nc.s11 = 2 * g2 / xi3 * eta - 2 * g2 / xi2 * eta * eta + 2 * g2 / (3 * xi) * eta * eta * eta -
           4 * g2 / xi3 * eta * e + g2 / xi4 * (1 - e2);
  nc.s12 = g2 / xi3 * (xi * eta - (1 - e)) * (xi * eta - (1 - e));
  nc.s22 = 2 * g2 / xi * eta - 4 * g2 / xi2 * (1 - e) + g2 / xi2 * (1 - e2);
  nc.s13 = -g3 / xi2 * eta * eta * (2 * e + 1) + (2 * g3 / xi3 - g3 / xi3 * e2 - 4 * g3 / xi3 * e - 2 * g / xi * e) * eta +
           (3 * g3 / (2 * xi4) + g / xi2) * (1 - e2);
  nc.s23 = g3 / xi2 * (e2 - 2 * e - 2) * eta + 3 * g3 / (2 * xi3) * (e2 - 4 * e + 3) + g / xi * (1 - e) * (1 - e);
  nc.s33 = -g4 / xi2 * eta * eta * e2 + (-2 * g2 / xi * e2 + g4 / xi3 * (-3 * e2 + 4 * e + 2)) * eta +
           g4 / (2 * xi4) * (-5 * e2 + 16 * e - 11) + g2 / xi2 * (-3 * e2 + 4 * e - 1) + (1 - e2);
  return nc;
}

/// Cholesky factor of [s_ij]. The matrix is first scaled to unit diagonal
/// (its entries span many orders of magnitude for small steps); eigenvalues of
/// the scaled matrix in [-clamp * trace, 0) are clamped to zero, anything more
/// negative is reported as a coefficient bug.
inline NoiseFactor factor_noise(const NoiseCoeffs& nc, double clamp = 1e-14) {
  const Mat3 A = nc.matrix();
  require((A - A.transpose()).cwiseAbs().maxCoeff() == 0.0, "factor_noise: matrix must be symmetric");
  Vec3 scale;
  for (int i = 0; i < 3; ++i) {
    if (A(i, i) < 0.0) throw NumericalError("factor_noise: negative variance s" + std::to_string(i + 1) + std::to_string(i + 1));
    scale[i] = std::sqrt(A(i, i));
  }
  Mat3 C = Mat3::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (scale[i] > 0.0 && scale[j] > 0.0) C(i, j) = A(i, j) / (scale[i] * scale[j]);

  Eigen::SelfAdjointEigenSolver<Mat3> es(C);
  const double tr = C.trace();
  Vec3 ev = es.eigenvalues();
  if (ev.minCoeff() < -clamp * std::max(tr, 1.0)) {
    throw NumericalError("factor_noise: covariance is indefinite beyond the clamp threshold (min eigenvalue " +
                         std::to_string(ev.minCoeff()) + ")");
  }
  if (ev.minCoeff() < 0.0) {
    ev = ev.cwiseMax(0.0);
    C = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  }

  // Cholesky with zero pivots allowed (rank-deficient PSD input).
  Mat3 Lc = Mat3::Zero();
  const double tiny = 1e-15 * std::max(tr, 1.0);
  for (int j = 0; j < 3; ++j) {
    double d = C(j, j);
    for (int k = 0; k < j; ++k) d -= Lc(j, k) * Lc(j, k);
    if (d <= tiny) continue;  // column stays zero
    Lc(j, j) = std::sqrt(d);
    for (int i = j + 1; i < 3; ++i) {
      double s = C(i, j);
      for (int k = 0; k < j; ++k) s -= Lc(i, k) * Lc(j, k);
      Lc(i, j) = s / Lc(j, j);
    }
  }
  NoiseFactor nf;
  nf.g = scale.asDiagonal() * Lc;
  return nf;
}

// ---------------------------------------------------------------------------
// Quadrature oracle

/// Composite Gauss-Legendre rule with 1..5 nodes per panel.
class CompositeGauss {
 public:
  CompositeGauss(int panels, int nodes) : panels_(panels) {
    require(panels >= 1, "CompositeGauss: panels must be >= 1");
    switch (nodes) {
      case 1: x_ = {0.0}; w_ = {2.0}; break;
      case 2: x_ = {-0.57735026918962576451, 0.57735026918962576451}; w_ = {1.0, 1.0}; break;
      case 3:
        x_ = {-0.77459666924148337704, 0.0, 0.77459666924148337704};
        w_ = {0.55555555555555555556, 0.88888888888888888889, 0.55555555555555555556};
        break;
      case 4:
        x_ = {-0.86113631159405257522, -0.33998104358485626480, 0.33998104358485626480, 0.86113631159405257522};
        w_ = {0.34785484513745385737, 0.65214515486254614263, 0.65214515486254614263, 0.34785484513745385737};
        break;
      case 5:
        x_ = {-0.90617984593866399280, -0.53846931010764321, 0.0, 0.53846931010764321, 0.90617984593866399280};
        w_ = {0.23692688505618908751, 0.47862867049936646804, 0.56888888888888888889, 0.47862867049936646804,
              0.23692688505618908751};
        break;
      default: throw ArgumentError("CompositeGauss: nodes must be in 1..5");
    }
    order_ = 2 * nodes;
  }

  template <class F>
  double integrate(F&& f, double a, double b) const {
    if (b <= a) return 0.0;
    const double h = (b - a) / panels_;
    double acc = 0.0;
    for (int k = 0; k < panels_; ++k) {
      const double mid = a + (k + 0.5) * h;
      double part = 0.0;
      for (std::size_t i = 0; i < x_.size(); ++i) part += w_[i] * f(mid + 0.5 * h * x_[i]);
      acc += 0.5 * h * part;
    }
    return acc;
  }

  /// Calls visit(x, w) for every node x and weight w of the rule on [a, b].
  template <class V>
  void for_each_node(double a, double b, V&& visit) const {
    if (b <= a) return;
    const double h = (b - a) / panels_;
    for (int k = 0; k < panels_; ++k) {
      const double mid = a + (k + 0.5) * h;
      for (std::size_t i = 0; i < x_.size(); ++i) visit(mid + 0.5 * h * x_[i], 0.5 * h * w_[i]);
    }
  }

  int order() const { return order_; }

 private:
  int panels_;
  int order_ = 2;
  std::vector<double> x_, w_;
};

struct OracleCoeffs {
  MeanCoeffs mean;
  NoiseCoeffs noise;       // dimensionless: L times the physical covariance
  Mat3 physical_cov;       // covariance of one coordinate's (theta, p, r) increment
  double theta_row = 0.0;  // weight of Delta in the theta row
  double p_row = 0.0;      // weight of Delta in the p row
};

/// Integrates the three-stage splitting numerically: the Ornstein-Uhlenbeck
/// first stage in closed form, then the Fubini-swapped stage integrals for the
/// means and the Ito-isometry variance integrals, all by composite quadrature.
/// Shares no code with mean_coeffs / noise_coeffs.
inline OracleCoeffs quadrature_oracle(const DynamicsParams& prm, int panels = 128, int nodes = 4) {
  prm.validate();
  require(panels >= 64, "quadrature_oracle: panels must be >= 64");
  const CompositeGauss Q(panels, nodes);
  const double g = prm.gamma, xi = prm.xi, eta = prm.eta, L = prm.L;
  const double amp = std::sqrt(2.0 * xi / L);  // physical noise intensity on r
  OracleCoeffs out;
  out.mean.eta = eta;

  // Stage 1 (OU): mean of r_hat at time s is rho_p(s) p + rho_r(s) r.
  auto rho_p = [&](double s) { return (g / xi) * std::expm1(-xi * s); };
  auto rho_r = [&](double s) { return std::exp(-xi * s); };
  // Stage 2: p_hat(t) = p + gamma int_0^t r_hat - (t/eta) Delta.
  auto P_p = [&](double t) { return 1.0 + g * Q.integrate(rho_p, 0.0, t); };
  auto P_r = [&](double t) { return g * Q.integrate(rho_r, 0.0, t); };
  auto P_d = [&](double t) { return eta > 0.0 ? -t / eta : 0.0; };
  // Stage 3: theta' = theta + int p_hat; r' = e^{-xi eta} r - gamma int e^{-xi(eta-t)} p_hat(t) dt.
  auto decay = [&](double t) { return std::exp(-xi * (eta - t)); };

  out.mean.mu12 = Q.integrate(P_p, 0.0, eta);
  out.mean.mu13 = Q.integrate(P_r, 0.0, eta);
  out.theta_row = Q.integrate(P_d, 0.0, eta);
  out.mean.mu22 = P_p(eta);
  out.mean.mu23 = P_r(eta);
  out.p_row = eta > 0.0 ? P_d(eta) : -1.0;
  out.mean.mu31 = -g * Q.integrate([&](double t) { return decay(t) * P_d(t); }, 0.0, eta);
  out.mean.mu32 = -g * Q.integrate([&](double t) { return decay(t) * P_p(t); }, 0.0, eta);
  out.mean.mu33 = std::exp(-xi * eta) - g * Q.integrate([&](double t) { return decay(t) * P_r(t); }, 0.0, eta);

  // Noise: response of each component at time eta to a Brownian increment at v.
  // r_hat(s) <- amp e^{-xi(s-v)};  p_hat(t) <- gamma int_v^t amp e^{-xi(s-v)} ds.
  auto Kp_at = [&](double t, double v) { return -g * amp * std::expm1(-xi * (t - v)) / xi; };
  auto K_theta = [&](double v) { return Q.integrate([&](double t) { return Kp_at(t, v); }, v, eta); };
  auto K_p = [&](double v) { return Kp_at(eta, v); };
  auto K_r = [&](double v) {
    return amp * std::exp(-xi * (eta - v)) - g * Q.integrate([&](double t) { return decay(t) * Kp_at(t, v); }, v, eta);
  };
  // Ito isometry over the increment time v; kernels cached per quadrature node.
  std::array<std::function<double(double)>, 3> K = {K_theta, K_p, K_r};
  Mat3 cov = Mat3::Zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = i; j < 3; ++j) {
      cov(i, j) = Q.integrate([&](double v) { return K[static_cast<std::size_t>(i)](v) * K[static_cast<std::size_t>(j)](v); }, 0.0, eta);
      cov(j, i) = cov(i, j);
    }
  }
  out.physical_cov = cov;
  out.noise = NoiseCoeffs::from_matrix(L * cov);
  return out;
}

/// Coefficients shared by every step and chain for one parameter set.
struct TransitionCoeffs {
  DynamicsParams params;
  MeanCoeffs mean;
  NoiseCoeffs noise;
  NoiseFactor factor;

  explicit TransitionCoeffs(const DynamicsParams& p)
      : params(p), mean(mean_coeffs(p)), noise(noise_coeffs(p)), factor(factor_noise(noise)) {}
};

struct OracleDelta {
  std::string name;
  double closed_form = 0.0;
  double oracle = 0.0;
  double abs_delta() const { return std::abs(closed_form - oracle); }
};

/// The thirteen constants plus the two Delta row weights, closed form against
/// the quadrature oracle.
inline std::vector<OracleDelta> oracle_deltas(const DynamicsParams& prm, int panels = 128) {
  const MeanCoeffs mc = mean_coeffs(prm);
  const NoiseCoeffs nc = noise_coeffs(prm);
  const OracleCoeffs oc = quadrature_oracle(prm, panels);
  return {
      {"mu12", mc.mu12, oc.mean.mu12},
      {"mu13", mc.mu13, oc.mean.mu13},
      {"mu22", mc.mu22, oc.mean.mu22},
      {"mu23", mc.mu23, oc.mean.mu23},
      {"mu31", mc.mu31, oc.mean.mu31},
      {"mu32", mc.mu32, oc.mean.mu32},
      {"mu33", mc.mu33, oc.mean.mu33},
      {"s11", nc.s11, oc.noise.s11},
      {"s12", nc.s12, oc.noise.s12},
      {"s13", nc.s13, oc.noise.s13},
      {"s22", nc.s22, oc.noise.s22},
      {"s23", nc.s23, oc.noise.s23},
      {"s33", nc.s33, oc.noise.s33},
      {"theta_row_weight", mc.theta_row_weight(), oc.theta_row},
      {"p_row_weight", MeanCoeffs::p_row_weight(), oc.p_row},
  };
}

/// Default check grid: gamma in {1, 2, 10}, xi = 2 gamma, six step sizes.
inline std::vector<DynamicsParams> oracle_grid(double L = 1.0) {
  std::vector<DynamicsParams> grid;
  for (double g : {1.0, 2.0, 10.0})
    for (double eta : {1e-4, 1e-3, 1e-2, 0.1, 0.25, 0.5}) grid.push_back({g, 2.0 * g, eta, L});
  return grid;
}

}  // namespace tlmc
