#pragma once

// Spectral certificates behind the contraction of the continuous dynamics:
// the Lyapunov matrix S(kappa), the per-eigendirection drift M, the rational
// functions g1..g5 and the cubic whose roots are the scaled eigenvalues of S.

#include "tlmc/model.hpp"
#include "tlmc/reference.hpp"
#include "tlmc/sampler.hpp"

#include <Eigen/Eigenvalues>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/random/uniform_real_distribution.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

namespace tlmc {

/// Per-coordinate block s of S = s (x) I_d, acting on (theta, p, r) triples.
struct LyapunovMatrix {
  double kappa = 1.0;
  Mat3 s = Mat3::Identity();
};

inline LyapunovMatrix s_matrix(double kappa) {
  require(kappa >= 1.0 && std::isfinite(kappa), "s_matrix: kappa must be >= 1");
  const double k = kappa, k3 = k * k * k, k4 = k3 * k, k5 = k4 * k;
  // s11 = (k^7 + 3k^4 + 5k^3 + k + 1) / (4 k^5), written termwise to avoid overflow.
  const double s11 = (k * k + 3.0 / k + 5.0 / (k * k) + 1.0 / k4 + 1.0 / k5) / 4.0;
  const double s12 = k / 2.0;
  const double s13 = 0.25 * (1.0 - 1.0 / k3 - 1.0 / k4) * k;
  const double s22 = (4.0 + 6.0 / k + 1.0 / k3 + 1.0 / k4) / 4.0;
  const double s23 = (k + 1.0) / (2.0 * k);
  const double s33 = (k + 2.0) / (4.0 * k);
  LyapunovMatrix out;
  out.kappa = kappa;
  out.s << s11, s12, s13, s12, s22, s23, s13, s23, s33;
  return out;
}

/// sum_j v_j^T s v_j over the per-coordinate triples of dx = (theta, p, r).
inline double s_norm(const Vector& dx, const LyapunovMatrix& S) {
  require(dx.size() % 3 == 0, "s_norm: length must be divisible by 3");
  const auto d = dx.size() / 3;
  double acc = 0.0;
  for (Eigen::Index j = 0; j < d; ++j) {
    const Vec3 v(dx[j], dx[d + j], dx[2 * d + j]);
    acc += v.dot(S.s * v);
  }
  return acc;
}

inline double s_norm(const ChainState& dx, const LyapunovMatrix& S) { return s_norm(dx.flat(), S); }

/// Ascending eigenvalues of a symmetric 3x3 matrix.
inline Vec3 sym3_eigenvalues(const Mat3& A) {
  Eigen::SelfAdjointEigenSolver<Mat3> es(A, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

/// Drift of the synchronous-coupling difference along one Hessian
/// eigendirection with normalized curvature l = H / L.
struct DriftMatrix {
  double l = 1.0;
  double gamma = 1.0;
  double xi = 2.0;
  Mat3 m3 = Mat3::Zero();
};

inline DriftMatrix drift_matrix(double l, double gamma, double xi) {
  DriftMatrix D{l, gamma, xi, Mat3::Zero()};
  D.m3 << 0.0, 1.0, 0.0, -l, 0.0, gamma, 0.0, -gamma, -xi;
  return D;
}

/// Symmetric part s M + M^T s for gamma = kappa, xi = 2 kappa.
inline Mat3 lyapunov_derivative(double kappa, double l) {
  const Mat3 s = s_matrix(kappa).s;
  const Mat3 M = drift_matrix(l, kappa, 2.0 * kappa).m3;
  return s * M + M.transpose() * s;
}

/// Largest eigenvalue of s M + M^T s (gamma = kappa, xi = 2 kappa).
inline double check_lemma2(double kappa, double l) {
  require(kappa >= 1.0, "check_lemma2: kappa must be >= 1");
  const double lo = 1.0 / kappa;
  require(l >= lo * (1.0 - 1e-12) && l <= 1.0 + 1e-12, "check_lemma2: l must lie in [1/kappa, 1]");
  return sym3_eigenvalues(lyapunov_derivative(kappa, l)).maxCoeff();
}

struct GFunctions {
  double g1 = 0, g2 = 0, g3 = 0, g4 = 0, g5 = 0;
};

namespace detail {

// sum_k c_k kappa^(-k) for k = 0..coeffs.size()-1.
template <class T>
T inverse_poly(const T& kappa, std::initializer_list<int> coeffs) {
  const T u = T(1) / kappa;
  T acc = 0, pw = 1;
  for (int c : coeffs) {
    acc += T(c) * pw;
    pw *= u;
  }
  return acc;
}

}  // namespace detail

/// g1..g5 in any floating type (extended precision is used to check the
/// g4^2 - g5 identity, which cancels about 3 log10(kappa) digits).
template <class T>
std::array<T, 5> g_functions_as(const T& kappa) {
  const T g1 = detail::inverse_poly(kappa, {4, 0, 20, 56, 40, 8, 20, 12, 1, 2, 1});
  const T g2 = detail::inverse_poly(kappa, {0, 0, 0, 1, 0, 5, 11, 5, 1, 2, 1});
  const T g3 = detail::inverse_poly(kappa, {8, 0, 24, 60, 41, 10, 21, 12, 1, 2, 1});
  const T g4 = detail::inverse_poly(kappa, {0, 0, 0, 1, 0, 5, 11, 5, 1, 2, 1});
  const T g5 = detail::inverse_poly(kappa, {0, 0, 0, 0, 0, 0, 1, 0, 10, -2, 35, 40, -5, -1, 37, 1, 7, 11, 0, 1, 1});
  return {g1, g2, g3, g4, g5};
}

inline GFunctions g_functions(double kappa) {
  require(kappa >= 1.0 && std::isfinite(kappa), "g_functions: kappa must be >= 1");
  const auto g = g_functions_as<double>(kappa);
  return GFunctions{g[0], g[1], g[2], g[3], g[4]};
}

/// Closed-form eigenvalues of s M + M^T s: -1 and
/// -(2(l + 1/kappa) +- (l - 1/kappa) sqrt(g1)) / (4 / kappa).
inline Vec3 drift_eigenvalues_closed_form(double kappa, double l) {
  const double sg = std::sqrt(g_functions(kappa).g1);
  const double a = 2.0 * (l + 1.0 / kappa);
  const double b = (l - 1.0 / kappa) * sg;
  Vec3 ev(-1.0, -(a + b) * kappa / 4.0, -(a - b) * kappa / 4.0);
  std::sort(ev.data(), ev.data() + 3);
  return ev;
}

struct SqrtG1Report {
  double kappa = 0;
  double first = 0;   // 2 - sqrt(g1)
  double second = 0;  // -(kappa/4)((2 - sqrt g1) + 2/kappa + sqrt(g1)/kappa)
  bool ok() const { return first <= 0.0 && second <= -0.2; }
};

inline SqrtG1Report check_lemma4(double kappa) {
  const double sg = std::sqrt(g_functions(kappa).g1);
  SqrtG1Report r;
  r.kappa = kappa;
  r.first = 2.0 - sg;
  r.second = -(kappa / 4.0) * ((2.0 - sg) + 2.0 / kappa + sg / kappa);
  return r;
}

/// f(x) = x^3 - g2 x^2 + g3 x / kappa^9 - g3 / kappa^15.
inline long double cubic_f(double kappa, long double x) {
  const auto g = g_functions(kappa);
  const long double k = kappa;
  return x * x * x - g.g2 * x * x + g.g3 * x / std::pow(k, 9) - g.g3 / std::pow(k, 15);
}

/// Roots of f rescaled to y = kappa^5 x / 4, ascending. In y the cubic reads
/// y^3 - c2 y^2 + c1 y - c0 with c2 = kappa^5 g2 / 4, c1 = kappa g3 / 16,
/// c0 = g3 / 64, whose roots are the eigenvalues of s when the identity holds.
inline Vec3 cubic_roots_scaled(double kappa) {
  const auto g = g_functions(kappa);
  using LD = long double;
  const LD k = kappa;
  const LD c2 = std::pow(k, 5) * static_cast<LD>(g.g2) / 4;
  const LD c1 = k * static_cast<LD>(g.g3) / 16;
  const LD c0 = static_cast<LD>(g.g3) / 64;
  auto f = [&](LD y) { return ((y - c2) * y + c1) * y - c0; };
  auto df = [&](LD y) { return (3 * y - 2 * c2) * y + c1; };
  auto polish = [&](LD y) {
    for (int it = 0; it < 50; ++it) {
      const LD d = df(y);
      if (d == 0) break;
      const LD step = f(y) / d;
      y -= step;
      if (std::abs(step) <= 1e-19L * std::abs(y)) break;
    }
    return y;
  };
  // Largest root: bisection on [0, c2 + 1] (f(0) = -c0 < 0, f(c2 + 1) > 0), then Newton.
  LD lo = 0, hi = c2 + 1;
  // Move lo past the other two roots: they are below the larger critical point.
  const LD disc = c2 * c2 - 3 * c1;
  if (disc > 0) lo = (c2 + std::sqrt(disc)) / 3;
  for (int it = 0; it < 200 && hi - lo > 1e-18L * hi; ++it) {
    const LD mid = 0.5L * (lo + hi);
    (f(mid) > 0 ? hi : lo) = mid;
  }
  const LD yl = polish(0.5L * (lo + hi));
  // Deflate with the product and pair-sum relations, which avoid c2 - yl.
  const LD prod = c0 / yl;
  const LD sum = (c1 - prod) / yl;
  const LD dq = std::max<LD>(sum * sum - 4 * prod, 0);
  const LD big = 0.5L * (sum + std::sqrt(dq));
  const LD small = big > 0 ? prod / big : 0;
  Vec3 out(static_cast<double>(polish(small)), static_cast<double>(polish(big)), static_cast<double>(yl));
  std::sort(out.data(), out.data() + 3);
  return out;
}

struct CubicReport {
  double kappa = 0;
  double f_low = 0;    // f(4 / (5 kappa^6)), expected < 0
  double f_high = 0;   // f(4 / kappa^3 + 40 / kappa^5), expected > 0
  Vec3 roots_scaled = Vec3::Zero();  // kappa^5 x / 4 for the three roots
  Vec3 eig_s = Vec3::Zero();
  double max_rel_mismatch = 0;       // roots vs eig(s)
  bool roots_in_interval = false;    // within [1/(5 kappa), kappa^2 + 10]
  bool ok(double rel_tol = 1e-8) const {
    return f_low < 0.0 && f_high > 0.0 && roots_in_interval && max_rel_mismatch <= rel_tol;
  }
};

inline CubicReport check_lemma5(double kappa) {
  require(kappa >= 1.0, "check_lemma5: kappa must be >= 1");
  CubicReport r;
  r.kappa = kappa;
  const long double k = kappa;
  // Compare signs on the scale of the cubic's terms: f itself is ~kappa^-15.
  r.f_low = static_cast<double>(cubic_f(kappa, 4.0L / (5.0L * std::pow(k, 6))) * std::pow(k, 15));
  r.f_high = static_cast<double>(cubic_f(kappa, 4.0L / std::pow(k, 3) + 40.0L / std::pow(k, 5)) * std::pow(k, 9));
  r.roots_scaled = cubic_roots_scaled(kappa);
  r.eig_s = sym3_eigenvalues(s_matrix(kappa).s);
  for (int i = 0; i < 3; ++i) {
    r.max_rel_mismatch = std::max(r.max_rel_mismatch, std::abs(r.roots_scaled[i] - r.eig_s[i]) / std::abs(r.eig_s[i]));
  }
  r.roots_in_interval = r.roots_scaled.minCoeff() >= 1.0 / (5.0 * kappa) - 1e-12 &&
                        r.roots_scaled.maxCoeff() <= kappa * kappa + 10.0 + 1e-9;
  return r;
}

/// Contraction rate of the continuous dynamics in S-norm.
inline double contraction_rate(double kappa) { return 1.0 / (5.0 * kappa * kappa + 50.0); }

struct FlowCheckReport {
  double kappa = 0, l = 0;
  double worst_ratio = -1e300;  // max over samples of (dV/dt) / V
  double bound = 0;             // -1 / (5 kappa^2 + 50)
  double tolerance = 0;
  bool ok() const { return worst_ratio <= bound + tolerance; }
};

/// Integrates v' = M v exactly on a grid of spacing dt and checks
/// (dV/dt)/V <= -1/(5 kappa^2 + 50) for V = v^T s v, with dV/dt from
/// central differences (tolerance proportional to dt^2).
inline FlowCheckReport flow_contraction_check(double kappa, double l, const Vec3& v0, double t_final, double dt) {
  require(dt > 0.0 && t_final > 2.0 * dt, "flow_contraction_check: need t_final > 2 dt > 0");
  const Mat3 s = s_matrix(kappa).s;
  const Mat3 M = drift_matrix(l, kappa, 2.0 * kappa).m3;
  const Mat3 E = (dt * M).exp();
  FlowCheckReport rep;
  rep.kappa = kappa;
  rep.l = l;
  rep.bound = -contraction_rate(kappa);
  const double scale = (M.norm() + 1.0);
  rep.tolerance = 10.0 * dt * dt * scale * scale * scale * s.norm() / sym3_eigenvalues(s).minCoeff() + 1e-9;
  Vec3 prev = v0, cur = E * v0;
  const auto steps = static_cast<std::size_t>(t_final / dt);
  for (std::size_t k = 1; k + 1 < steps; ++k) {
    const Vec3 next = E * cur;
    const double V = cur.dot(s * cur);
    if (V <= 1e-280) break;
    const double dV = (next.dot(s * next) - prev.dot(s * prev)) / (2.0 * dt);
    rep.worst_ratio = std::max(rep.worst_ratio, dV / V);
    prev = cur;
    cur = next;
  }
  return rep;
}

struct ContractionReport {
  double kappa = 0;
  double rate = 0;                 // 1 / (5 kappa^2 + 50)
  std::vector<double> times;       // checkpoint times, starting at 0
  std::vector<double> mean_ratio;  // mean S-norm^2 at t over mean at 0
  double slack = 0.1;
  double allowance = 0;            // absolute allowance for Euler error
  bool ok() const {
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (mean_ratio[i] > (1.0 + slack) * std::exp(-rate * times[i]) + allowance) return false;
    }
    return true;
  }
};

/// Synchronously coupled fine-Euler pairs of the third-order dynamics
/// (gamma = kappa, xi = 2 kappa) from distinct starts; records the mean
/// S-norm^2 of the difference at `checkpoints` equally spaced times.
inline ContractionReport contraction_test(const PotentialSpec& pot, double t_final, std::size_t substeps,
                                          std::size_t pairs, NormalStream& rng, std::size_t checkpoints = 20,
                                          double slack = 0.1, double allowance = 0.0) {
  require(pairs >= 1 && checkpoints >= 1, "contraction_test: need at least one pair and one checkpoint");
  const double kappa = pot.kappa();
  const DynamicsParams prm{kappa, 2.0 * kappa, 0.0, pot.L()};
  const double h = t_final / static_cast<double>(substeps);
  require(h * (prm.gamma + prm.xi) <= 0.1, "contraction_test: substep too coarse (need h (gamma + xi) <= 0.1)");
  const LyapunovMatrix S = s_matrix(kappa);
  ContractionReport rep;
  rep.kappa = kappa;
  rep.rate = contraction_rate(kappa);
  rep.slack = slack;
  rep.allowance = allowance;

  const auto d = pot.dim();
  const Vector center = minimize(pot, Vector::Zero(d), 1e-10).theta;
  const std::size_t per_seg = std::max<std::size_t>(1, substeps / checkpoints);
  std::vector<double> sums(checkpoints + 1, 0.0);
  rep.times.assign(checkpoints + 1, 0.0);
  for (std::size_t k = 0; k <= checkpoints; ++k) rep.times[k] = static_cast<double>(k * per_seg) * h;

  for (std::size_t i = 0; i < pairs; ++i) {
    // x near the stationary scale, y displaced by an independent draw.
    ChainState x(d), y(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      x.theta[j] = center[j] + rng() / std::sqrt(pot.m());
      x.p[j] = rng() / std::sqrt(pot.L());
      x.r[j] = rng() / std::sqrt(pot.L());
      y.theta[j] = center[j] + rng() / std::sqrt(pot.m());
      y.p[j] = rng() / std::sqrt(pot.L());
      y.r[j] = rng() / std::sqrt(pot.L());
    }
    sums[0] += s_norm(Vector(x.flat() - y.flat()), S);
    for (std::size_t k = 1; k <= checkpoints; ++k) {
      const double seg_t = static_cast<double>(per_seg) * h;
      auto [nx, ny] = coupled_fine_pair(pot, prm, std::move(x), std::move(y), seg_t, per_seg, rng);
      x = std::move(nx);
      y = std::move(ny);
      sums[k] += s_norm(Vector(x.flat() - y.flat()), S);
    }
  }
  rep.mean_ratio.resize(checkpoints + 1);
  for (std::size_t k = 0; k <= checkpoints; ++k) rep.mean_ratio[k] = sums[k] / sums[0];
  return rep;
}

struct CheckResult {
  std::string name;
  bool passed = false;
  double worst = 0.0;      // worst observed value of the checked quantity
  double threshold = 0.0;  // bound it is compared against
  std::size_t cases = 0;
};

/// Log-spaced kappa grid on [1, kappa_max].
inline std::vector<double> kappa_grid(std::size_t points, double kappa_max = 1e4) {
  std::vector<double> out;
  for (std::size_t i = 0; i < points; ++i) {
    const double f = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
    out.push_back(std::pow(kappa_max, f));
  }
  return out;
}

/// Relative mismatch of (g4^2 - g5) kappa^9 / 3 against g3, in 50-digit arithmetic.
inline double g_identity_mismatch(double kappa) {
  using F = boost::multiprecision::cpp_bin_float_50;
  const F k(kappa);
  const auto g = g_functions_as<F>(k);
  const F lhs = (g[3] * g[3] - g[4]) * boost::multiprecision::pow(k, 9) / 3;
  return static_cast<double>(boost::multiprecision::abs(lhs - g[2]) / g[2]);
}

/// Spectral inequality suite: random (kappa, l) draws with kappa log-uniform on
/// [1, 1e4] and l uniform on [1/kappa, 1], plus a log-spaced kappa grid.
inline std::vector<CheckResult> run_spectral_suite(std::uint64_t seed, std::size_t samples, std::size_t kappa_points) {
  NormalStream rng(seed, 0x6c656dULL);
  boost::random::uniform_real_distribution<double> u01(0.0, 1.0);
  CheckResult l2{"drift_max_eigenvalue", true, -1e300, -0.2 + 1e-9, samples};
  CheckResult l2c{"drift_eigenvalues_closed_form_rel_error", true, 0.0, 1e-9, samples};
  CheckResult l3lo{"s_min_eig_over_lower_bound", true, 1e300, 1.0, samples};
  CheckResult l3hi{"s_max_eig_minus_upper_bound", true, -1e300, 1e-9, samples};
  for (std::size_t i = 0; i < samples; ++i) {
    const double kappa = std::pow(1e4, u01(rng.engine()));
    const double l = 1.0 / kappa + (1.0 - 1.0 / kappa) * u01(rng.engine());
    const Mat3 D = lyapunov_derivative(kappa, l);
    const Vec3 ev = sym3_eigenvalues(D);
    l2.worst = std::max(l2.worst, ev.maxCoeff());
    const Vec3 cf = drift_eigenvalues_closed_form(kappa, l);
    const double scale = D.norm();
    l2c.worst = std::max(l2c.worst, (ev - cf).cwiseAbs().maxCoeff() / scale);
    const Vec3 es = sym3_eigenvalues(s_matrix(kappa).s);
    l3lo.worst = std::min(l3lo.worst, (es.minCoeff() + 1e-9) * 5.0 * kappa);
    l3hi.worst = std::max(l3hi.worst, es.maxCoeff() - (kappa * kappa + 10.0));
  }
  l2.passed = l2.worst <= l2.threshold;
  l2c.passed = l2c.worst <= l2c.threshold;
  l3lo.passed = l3lo.worst >= l3lo.threshold;
  l3hi.passed = l3hi.worst <= l3hi.threshold;

  const auto grid = kappa_grid(kappa_points);
  CheckResult l4a{"two_minus_sqrt_g1", true, -1e300, 0.0, grid.size()};
  CheckResult l4b{"sqrt_g1_eigenvalue_bound", true, -1e300, -0.2, grid.size()};
  CheckResult l5s{"cubic_sign_conditions", true, 0.0, 0.0, grid.size()};
  CheckResult l5r{"cubic_roots_vs_eig_s_rel", true, 0.0, 1e-8, grid.size()};
  CheckResult gid{"g4_squared_minus_g5_identity_rel", true, 0.0, 1e-9, grid.size()};
  for (double kappa : grid) {
    const auto r4 = check_lemma4(kappa);
    l4a.worst = std::max(l4a.worst, r4.first);
    l4b.worst = std::max(l4b.worst, r4.second);
    const auto r5 = check_lemma5(kappa);
    if (!(r5.f_low < 0.0 && r5.f_high > 0.0 && r5.roots_in_interval)) l5s.worst += 1.0;
    l5r.worst = std::max(l5r.worst, r5.max_rel_mismatch);
    gid.worst = std::max(gid.worst, g_identity_mismatch(kappa));
  }
  l4a.passed = l4a.worst <= l4a.threshold;
  l4b.passed = l4b.worst <= l4b.threshold;
  l5s.passed = l5s.worst == 0.0;
  l5r.passed = l5r.worst <= l5r.threshold;
  gid.passed = gid.worst <= gid.threshold;

  CheckResult flow{"flow_contraction_margin", true, -1e300, 0.0, 0};
  for (double kappa : {1.0, 3.0, 10.0}) {
    for (double l : {1.0 / kappa, 0.5 * (1.0 + 1.0 / kappa), 1.0}) {
      const Vec3 v0(1.0, -0.5, 0.25);
      const auto rep = flow_contraction_check(kappa, l, v0, 20.0, 1e-3);
      flow.worst = std::max(flow.worst, rep.worst_ratio - rep.bound - rep.tolerance);
      ++flow.cases;
    }
  }
  flow.passed = flow.worst <= 0.0;
  return {l2, l2c, l3lo, l3hi, l4a, l4b, l5s, l5r, gid, flow};
}

}  // namespace tlmc
