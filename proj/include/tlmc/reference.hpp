#pragma once

// Continuous-time oracles for the third-order dynamics
//
//   d theta = p dt
//   d p     = -(1/L) grad U(theta) dt + gamma r dt
//   d r     = -gamma p dt - xi r dt + sqrt(2 xi / L) dB
//
// an exact Gaussian transition per eigendirection of a quadratic potential,
// and fine Euler-Maruyama simulation (single and synchronously coupled).

#include "tlmc/kernel_coeffs.hpp"
#include "tlmc/model.hpp"
#include "tlmc/sampler.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <utility>

namespace tlmc {

struct LinearModeTransition {
  double lambda = 0.0;
  double t = 0.0;
  Mat3 A3 = Mat3::Zero();   // drift of (theta, p, r)
  Mat3 Phi = Mat3::Identity();
  Mat3 Q = Mat3::Zero();    // covariance added over time t
  Mat3 N = Mat3::Zero();    // diffusion diag(0, 0, 2 xi / L)

  /// diag(1/lambda, 1/L, 1/L).
  Mat3 stationary_cov(double L) const {
    return Vec3(1.0 / lambda, 1.0 / L, 1.0 / L).asDiagonal();
  }
};

inline Mat3 mode_drift(double lambda, const DynamicsParams& prm) {
  Mat3 A;
  A << 0.0, 1.0, 0.0, -lambda / prm.L, 0.0, prm.gamma, 0.0, -prm.gamma, -prm.xi;
  return A;
}

/// Phi = exp(t A3); Q = int_0^t exp(s A3) N exp(s A3)^T ds by composite
/// Gauss-Legendre, doubling the panel count until successive values agree
/// to 1e-11 (relative to max(1, |Q|)).
inline LinearModeTransition exact_transition(double lambda, const DynamicsParams& prm, double t) {
  require(lambda > 0.0, "exact_transition: lambda must be positive");
  require(t >= 0.0 && std::isfinite(t), "exact_transition: t must be non-negative");
  prm.validate();
  LinearModeTransition out;
  out.lambda = lambda;
  out.t = t;
  out.A3 = mode_drift(lambda, prm);
  out.N(2, 2) = 2.0 * prm.xi / prm.L;
  if (t == 0.0) return out;
  out.Phi = (t * out.A3).exp();

  auto integrate = [&](int panels) {
    const CompositeGauss rule(panels, 5);
    Mat3 Q = Mat3::Zero();
    rule.for_each_node(0.0, t, [&](double s, double w) {
      const Mat3 E = (s * out.A3).exp();
      Q += w * (E * out.N * E.transpose());
    });
    return Q;
  };
  int panels = std::max(4, static_cast<int>(std::ceil(t * (prm.gamma + prm.xi + 1.0))));
  Mat3 prev = integrate(panels);
  for (int iter = 0; iter < 12; ++iter) {
    panels *= 2;
    Mat3 next = integrate(panels);
    const double diff = (next - prev).cwiseAbs().maxCoeff();
    prev = next;
    if (diff <= 1e-11 * std::max(1.0, next.cwiseAbs().maxCoeff())) break;
  }
  out.Q = prev;
  return out;
}

namespace detail {

// One Euler-Maruyama substep; z holds d standard normals for the r block (or is null).
inline void euler_substep(ChainState& x, const PotentialSpec& pot, const DynamicsParams& prm, double h, const Vector* z,
                          Vector& grad) {
  gradient_into(pot, x.theta, grad);
  const Vector p0 = x.p;
  x.theta += h * p0;
  x.p += h * (-grad / prm.L + prm.gamma * x.r);
  x.r += h * (-prm.gamma * p0 - prm.xi * x.r);
  if (z) x.r += std::sqrt(2.0 * prm.xi * h / prm.L) * (*z);
}

inline void check_substeps(const DynamicsParams& prm, double t, std::size_t substeps) {
  require(t >= 0.0, "fine_euler: t must be non-negative");
  require(static_cast<double>(substeps) >= 10.0 * t * (prm.gamma + prm.xi) && substeps >= 1,
          "fine_euler: substep too coarse (need substeps >= 10 t (gamma + xi))");
}

}  // namespace detail

/// Euler-Maruyama over [0, t] with noise on the r block only.
inline ChainState fine_euler(const PotentialSpec& pot, const DynamicsParams& prm, ChainState x, double t,
                             std::size_t substeps, NoiseSource& noise) {
  prm.validate();
  detail::check_substeps(prm, t, substeps);
  require_dim(x.dim(), pot.dim(), "fine_euler state");
  const double h = t / static_cast<double>(substeps);
  Vector grad, z(pot.dim());
  for (std::size_t k = 0; k < substeps; ++k) {
    if (noise.enabled()) {
      for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = noise();
    }
    detail::euler_substep(x, pot, prm, h, noise.enabled() ? &z : nullptr, grad);
  }
  if (!x.finite()) throw DivergenceError("fine_euler: non-finite state", substeps);
  return x;
}

inline ChainState fine_euler(const PotentialSpec& pot, const DynamicsParams& prm, ChainState x, double t,
                             std::size_t substeps, NormalStream& rng) {
  auto noise = NoiseSource::gaussian(rng);
  return fine_euler(pot, prm, std::move(x), t, substeps, noise);
}

/// Both copies driven by the same Brownian increments.
inline std::pair<ChainState, ChainState> coupled_fine_pair(const PotentialSpec& pot, const DynamicsParams& prm,
                                                           ChainState x, ChainState y, double t, std::size_t substeps,
                                                           NormalStream& rng) {
  prm.validate();
  detail::check_substeps(prm, t, substeps);
  require_dim(x.dim(), pot.dim(), "coupled_fine_pair x");
  require_dim(y.dim(), pot.dim(), "coupled_fine_pair y");
  const double h = t / static_cast<double>(substeps);
  Vector grad, z(pot.dim());
  for (std::size_t k = 0; k < substeps; ++k) {
    rng.fill(z);
    detail::euler_substep(x, pot, prm, h, &z, grad);
    detail::euler_substep(y, pot, prm, h, &z, grad);
  }
  if (!x.finite() || !y.finite()) throw DivergenceError("coupled_fine_pair: non-finite state", substeps);
  return {std::move(x), std::move(y)};
}

}  // namespace tlmc
