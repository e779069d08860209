#pragma once

// Delta = (1/L) int_0^eta grad U(theta + t p) dt, the only nonlinear input of
// the transition kernel. Two providers: the exact Newton-Leibniz form for
// ridge-separable potentials and a Chebyshev-node interpolatory quadrature for
// gradient-only potentials.

#include "tlmc/model.hpp"

#include <cmath>
#include <numbers>
#include <variant>
#include <vector>

namespace tlmc {

struct LineSegment {
  Vector theta;
  Vector p;
  double eta = 0.0;
};

/// Interpolatory rule on [0, eta] built from alpha Chebyshev nodes.
struct ChebyshevPlan {
  int alpha = 0;
  double eta = 0.0;
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline constexpr int kMinChebyshevNodes = 2;
inline constexpr int kMaxChebyshevNodes = 12;

/// Nodes s_i = (eta/2)(1 + cos((2i-1) pi / (2 alpha))); weights are the exact
/// integrals of the Lagrange basis polynomials over [0, eta].
inline ChebyshevPlan build_chebyshev_plan(int alpha, double eta) {
  require(alpha >= kMinChebyshevNodes && alpha <= kMaxChebyshevNodes,
          "build_chebyshev_plan: alpha must be in [2, 12]");
  require(eta > 0.0 && std::isfinite(eta), "build_chebyshev_plan: eta must be positive");
  ChebyshevPlan plan;
  plan.alpha = alpha;
  plan.eta = eta;

  // Work on [-1, 1]; the map t = (eta/2)(1 + x) scales weights by eta/2.
  std::vector<long double> x(static_cast<std::size_t>(alpha));
  for (int i = 0; i < alpha; ++i) {
    x[static_cast<std::size_t>(i)] =
        std::cos(static_cast<long double>(2 * i + 1) * std::numbers::pi_v<long double> / (2.0L * alpha));
  }
  for (int i = 0; i < alpha; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    // Barycentric scale 1 / prod_{j != i} (x_i - x_j), then expand prod_{j != i} (x - x_j).
    long double denom = 1.0L;
    std::vector<long double> poly{1.0L};  // ascending monomial coefficients
    for (int j = 0; j < alpha; ++j) {
      if (j == i) continue;
      const auto uj = static_cast<std::size_t>(j);
      denom *= x[ui] - x[uj];
      std::vector<long double> next(poly.size() + 1, 0.0L);
      for (std::size_t k = 0; k < poly.size(); ++k) {
        next[k + 1] += poly[k];
        next[k] -= x[uj] * poly[k];
      }
      poly = std::move(next);
    }
    long double integral = 0.0L;  // odd powers integrate to zero on [-1, 1]
    for (std::size_t k = 0; k < poly.size(); k += 2) integral += poly[k] * 2.0L / static_cast<long double>(k + 1);
    plan.nodes.push_back(static_cast<double>(0.5L * eta * (1.0L + x[ui])));
    plan.weights.push_back(static_cast<double>(0.5L * eta * integral / denom));
  }
  return plan;
}

/// Sup-norm bound on the interpolation error at alpha Chebyshev nodes over an
/// interval of length eta: eta^alpha sup|f^(alpha)| / (2^(alpha-1) alpha!).
inline double interpolation_error_bound(int alpha, double eta, double sup_deriv) {
  require(alpha >= 1, "interpolation_error_bound: alpha must be positive");
  require(eta > 0.0 && sup_deriv >= 0.0, "interpolation_error_bound: eta must be positive, sup non-negative");
  double fact = 1.0;
  for (int k = 2; k <= alpha; ++k) fact *= k;
  return std::pow(eta, alpha) * sup_deriv / (std::ldexp(1.0, alpha - 1) * fact);
}

namespace detail {

inline bool ridge_degenerate(double s0, double v, double eta) {
  return std::abs(v) * eta < 1e-7 * (1.0 + std::abs(s0));
}

// int_0^eta u'(s0 + t v) dt for one ridge term.
template <class U, class DU>
double ridge_line_integral(const U& u, const DU& du, double s0, double v, double eta) {
  if (ridge_degenerate(s0, v, eta)) return eta * du(s0 + 0.5 * eta * v);
  return (u(s0 + eta * v) - u(s0)) / v;
}

}  // namespace detail

/// Exact Delta for potentials with a ridge form (ridge-separable, logistic,
/// quadratic). Writes into out.
inline void delta_u_ridge_into(const PotentialSpec& pot, const LineSegment& seg, Vector& out) {
  require_dim(seg.theta.size(), pot.dim(), "delta_u_ridge theta");
  require_dim(seg.p.size(), pot.dim(), "delta_u_ridge p");
  require(seg.eta >= 0.0, "delta_u_ridge: eta must be non-negative");
  const double eta = seg.eta;
  const double invL = 1.0 / pot.L();
  out.setZero(pot.dim());
  if (auto* q = pot.as<Quadratic>()) {
    // Linear gradient: int_0^eta A(theta + t p - c) dt = A(eta (theta - c) + eta^2/2 p).
    const Vector z = q->directions.transpose() * (eta * (seg.theta - q->center) + 0.5 * eta * eta * seg.p);
    out.noalias() = q->directions * (q->eigenvalues.array() * z.array()).matrix();
    out *= invL;
  } else if (auto* lr = pot.as<LogisticRegression>()) {
    const Vector s0 = lr->X * seg.theta;
    const Vector v = lr->X * seg.p;
    Vector w(s0.size());
    for (Eigen::Index i = 0; i < s0.size(); ++i) {
      const double yi = lr->y[i];
      w[i] = detail::ridge_line_integral([yi](double t) { return detail::softplus(-yi * t); },
                                         [yi](double t) { return -yi * detail::sigmoid(-yi * t); }, s0[i], v[i], eta);
    }
    out.noalias() = lr->X.transpose() * w;
    out += lr->ridge * (eta * seg.theta + 0.5 * eta * eta * seg.p);
    out *= invL;
  } else if (auto* rs = pot.as<RidgeSeparable>()) {
    for (const auto& c : rs->components) {
      const double s0 = c.a.dot(seg.theta);
      const double v = c.a.dot(seg.p);
      out += detail::ridge_line_integral(c.u, c.du, s0, v, eta) * c.a;
    }
    out *= invL;
  } else {
    throw ArgumentError("delta_u_ridge: potential has no ridge-separable form");
  }
}

inline Vector delta_u_ridge(const PotentialSpec& pot, const LineSegment& seg) {
  Vector out;
  delta_u_ridge_into(pot, seg, out);
  return out;
}

/// (1/L) sum_i w_i grad U(theta + s_i p); exactly alpha gradient evaluations.
inline void delta_u_chebyshev_into(const PotentialSpec& pot, const LineSegment& seg, const ChebyshevPlan& plan,
                                   Vector& out, Vector& point, Vector& grad) {
  require(plan.eta == seg.eta, "delta_u_chebyshev: plan was built for a different step size");
  require_dim(seg.theta.size(), pot.dim(), "delta_u_chebyshev theta");
  require_dim(seg.p.size(), pot.dim(), "delta_u_chebyshev p");
  out.setZero(pot.dim());
  for (std::size_t i = 0; i < plan.nodes.size(); ++i) {
    point = seg.theta + plan.nodes[i] * seg.p;
    gradient_into(pot, point, grad);
    out += plan.weights[i] * grad;
  }
  out /= pot.L();
}

inline Vector delta_u_chebyshev(const PotentialSpec& pot, const LineSegment& seg, const ChebyshevPlan& plan) {
  Vector out, point, grad;
  delta_u_chebyshev_into(pot, seg, plan, out, point, grad);
  return out;
}

enum class DeltaUMode { exact, chebyshev };

/// Strategy object bound to one potential and step size.
class DeltaUProvider {
 public:
  /// Scratch buffers for one chain; not shared between threads.
  struct Workspace {
    Vector point, grad;
    LineSegment seg;
  };

  static DeltaUProvider exact(PotentialSpec pot, double eta) {
    require(pot.as<BlackBoxGradient>() == nullptr, "DeltaUProvider: exact mode needs a ridge-separable potential");
    return DeltaUProvider(std::move(pot), eta, DeltaUMode::exact, ChebyshevPlan{});
  }

  static DeltaUProvider chebyshev(PotentialSpec pot, double eta, int alpha) {
    auto plan = build_chebyshev_plan(alpha, eta);
    return DeltaUProvider(std::move(pot), eta, DeltaUMode::chebyshev, std::move(plan));
  }

  DeltaUMode mode() const { return mode_; }
  double eta() const { return eta_; }
  const PotentialSpec& potential() const { return pot_; }
  const ChebyshevPlan& plan() const { return plan_; }

  /// Gradient evaluations charged per call (one ridge pass counts as one).
  std::size_t evals_per_call() const { return mode_ == DeltaUMode::exact ? 1 : plan_.nodes.size(); }

  void operator()(const Vector& theta, const Vector& p, Vector& out, Workspace& ws) const {
    ws.seg.theta = theta;
    ws.seg.p = p;
    ws.seg.eta = eta_;
    if (mode_ == DeltaUMode::exact) {
      delta_u_ridge_into(pot_, ws.seg, out);
    } else {
      delta_u_chebyshev_into(pot_, ws.seg, plan_, out, ws.point, ws.grad);
    }
  }

  Vector operator()(const Vector& theta, const Vector& p) const {
    Workspace ws;
    Vector out;
    (*this)(theta, p, out, ws);
    return out;
  }

 private:
  DeltaUProvider(PotentialSpec pot, double eta, DeltaUMode mode, ChebyshevPlan plan)
      : pot_(std::move(pot)), eta_(eta), mode_(mode), plan_(std::move(plan)) {
    require(eta_ >= 0.0 && std::isfinite(eta_), "DeltaUProvider: eta must be non-negative");
  }

  PotentialSpec pot_;
  double eta_;
  DeltaUMode mode_;
  ChebyshevPlan plan_;
};

}  // namespace tlmc
