#pragma once

// Target potentials U (negative log-densities), their gradients and the
// (m, L) strong-convexity / smoothness certificates the sampler relies on.

#include "tlmc/core.hpp"

#include <boost/random/uniform_real_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace tlmc {

/// m-strong convexity and L-smoothness constants of a potential.
struct ConvexSmoothBounds {
  double m = 1.0;
  double L = 1.0;

  ConvexSmoothBounds() = default;
  ConvexSmoothBounds(double m_, double L_) : m(m_), L(L_) {
    require(m > 0.0 && std::isfinite(m), "ConvexSmoothBounds: m must be positive");
    require(L >= m && std::isfinite(L), "ConvexSmoothBounds: L must satisfy L >= m");
  }
  double kappa() const { return L / m; }
};

/// One term u(a^T theta) of a ridge-separable potential.
struct RidgeComponent {
  std::function<double(double)> u;
  std::function<double(double)> du;
  Vector a;
};

/// U(theta) = 1/2 sum_j lambda_j (v_j^T (theta - center))^2.
struct Quadratic {
  Vector center;
  Vector eigenvalues;
  Matrix directions;  // orthonormal columns v_j
};

/// Ridge-regularized logistic regression posterior:
/// U(theta) = sum_i log(1 + exp(-y_i x_i^T theta)) + ridge/2 |theta|^2.
struct LogisticRegression {
  Matrix X;  // n x d
  Vector y;  // entries in {-1, +1}
  double ridge = 1.0;
};

/// U(theta) = sum_i u_i(a_i^T theta).
struct RidgeSeparable {
  std::vector<RidgeComponent> components;
};

/// Gradient-only access, optionally with values and an order-alpha
/// smoothness constant.
struct BlackBoxGradient {
  std::function<void(const Vector&, Vector&)> gradient;
  std::function<double(const Vector&)> value;  // may be empty
  std::optional<double> L_alpha;
};

using PotentialKind = std::variant<Quadratic, LogisticRegression, RidgeSeparable, BlackBoxGradient>;

/// An immutable potential together with its certified bounds.
class PotentialSpec {
 public:
  PotentialSpec(PotentialKind kind, ConvexSmoothBounds bounds, Eigen::Index dim)
      : kind_(std::move(kind)), bounds_(bounds), dim_(dim) {
    require(dim_ >= 1, "PotentialSpec: dimension must be positive");
  }

  const PotentialKind& kind() const { return kind_; }
  const ConvexSmoothBounds& bounds() const { return bounds_; }
  Eigen::Index dim() const { return dim_; }
  double m() const { return bounds_.m; }
  double L() const { return bounds_.L; }
  double kappa() const { return bounds_.kappa(); }

  template <class T>
  const T* as() const { return std::get_if<T>(&kind_); }

  bool has_value() const {
    if (auto* bb = as<BlackBoxGradient>()) return static_cast<bool>(bb->value);
    return true;
  }

  std::string kind_name() const {
    return std::visit(
        [](const auto& k) -> std::string {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Quadratic>) return "quadratic";
          else if constexpr (std::is_same_v<K, LogisticRegression>) return "logistic";
          else if constexpr (std::is_same_v<K, RidgeSeparable>) return "ridge_separable";
          else return "black_box";
        },
        kind_);
  }

 private:
  PotentialKind kind_;
  ConvexSmoothBounds bounds_;
  Eigen::Index dim_;
};

namespace detail {

// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Evaluation

inline double value(const PotentialSpec& pot, const Vector& theta) {
  require_dim(theta.size(), pot.dim(), "value");
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Quadratic>) {
          const Vector z = k.directions.transpose() * (theta - k.center);
          return 0.5 * (k.eigenvalues.array() * z.array().square()).sum();
        } else if constexpr (std::is_same_v<K, LogisticRegression>) {
          const Vector margins = k.X * theta;
          double acc = 0.5 * k.ridge * theta.squaredNorm();
          for (Eigen::Index i = 0; i < margins.size(); ++i) acc += detail::softplus(-k.y[i] * margins[i]);
          return acc;
        } else if constexpr (std::is_same_v<K, RidgeSeparable>) {
          double acc = 0.0;
          for (const auto& c : k.components) acc += c.u(c.a.dot(theta));
          return acc;
        } else {
          if (!k.value) throw ArgumentError("value: black-box potential has no value oracle");
          return k.value(theta);
        }
      },
      pot.kind());
}

/// Writes grad U(theta) into out (resized as needed).
inline void gradient_into(const PotentialSpec& pot, const Vector& theta, Vector& out) {
  require_dim(theta.size(), pot.dim(), "gradient");
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Quadratic>) {
          const Vector z = k.directions.transpose() * (theta - k.center);
          out.noalias() = k.directions * (k.eigenvalues.array() * z.array()).matrix();
        } else if constexpr (std::is_same_v<K, LogisticRegression>) {
          const Vector margins = k.X * theta;
          Vector w(margins.size());
          for (Eigen::Index i = 0; i < margins.size(); ++i)
            w[i] = -k.y[i] * detail::sigmoid(-k.y[i] * margins[i]);
          out.noalias() = k.X.transpose() * w;
          out += k.ridge * theta;
        } else if constexpr (std::is_same_v<K, RidgeSeparable>) {
          out.setZero(theta.size());
          for (const auto& c : k.components) out += c.du(c.a.dot(theta)) * c.a;
        } else {
          out.resize(theta.size());
          k.gradient(theta, out);
        }
      },
      pot.kind());
}

inline Vector gradient(const PotentialSpec& pot, const Vector& theta) {
  Vector g;
  gradient_into(pot, theta, g);
  return g;
}

// ---------------------------------------------------------------------------
// Construction

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
inline double power_iteration_top_eigenvalue(const Matrix& A, int max_iter = 10000, double rtol = 1e-14) {
  require(A.rows() == A.cols(), "power_iteration: matrix must be square");
  if (A.rows() == 0) return 0.0;
  Vector v = Vector::Ones(A.rows()) / std::sqrt(static_cast<double>(A.rows()));
  // Perturb so the start vector is not orthogonal to the top eigenvector by symmetry.
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += 1e-3 * static_cast<double>(i % 7);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector w = A * v;
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    const double next = v.dot(w);
    v = w / norm;
    if (it > 2 && std::abs(next - lambda) <= rtol * std::abs(next)) return next;
    lambda = next;
  }
  return lambda;
}

inline PotentialSpec make_quadratic(Vector center, Vector eigenvalues, Matrix directions) {
  const auto d = center.size();
  require(d >= 1, "make_quadratic: empty center");
  require_dim(eigenvalues.size(), d, "make_quadratic eigenvalues");
  require(directions.rows() == d && directions.cols() == d, "make_quadratic: directions must be d x d");
  require((eigenvalues.array() > 0.0).all(), "make_quadratic: eigenvalues must be positive");
  const double err = (directions.transpose() * directions - Matrix::Identity(d, d)).norm();
  require(err <= 1e-10 * static_cast<double>(d), "make_quadratic: directions are not orthonormal");
  ConvexSmoothBounds b(eigenvalues.minCoeff(), eigenvalues.maxCoeff());
  return PotentialSpec(Quadratic{std::move(center), std::move(eigenvalues), std::move(directions)}, b, d);
}

inline PotentialSpec make_diagonal_quadratic(Vector center, Vector eigenvalues) {
  const auto d = center.size();
  return make_quadratic(std::move(center), std::move(eigenvalues), Matrix::Identity(d, d));
}

/// L = ridge + |X^T X|_2 / 4, m = ridge.
inline ConvexSmoothBounds logistic_bounds(const Matrix& X, double ridge) {
  const Matrix gram = X.transpose() * X;
  // Power iteration approaches the top eigenvalue from below; the relative
  // bump keeps the certificate an upper bound.
  const double top = power_iteration_top_eigenvalue(gram) * (1.0 + 1e-9);
  return ConvexSmoothBounds(ridge, ridge + 0.25 * top);
}

inline PotentialSpec make_logistic(Matrix X, Vector y, double ridge) {
  require(X.rows() >= 1 && X.cols() >= 1, "make_logistic: empty design matrix");
  require_dim(y.size(), X.rows(), "make_logistic labels");
  require(ridge > 0.0, "make_logistic: ridge weight must be positive");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    require(y[i] == 1.0 || y[i] == -1.0, "make_logistic: labels must be -1 or +1");
  const auto b = logistic_bounds(X, ridge);
  const auto d = X.cols();
  return PotentialSpec(LogisticRegression{std::move(X), std::move(y), ridge}, b, d);
}

inline PotentialSpec make_ridge_separable(std::vector<RidgeComponent> comps, ConvexSmoothBounds bounds) {
  require(!comps.empty(), "make_ridge_separable: no components");
  const auto d = comps.front().a.size();
  for (const auto& c : comps) {
    require_dim(c.a.size(), d, "make_ridge_separable component");
    require(static_cast<bool>(c.u) && static_cast<bool>(c.du), "make_ridge_separable: u and du required");
  }
  return PotentialSpec(RidgeSeparable{std::move(comps)}, bounds, d);
}

inline PotentialSpec make_black_box(Eigen::Index dim, std::function<void(const Vector&, Vector&)> grad,
                                    ConvexSmoothBounds bounds,
                                    std::function<double(const Vector&)> value_fn = {},
                                    std::optional<double> L_alpha = std::nullopt) {
  require(static_cast<bool>(grad), "make_black_box: gradient callback required");
  return PotentialSpec(BlackBoxGradient{std::move(grad), std::move(value_fn), L_alpha}, bounds, dim);
}

/// Smooth potential that is not ridge-separable:
/// U = 1/2 sum_j lambda_j theta_j^2 + c (sqrt(1 + |theta|^2) - 1).
/// Hessian eigenvalues lie in [min lambda, max lambda + c].
inline PotentialSpec make_softened_radial(const Vector& lambdas, double c) {
  require((lambdas.array() > 0.0).all(), "make_softened_radial: lambdas must be positive");
  require(c >= 0.0, "make_softened_radial: c must be non-negative");
  auto grad = [lambdas, c](const Vector& th, Vector& out) {
    const double s = std::sqrt(1.0 + th.squaredNorm());
    out = lambdas.cwiseProduct(th) + (c / s) * th;
  };
  auto val = [lambdas, c](const Vector& th) {
    return 0.5 * (lambdas.array() * th.array().square()).sum() + c * (std::sqrt(1.0 + th.squaredNorm()) - 1.0);
  };
  ConvexSmoothBounds b(lambdas.minCoeff(), lambdas.maxCoeff() + c);
  return make_black_box(lambdas.size(), grad, b, val);
}

/// Logistic loss terms on the rows of X plus one ridge term per coordinate.
inline std::vector<RidgeComponent> ridge_components(const LogisticRegression& lr) {
  std::vector<RidgeComponent> comps;
  const auto d = lr.X.cols();
  comps.reserve(static_cast<std::size_t>(lr.X.rows() + d));
  for (Eigen::Index i = 0; i < lr.X.rows(); ++i) {
    const double yi = lr.y[i];
    comps.push_back({[yi](double t) { return detail::softplus(-yi * t); },
                     [yi](double t) { return -yi * detail::sigmoid(-yi * t); }, lr.X.row(i).transpose()});
  }
  const double lam = lr.ridge;
  for (Eigen::Index j = 0; j < d; ++j) {
    comps.push_back({[lam](double t) { return 0.5 * lam * t * t; }, [lam](double t) { return lam * t; },
                     Vector::Unit(d, j)});
  }
  return comps;
}

/// Quadratic as ridge terms u_j(t) = lambda_j/2 (t - v_j^T center)^2 along v_j.
inline std::vector<RidgeComponent> ridge_components(const Quadratic& q) {
  std::vector<RidgeComponent> comps;
  for (Eigen::Index j = 0; j < q.eigenvalues.size(); ++j) {
    const double lam = q.eigenvalues[j];
    const Vector v = q.directions.col(j);
    const double c = v.dot(q.center);
    comps.push_back({[lam, c](double t) { return 0.5 * lam * (t - c) * (t - c); },
                     [lam, c](double t) { return lam * (t - c); }, v});
  }
  return comps;
}

/// Ridge-separable re-encoding of a logistic or quadratic potential.
inline PotentialSpec to_ridge_separable(const PotentialSpec& pot) {
  if (pot.as<RidgeSeparable>()) return pot;
  if (auto* lr = pot.as<LogisticRegression>()) return make_ridge_separable(ridge_components(*lr), pot.bounds());
  if (auto* q = pot.as<Quadratic>()) return make_ridge_separable(ridge_components(*q), pot.bounds());
  throw ArgumentError("to_ridge_separable: black-box potentials have no ridge form");
}

/// Reads "y,x1,...,xd" rows; an optional non-numeric header line is skipped.
inline std::pair<Matrix, Vector> read_logistic_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("read_logistic_csv: cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw ArgumentError("read_logistic_csv: non-numeric cell in " + path);
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size())
      throw ArgumentError("read_logistic_csv: ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), "read_logistic_csv: no data rows in " + path);
  require(rows.front().size() >= 2, "read_logistic_csv: need a label and at least one feature");
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size()) - 1;
  Matrix X(n, d);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    y[i] = r[0];
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = r[static_cast<std::size_t>(j + 1)];
  }
  return {std::move(X), std::move(y)};
}

// ---------------------------------------------------------------------------
// Certificate checks

struct SandwichViolation {
  std::size_t probe = 0;
  double gap = 0.0;    // U(t') - U(t) - <grad U(t), t' - t>
  double lower = 0.0;  // m/2 |t' - t|^2
  double upper = 0.0;  // L/2 |t' - t|^2
};

struct SandwichReport {
  std::size_t probes = 0;
  std::vector<SandwichViolation> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks (m/2)|d|^2 <= U(t') - U(t) - <grad U(t), d> <= (L/2)|d|^2 on every probe.
/// A relative slack of rtol absorbs rounding in the value differences.
inline SandwichReport sandwich_check(const PotentialSpec& pot, const std::vector<std::pair<Vector, Vector>>& probes,
                                     double rtol = 1e-9) {
  SandwichReport rep;
  rep.probes = probes.size();
  Vector g;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& [a, b] = probes[i];
    const Vector diff = b - a;
    gradient_into(pot, a, g);
    const double ua = value(pot, a);
    const double gap = value(pot, b) - ua - g.dot(diff);
    const double sq = diff.squaredNorm();
    const double lo = 0.5 * pot.m() * sq;
    const double hi = 0.5 * pot.L() * sq;
    const double slack = rtol * (std::abs(ua) + hi + 1e-300);
    if (gap < lo - slack || gap > hi + slack) rep.violations.push_back({i, gap, lo, hi});
  }
  return rep;
}

/// Uniform random probe pairs in the ball of the given radius around center
/// (default radius 10/sqrt(m)).
template <class Rng>
std::vector<std::pair<Vector, Vector>> ball_probes(const PotentialSpec& pot, const Vector& center, std::size_t count,
                                                   Rng& rng, std::optional<double> radius = std::nullopt) {
  const double R = radius.value_or(10.0 / std::sqrt(pot.m()));
  const auto d = pot.dim();
  boost::random::normal_distribution<double> normal;
  boost::random::uniform_real_distribution<double> unif(0.0, 1.0);
  auto draw = [&] {
    Vector v(d);
    for (Eigen::Index i = 0; i < d; ++i) v[i] = normal(rng);
    const double r = R * std::pow(unif(rng), 1.0 / static_cast<double>(d));
    return Vector(center + r * v / v.norm());
  };
  std::vector<std::pair<Vector, Vector>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vector a = draw();
    Vector b = draw();
    out.emplace_back(std::move(a), std::move(b));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Minimization

struct Minimum {
  Vector theta;
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  std::size_t gradient_evals = 0;
};

/// Nesterov's accelerated gradient for strongly convex U with gradient-based
/// adaptive restart. Stops once |grad U| <= m * tol, which guarantees
/// |theta - theta*| <= tol. tol defaults to 1/L.
inline Minimum minimize(const PotentialSpec& pot, const Vector& theta0, std::optional<double> tol = std::nullopt,
                        std::size_t max_iter = 200000) {
  require_dim(theta0.size(), pot.dim(), "minimize");
  const double t = tol.value_or(1.0 / pot.L());
  require(t > 0.0 && std::isfinite(t), "minimize: tol must be positive");
  const double target = pot.m() * t;
  const double sk = std::sqrt(pot.kappa());
  const double beta = (sk - 1.0) / (sk + 1.0);
  const double step = 1.0 / pot.L();

  Minimum res;
  Vector x = theta0;
  Vector y = theta0;
  Vector g;
  for (std::size_t it = 0; it < max_iter; ++it) {
    gradient_into(pot, y, g);
    ++res.gradient_evals;
    const double gn = g.norm();
    if (!std::isfinite(gn)) throw ConvergenceError("minimize: non-finite gradient", y, gn);
    if (gn <= target) {
      res.theta = y;
      res.grad_norm = gn;
      res.iterations = it;
      return res;
    }
    Vector x_next = y - step * g;
    if (g.dot(x_next - x) > 0.0) {
      y = x_next;  // restart: drop momentum
    } else {
      y = x_next + beta * (x_next - x);
    }
    x = std::move(x_next);
  }
  gradient_into(pot, y, g);
  throw ConvergenceError("minimize: iteration cap exceeded", y, g.norm());
}

}  // namespace tlmc
