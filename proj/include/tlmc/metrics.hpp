#pragma once

// Wasserstein-2 estimates, mixing curves, and the exact Gaussian law of a
// chain whose step is affine (any of the samplers on a quadratic target).

#include "tlmc/sampler.hpp"

#include <boost/random/normal_distribution.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <mutex>
#include <thread>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

namespace tlmc {

struct GaussianSummary {
  Vector mean;
  Matrix cov;

  Eigen::Index dim() const { return mean.size(); }

  void validate() const {
    require(cov.rows() == mean.size() && cov.cols() == mean.size(), "GaussianSummary: cov must be d x d");
    const double asym = (cov - cov.transpose()).cwiseAbs().maxCoeff();
    require(asym <= 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff()), "GaussianSummary: cov must be symmetric");
  }

  /// Sample mean and (n-1)-normalized covariance of the rows of X.
  static GaussianSummary from_samples(const Matrix& X) {
    require(X.rows() >= 2, "GaussianSummary::from_samples: need at least two samples");
    GaussianSummary g;
    g.mean = X.colwise().mean().transpose();
    const Matrix C = X.rowwise() - g.mean.transpose();
    g.cov = (C.transpose() * C) / static_cast<double>(X.rows() - 1);
    return g;
  }
};

/// N(center, A^-1) for a quadratic potential.
inline GaussianSummary quadratic_target(const PotentialSpec& pot) {
  const auto* q = pot.as<Quadratic>();
  require(q != nullptr, "quadratic_target: potential must be quadratic");
  GaussianSummary g;
  g.mean = q->center;
  g.cov = q->directions * q->eigenvalues.cwiseInverse().asDiagonal() * q->directions.transpose();
  return g;
}

/// Stationary law of the full (theta, p, r) state: target x N(0, I/L) x N(0, I/L).
inline GaussianSummary quadratic_joint_target(const PotentialSpec& pot) {
  const auto t = quadratic_target(pot);
  const auto d = t.dim();
  GaussianSummary g;
  g.mean = Vector::Zero(3 * d);
  g.mean.head(d) = t.mean;
  g.cov = Matrix::Zero(3 * d, 3 * d);
  g.cov.topLeftCorner(d, d) = t.cov;
  g.cov.bottomRightCorner(2 * d, 2 * d) = Matrix::Identity(2 * d, 2 * d) / pot.L();
  return g;
}

namespace detail {

// Symmetric PSD square root; rejects eigenvalues below -1e-10 trace.
inline Matrix psd_sqrt(const Matrix& A, const char* what) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (A + A.transpose()));
  const Vector ev = es.eigenvalues();
  const double tr = std::max(A.trace(), 0.0);
  if (ev.size() > 0 && ev.minCoeff() < -1e-10 * std::max(tr, 1e-300)) {
    throw ArgumentError(std::string(what) + ": covariance is indefinite");
  }
  return es.eigenvectors() * ev.cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Bures-Wasserstein distance between two Gaussians.
inline double w2_gaussian(const GaussianSummary& a, const GaussianSummary& b) {
  require_dim(a.dim(), b.dim(), "w2_gaussian");
  a.validate();
  b.validate();
  const Matrix ra = detail::psd_sqrt(a.cov, "w2_gaussian");
  detail::psd_sqrt(b.cov, "w2_gaussian");
  const Matrix mid = detail::psd_sqrt(ra * b.cov * ra, "w2_gaussian");
  const double sq = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * mid.trace();
  return std::sqrt(std::max(sq, 0.0));
}

/// Exact W2 between two 1-D empirical measures (sorted-quantile coupling).
inline double w2_empirical_1d(std::vector<double> x, std::vector<double> y) {
  require(!x.empty() && !y.empty(), "w2_empirical_1d: empty sample set");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
  // Walk the merged quantile breakpoints i/n and j/m.
  std::size_t i = 0, j = 0;
  double u = 0.0, acc = 0.0;
  while (i < x.size() && j < y.size()) {
    const double next = std::min(static_cast<double>(i + 1) / n, static_cast<double>(j + 1) / m);
    const double diff = x[i] - y[j];
    acc += (next - u) * diff * diff;
    u = next;
    if (static_cast<double>(i + 1) / n <= next) ++i;
    if (static_cast<double>(j + 1) / m <= next) ++j;
  }
  return std::sqrt(acc);
}

/// Root of the mean squared 1-D W2 over random unit projections.
template <class Rng>
double sliced_w2(const Matrix& xs, const Matrix& ys, std::size_t projections, Rng& rng) {
  require(xs.rows() >= 1 && ys.rows() >= 1, "sliced_w2: sample sets must be non-empty");
  require_dim(xs.cols(), ys.cols(), "sliced_w2");
  require(projections >= 1, "sliced_w2: need at least one projection");
  const auto d = xs.cols();
  boost::random::normal_distribution<double> normal;
  double acc = 0.0;
  for (std::size_t k = 0; k < projections; ++k) {
    Vector dir(d);
    if (d == 1) {
      dir[0] = 1.0;
    } else {
      for (Eigen::Index i = 0; i < d; ++i) dir[i] = normal(rng);
      dir.normalize();
    }
    const Vector px = xs * dir, py = ys * dir;
    const double w = w2_empirical_1d(std::vector<double>(px.data(), px.data() + px.size()),
                                     std::vector<double>(py.data(), py.data() + py.size()));
    acc += w * w;
  }
  return std::sqrt(acc / static_cast<double>(projections));
}

struct MixingPoint {
  std::uint64_t step = 0;
  double w2 = 0.0;
  double stderr_ = 0.0;
};

struct MixingCurve {
  std::vector<MixingPoint> points;
};

enum class StateView { theta, full };

namespace detail {

inline Vector snapshot_vector(const Snapshot& s, StateView view) {
  if (view == StateView::theta) return s.state.theta;
  require(s.state.p.size() == s.state.theta.size(), "mixing_curve: full-state view needs recorded p and r");
  return s.state.flat();
}

}  // namespace detail

/// W2 between the across-chain law at each recorded step and the target.
/// One draw per chain per step; the standard error is a 16-group jackknife.
/// Every stride-th recorded step is evaluated.
inline MixingCurve mixing_curve(const std::vector<RunReport>& runs, const GaussianSummary& target,
                                std::size_t stride = 1, StateView view = StateView::theta) {
  require(stride >= 1, "mixing_curve: stride must be >= 1");
  const std::size_t chains = runs.size();
  const auto d = target.dim();
  require(chains >= static_cast<std::size_t>(d) + 2,
          "mixing_curve: too few chains to estimate a covariance (need at least d + 2)");
  const std::size_t records = runs.front().samples.size();
  for (const auto& r : runs) require(r.samples.size() == records, "mixing_curve: runs recorded different steps");

  constexpr std::size_t kGroups = 16;
  const std::size_t groups = std::min(kGroups, chains);
  MixingCurve curve;
  for (std::size_t k = 0; k < records; k += stride) {
    Matrix X(static_cast<Eigen::Index>(chains), d);
    for (std::size_t c = 0; c < chains; ++c) {
      const Vector v = detail::snapshot_vector(runs[c].samples[k], view);
      require_dim(v.size(), d, "mixing_curve sample");
      X.row(static_cast<Eigen::Index>(c)) = v.transpose();
    }
    auto w2_of = [&](const Matrix& rows) {
      const auto g = GaussianSummary::from_samples(rows);
      return w2_gaussian(g, target);
    };
    const double full = w2_of(X);
    double se = 0.0;
    if (chains >= groups * 2 && chains - chains / groups > static_cast<std::size_t>(d) + 1) {
      std::vector<double> jk(groups);
      for (std::size_t g = 0; g < groups; ++g) {
        std::vector<Eigen::Index> keep;
        for (std::size_t c = 0; c < chains; ++c)
          if (c % groups != g) keep.push_back(static_cast<Eigen::Index>(c));
        Matrix Y(static_cast<Eigen::Index>(keep.size()), d);
        for (std::size_t i = 0; i < keep.size(); ++i) Y.row(static_cast<Eigen::Index>(i)) = X.row(keep[i]);
        jk[g] = w2_of(Y);
      }
      const double mean = std::accumulate(jk.begin(), jk.end(), 0.0) / static_cast<double>(groups);
      double ss = 0.0;
      for (double v : jk) ss += (v - mean) * (v - mean);
      se = std::sqrt(ss * static_cast<double>(groups - 1) / static_cast<double>(groups));
    }
    curve.points.push_back({runs.front().samples[k].step, full, se});
  }
  return curve;
}

/// First recorded step with W2 <= eps.
inline std::optional<std::uint64_t> mixing_time(const MixingCurve& curve, double eps) {
  require(eps > 0.0, "mixing_time: eps must be positive");
  for (const auto& p : curve.points)
    if (p.w2 <= eps) return p.step;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Exact law of an affine chain

/// x' = A x + b + B z with z standard normal.
struct AffineChain {
  Matrix A;
  Vector b;
  Matrix B;
  int blocks = 3;  // 3 for (theta, p, r), 2 for (theta, r), 1 for theta
};

inline int state_blocks(Algorithm a) {
  switch (a) {
    case Algorithm::third_order: return 3;
    case Algorithm::underdamped: return 2;
    case Algorithm::ula: return 1;
  }
  return 3;
}

namespace detail {

inline ChainState unpack_state(const Vector& v, Eigen::Index d, int blocks) {
  ChainState x(d);
  x.theta = v.head(d);
  if (blocks == 3) {
    x.p = v.segment(d, d);
    x.r = v.tail(d);
  } else if (blocks == 2) {
    x.r = v.tail(d);
  }
  return x;
}

inline Vector pack_state(const ChainState& x, int blocks) {
  const auto d = x.dim();
  Vector v(blocks * d);
  v.head(d) = x.theta;
  if (blocks == 3) {
    v.segment(d, d) = x.p;
    v.tail(d) = x.r;
  } else if (blocks == 2) {
    v.tail(d) = x.r;
  }
  return v;
}

}  // namespace detail

/// Recovers (A, b, B) of the configured sampler by evaluating its step on
/// basis states and basis noise vectors. Exact when the step is affine,
/// which holds for every algorithm here on a quadratic potential.
inline AffineChain probe_affine_step(const SamplerConfig& cfg) {
  require(cfg.potential.as<Quadratic>() != nullptr, "probe_affine_step: potential must be quadratic");
  const ChainKernel kernel = make_chain_kernel(cfg);
  const auto d = cfg.potential.dim();
  const int blocks = state_blocks(cfg.algorithm);
  const Eigen::Index n = blocks * d;
  const Eigen::Index draws = blocks * d;  // normals per step: 3d, 2d or d

  StepWorkspace ws;
  Vector grad;
  auto apply = [&](const Vector& state, const Vector* z) {
    ChainState x = detail::unpack_state(state, d, blocks);
    NoiseSource noise = z ? NoiseSource::replay(*z) : NoiseSource::none();
    switch (cfg.algorithm) {
      case Algorithm::third_order: step(x, *kernel.coeffs, *kernel.delta_u, noise, ws); break;
      case Algorithm::underdamped: underdamped_step(x, cfg.potential, kernel.underdamped, noise, grad); break;
      case Algorithm::ula: ula_step(x, cfg.potential, cfg.params.eta, noise, grad); break;
    }
    return detail::pack_state(x, blocks);
  };

  AffineChain ch;
  ch.blocks = blocks;
  const Vector zero_state = Vector::Zero(n);
  const Vector zero_noise = Vector::Zero(draws);
  ch.b = apply(zero_state, &zero_noise);
  ch.A.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) ch.A.col(i) = apply(Vector::Unit(n, i), &zero_noise) - ch.b;
  ch.B.resize(n, draws);
  for (Eigen::Index k = 0; k < draws; ++k) {
    const Vector z = Vector::Unit(draws, k);
    ch.B.col(k) = apply(zero_state, &z) - ch.b;
  }
  return ch;
}

/// Law after k steps from a Gaussian start.
inline GaussianSummary propagate_law(const AffineChain& ch, GaussianSummary law, std::uint64_t k) {
  const Matrix BBt = ch.B * ch.B.transpose();
  for (std::uint64_t i = 0; i < k; ++i) {
    law.mean = ch.A * law.mean + ch.b;
    law.cov = ch.A * law.cov * ch.A.transpose() + BBt;
    law.cov = 0.5 * (law.cov + law.cov.transpose());
  }
  return law;
}

/// Stationary Gaussian law: mean solves (I - A) m = b, covariance
/// sum_k A^k B B^T (A^k)^T accumulated by repeated doubling.
inline GaussianSummary stationary_law(const AffineChain& ch, int max_doublings = 80) {
  const auto n = ch.A.rows();
  const Eigen::ComplexEigenSolver<Matrix> ces(ch.A, false);
  const double rho = ces.eigenvalues().cwiseAbs().maxCoeff();
  if (!(rho < 1.0)) throw NumericalError("stationary_law: chain is not contracting (spectral radius " +
                                         std::to_string(rho) + ")");
  GaussianSummary law;
  law.mean = (Matrix::Identity(n, n) - ch.A).partialPivLu().solve(ch.b);
  Matrix S = ch.B * ch.B.transpose();
  Matrix Ak = ch.A;
  for (int it = 0; it < max_doublings; ++it) {
    const Matrix inc = Ak * S * Ak.transpose();
    S += inc;
    Ak = Ak * Ak;
    if (Ak.cwiseAbs().maxCoeff() < 1e-18 && inc.cwiseAbs().maxCoeff() <= 1e-17 * S.cwiseAbs().maxCoeff()) break;
  }
  law.cov = 0.5 * (S + S.transpose());
  return law;
}

/// First d coordinates of a joint law.
inline GaussianSummary theta_marginal(const GaussianSummary& joint, Eigen::Index d) {
  return GaussianSummary{joint.mean.head(d), joint.cov.topLeftCorner(d, d)};
}

/// Target law in the layout of the algorithm's own state: theta for ULA,
/// (theta, r) for the underdamped chain, (theta, p, r) for the third-order chain.
inline GaussianSummary quadratic_state_target(const PotentialSpec& pot, int blocks) {
  const auto t = quadratic_target(pot);
  const auto d = t.dim();
  GaussianSummary g;
  g.mean = Vector::Zero(blocks * d);
  g.mean.head(d) = t.mean;
  g.cov = Matrix::Zero(blocks * d, blocks * d);
  g.cov.topLeftCorner(d, d) = t.cov;
  if (blocks > 1) {
    g.cov.bottomRightCorner((blocks - 1) * d, (blocks - 1) * d) =
        Matrix::Identity((blocks - 1) * d, (blocks - 1) * d) / pot.L();
  }
  return g;
}

struct StationaryBias {
  double state_w2 = 0.0;  // over the algorithm's full state
  double theta_w2 = 0.0;  // theta marginal only
};

/// Exact W2 between the chain's stationary law and the target, for a
/// quadratic potential.
inline StationaryBias stationary_bias(const SamplerConfig& cfg) {
  const AffineChain ch = probe_affine_step(cfg);
  const GaussianSummary law = stationary_law(ch);
  const auto d = cfg.potential.dim();
  StationaryBias out;
  out.state_w2 = w2_gaussian(law, quadratic_state_target(cfg.potential, ch.blocks));
  out.theta_w2 = w2_gaussian(theta_marginal(law, d), quadratic_target(cfg.potential));
  return out;
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "loglog_slope: need two or more matching points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(x[i] > 0.0 && y[i] > 0.0, "loglog_slope: values must be positive");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

struct MomentumBias {
  double bias = 0.0;    // L E|v|^2 / d - 1
  double stderr_ = 0.0; // across chains
  std::uint64_t samples = 0;
};

/// Time-averaged L |v|^2 / d - 1 after burn_in steps, where v is the block
/// whose stationary law is exactly N(0, I/L) under the continuous dynamics
/// for any potential: p for the third-order scheme, the velocity for the
/// underdamped one. Chains start at cfg.theta0's minimizer with v = 0.
inline MomentumBias momentum_bias(const SamplerConfig& cfg, std::uint64_t burn_in) {
  require(cfg.algorithm != Algorithm::ula, "momentum_bias: ULA has no momentum block");
  require(cfg.chains >= 2, "momentum_bias: need at least two chains for a standard error");
  require(cfg.steps >= 1, "momentum_bias: need at least one averaging step");
  const ChainState start = init_state(cfg.potential, cfg.theta0);
  const ChainKernel kernel = make_chain_kernel(cfg);
  const double L = cfg.potential.L();
  const double d = static_cast<double>(cfg.potential.dim());
  std::vector<double> means(cfg.chains, 0.0);

  auto run_one = [&](std::size_t c) {
    NormalStream rng(cfg.seed, c);
    auto noise = NoiseSource::gaussian(rng);
    ChainState x = start;
    StepWorkspace ws;
    Vector grad;
    double acc = 0.0;
    for (std::uint64_t k = 1; k <= burn_in + cfg.steps; ++k) {
      if (cfg.algorithm == Algorithm::third_order) {
        step(x, *kernel.coeffs, *kernel.delta_u, noise, ws);
      } else {
        underdamped_step(x, cfg.potential, kernel.underdamped, noise, grad);
      }
      if (k > burn_in) acc += (cfg.algorithm == Algorithm::third_order ? x.p : x.r).squaredNorm();
      if (!std::isfinite(acc) || !x.finite()) throw DivergenceError("momentum_bias: non-finite state", k);
    }
    means[c] = L * acc / (d * static_cast<double>(cfg.steps)) - 1.0;
  };

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= cfg.chains) return;
      try {
        run_one(c);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!first_error) first_error = std::current_exception();
        next.store(cfg.chains);
        return;
      }
    }
  };
  const std::size_t nthreads = std::max<std::size_t>(1, std::min(cfg.threads, cfg.chains));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < nthreads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  MomentumBias out;
  const double n = static_cast<double>(cfg.chains);
  out.bias = std::accumulate(means.begin(), means.end(), 0.0) / n;
  double ss = 0.0;
  for (double m : means) ss += (m - out.bias) * (m - out.bias);
  out.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  out.samples = cfg.steps * cfg.chains;
  return out;
}

}  // namespace tlmc
