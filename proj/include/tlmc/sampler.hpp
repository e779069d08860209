#pragma once

// The discretized third-order Langevin chain, its first- and second-order
// baselines, and a multi-chain runner.

#include "tlmc/delta_u.hpp"
#include "tlmc/kernel_coeffs.hpp"
#include "tlmc/model.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace tlmc {

/// x = (theta, p, r). The underdamped baseline keeps its velocity in r and
/// leaves p at zero; ULA uses theta only.
struct ChainState {
  Vector theta;
  Vector p;
  Vector r;

  ChainState() = default;
  explicit ChainState(Eigen::Index d) : theta(Vector::Zero(d)), p(Vector::Zero(d)), r(Vector::Zero(d)) {}
  ChainState(Vector th, Vector p_, Vector r_) : theta(std::move(th)), p(std::move(p_)), r(std::move(r_)) {
    require(p.size() == theta.size() && r.size() == theta.size(), "ChainState: blocks must share dimension");
  }

  Eigen::Index dim() const { return theta.size(); }
  bool finite() const { return theta.allFinite() && p.allFinite() && r.allFinite(); }

  /// Blocks concatenated as (theta, p, r).
  Vector flat() const {
    Vector out(3 * dim());
    out << theta, p, r;
    return out;
  }
  static ChainState from_flat(const Vector& x) {
    require(x.size() % 3 == 0, "ChainState::from_flat: size must be divisible by 3");
    const auto d = x.size() / 3;
    return ChainState(x.head(d), x.segment(d, d), x.tail(d));
  }
};

enum class Algorithm { third_order, underdamped, ula };

inline std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::third_order: return "third_order";
    case Algorithm::underdamped: return "underdamped";
    case Algorithm::ula: return "ula";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "third_order" || s == "third-order") return Algorithm::third_order;
  if (s == "underdamped") return Algorithm::underdamped;
  if (s == "ula") return Algorithm::ula;
  throw ArgumentError("unknown algorithm '" + s + "' (expected third_order, underdamped or ula)");
}

/// Draws used by a step. Standard normals in production; zeros or a fixed
/// vector for tests and for probing the step as an affine map.
class NoiseSource {
 public:
  static NoiseSource none() { return NoiseSource(Kind::none, nullptr, nullptr); }
  static NoiseSource gaussian(NormalStream& s) { return NoiseSource(Kind::gaussian, &s, nullptr); }
  /// Replays the given values in order (must hold enough draws).
  static NoiseSource replay(const Vector& z) { return NoiseSource(Kind::replay, nullptr, &z); }

  double operator()() {
    switch (kind_) {
      case Kind::none: return 0.0;
      case Kind::gaussian: return (*stream_)();
      case Kind::replay:
        require(pos_ < replay_->size(), "NoiseSource: replay vector exhausted");
        return (*replay_)[pos_++];
    }
    return 0.0;
  }
  bool enabled() const { return kind_ != Kind::none; }

 private:
  enum class Kind { none, gaussian, replay };
  NoiseSource(Kind k, NormalStream* s, const Vector* z) : kind_(k), stream_(s), replay_(z) {}
  Kind kind_;
  NormalStream* stream_;
  const Vector* replay_;
  Eigen::Index pos_ = 0;
};

// ---------------------------------------------------------------------------
// Third-order step

struct StepWorkspace {
  Vector delta;
  DeltaUProvider::Workspace du;
  Vector theta_next, p_next, r_next;
};

/// One transition of the third-order chain. Draw order per coordinate is
/// (z_theta, z_p, z_r), coordinates ascending.
inline void step(ChainState& x, const TransitionCoeffs& tc, const DeltaUProvider& du, NoiseSource& noise,
                 StepWorkspace& ws) {
  const auto& mc = tc.mean;
  require(du.eta() == mc.eta, "step: Delta provider and coefficients use different step sizes");
  du(x.theta, x.p, ws.delta, ws.du);
  const Vector& D = ws.delta;
  ws.theta_next = x.theta - (0.5 * mc.eta) * D + mc.mu12 * x.p + mc.mu13 * x.r;
  ws.p_next = -D + mc.mu22 * x.p + mc.mu23 * x.r;
  ws.r_next = mc.mu31 * D + mc.mu32 * x.p + mc.mu33 * x.r;
  if (noise.enabled()) {
    const Mat3& g = tc.factor.g;
    const double scale = 1.0 / std::sqrt(tc.params.L);
    for (Eigen::Index j = 0; j < x.dim(); ++j) {
      const double z0 = noise(), z1 = noise(), z2 = noise();
      ws.theta_next[j] += scale * (g(0, 0) * z0);
      ws.p_next[j] += scale * (g(1, 0) * z0 + g(1, 1) * z1);
      ws.r_next[j] += scale * (g(2, 0) * z0 + g(2, 1) * z1 + g(2, 2) * z2);
    }
  }
  x.theta.swap(ws.theta_next);
  x.p.swap(ws.p_next);
  x.r.swap(ws.r_next);
}

inline ChainState step(const ChainState& x, const TransitionCoeffs& tc, const DeltaUProvider& du, NormalStream& rng) {
  ChainState y = x;
  StepWorkspace ws;
  auto noise = NoiseSource::gaussian(rng);
  step(y, tc, du, noise, ws);
  return y;
}

/// Noise-free map of one Hessian eigendirection with normalized curvature
/// l = lambda / L, acting on (theta, p, r) for a quadratic potential centred at 0.
inline Mat3 mode_transition_matrix(const MeanCoeffs& mc, double l) {
  Mat3 T = mc.linear_part();
  const Vec3 w(-0.5 * mc.eta, -1.0, mc.mu31);
  const Vec3 dl(l * mc.eta, 0.5 * l * mc.eta * mc.eta, 0.0);
  T += w * dl.transpose();
  return T;
}

// ---------------------------------------------------------------------------
// Baselines

/// theta' = theta - (eta/L) grad U(theta) + sqrt(2 eta / L) z.
inline void ula_step(ChainState& x, const PotentialSpec& pot, double eta, NoiseSource& noise, Vector& grad) {
  require(eta > 0.0, "ula_step: eta must be positive");
  gradient_into(pot, x.theta, grad);
  x.theta -= (eta / pot.L()) * grad;
  if (noise.enabled()) {
    const double s = std::sqrt(2.0 * eta / pot.L());
    for (Eigen::Index j = 0; j < x.dim(); ++j) x.theta[j] += s * noise();
  }
}

inline ChainState ula_step(const ChainState& x, const PotentialSpec& pot, double eta, NormalStream& rng) {
  ChainState y = x;
  Vector g;
  auto noise = NoiseSource::gaussian(rng);
  ula_step(y, pot, eta, noise, g);
  return y;
}

/// Exact integration of d theta = r dt, dr = -xi r dt - (1/L) g dt + sqrt(2 xi / L) dB
/// with the gradient g frozen at the start of the step.
struct UnderdampedCoeffs {
  double eta = 0, xi = 0, L = 1;
  double theta_r = 0, theta_g = 0, r_r = 0, r_g = 0;
  Eigen::Matrix2d factor = Eigen::Matrix2d::Zero();  // lower Cholesky of the (theta, r) noise covariance

  UnderdampedCoeffs() = default;
  UnderdampedCoeffs(double eta_, double xi_, double L_) : eta(eta_), xi(xi_), L(L_) {
    require(eta > 0.0 && xi > 0.0 && L > 0.0, "UnderdampedCoeffs: eta, xi and L must be positive");
    using detail::ExpPoly;
    using detail::ExpTerm;
    static const ExpPoly one_minus_e{1, {ExpTerm{1, 0, 0}, ExpTerm{-1, 0, 1}}};
    static const ExpPoly x_minus{1, {ExpTerm{1, 1, 0}, ExpTerm{-1, 0, 0}, ExpTerm{1, 0, 1}}};
    static const ExpPoly var_theta{1, {ExpTerm{2, 1, 0}, ExpTerm{-3, 0, 0}, ExpTerm{4, 0, 1}, ExpTerm{-1, 0, 2}}};
    static const ExpPoly var_r{1, {ExpTerm{1, 0, 0}, ExpTerm{-1, 0, 2}}};
    const double x = xi * eta;
    const double ome = one_minus_e(x);
    theta_r = ome / xi;
    theta_g = -x_minus(x) / (L * xi * xi);
    r_r = std::exp(-x);
    r_g = -ome / (L * xi);
    Eigen::Matrix2d cov;
    cov(0, 0) = var_theta(x) / (xi * xi * L);
    cov(1, 1) = var_r(x) / L;
    cov(0, 1) = cov(1, 0) = ome * ome / (xi * L);
    const double a = std::sqrt(cov(0, 0));
    factor(0, 0) = a;
    factor(1, 0) = a > 0.0 ? cov(1, 0) / a : 0.0;
    factor(1, 1) = std::sqrt(std::max(cov(1, 1) - factor(1, 0) * factor(1, 0), 0.0));
  }
};

/// Draw order per coordinate is (z_theta, z_r).
inline void underdamped_step(ChainState& x, const PotentialSpec& pot, const UnderdampedCoeffs& uc, NoiseSource& noise,
                             Vector& grad) {
  gradient_into(pot, x.theta, grad);
  const Vector r0 = x.r;
  x.theta += uc.theta_r * r0 + uc.theta_g * grad;
  x.r = uc.r_r * r0 + uc.r_g * grad;
  if (noise.enabled()) {
    for (Eigen::Index j = 0; j < x.dim(); ++j) {
      const double z0 = noise(), z1 = noise();
      x.theta[j] += uc.factor(0, 0) * z0;
      x.r[j] += uc.factor(1, 0) * z0 + uc.factor(1, 1) * z1;
    }
  }
}

inline ChainState underdamped_step(const ChainState& x, const PotentialSpec& pot, double eta, double xi,
                                   NormalStream& rng) {
  ChainState y = x;
  Vector g;
  auto noise = NoiseSource::gaussian(rng);
  underdamped_step(y, pot, UnderdampedCoeffs(eta, xi, pot.L()), noise, g);
  return y;
}

// ---------------------------------------------------------------------------
// Step-size schedules

struct StepSchedule {
  double eta = 0.0;
  double steps = 0.0;  // companion iteration count C kappa^2 / eta log(3d / (L eps))
};

inline double schedule_steps(double kappa, double d, double L, double eps, double eta, double C) {
  return std::max(1.0, std::ceil(C * kappa * kappa / eta * std::log(3.0 * d / (L * eps))));
}

/// eta = c kappa^(-11/4) d^(-1/4) L^(1/4) eps^(1/2).
inline StepSchedule step_size_thm1(double kappa, double d, double L, double eps, double c = 0.1, double C = 1.0) {
  require(eps > 0.0 && eps < 1.0 + 1e-15, "step_size_thm1: eps must lie in (0, 1]");
  require(kappa >= 1.0 && d >= 1.0 && L > 0.0 && c > 0.0, "step_size_thm1: invalid kappa, d, L or c");
  StepSchedule s;
  s.eta = c * std::pow(kappa, -2.75) * std::pow(d, -0.25) * std::pow(L, 0.25) * std::sqrt(eps);
  s.steps = schedule_steps(kappa, d, L, eps, s.eta, C);
  return s;
}

/// c min(kappa^(-11/4) d^(-1/4) L^(1/4) eps^(1/2), L_alpha^(-1) L^(1/2) kappa^(-4) d^(-1/2) eps^(1/(alpha-1))).
inline StepSchedule step_size_thm2(double kappa, double d, double L, double L_alpha, int alpha, double eps,
                                   double c = 0.1, double C = 1.0) {
  require(alpha >= 2, "step_size_thm2: alpha must be >= 2");
  require(eps > 0.0 && eps < 1.0 + 1e-15, "step_size_thm2: eps must lie in (0, 1]");
  require(kappa >= 1.0 && d >= 1.0 && L > 0.0 && L_alpha >= 0.0 && c > 0.0, "step_size_thm2: invalid arguments");
  const double first = std::pow(kappa, -2.75) * std::pow(d, -0.25) * std::pow(L, 0.25) * std::sqrt(eps);
  const double second = L_alpha > 0.0 ? std::sqrt(L) / L_alpha * std::pow(kappa, -4.0) / std::sqrt(d) *
                                            std::pow(eps, 1.0 / (alpha - 1))
                                      : std::numeric_limits<double>::infinity();
  StepSchedule s;
  s.eta = c * std::min(first, second);
  s.steps = s.eta > 0.0 ? schedule_steps(kappa, d, L, eps, s.eta, C) : std::numeric_limits<double>::infinity();
  return s;
}

// ---------------------------------------------------------------------------
// Chains

struct SamplerConfig {
  PotentialSpec potential;
  DynamicsParams params;  // eta is shared by all algorithms; gamma unused by baselines
  Algorithm algorithm = Algorithm::third_order;
  DeltaUMode delta_u_mode = DeltaUMode::exact;
  int alpha = 3;
  double underdamped_xi = 2.0;
  std::uint64_t steps = 1000;
  std::uint64_t record_every = 1;
  std::uint64_t seed = 0;
  std::size_t chains = 1;
  std::size_t threads = 1;
  bool record_full_state = false;
  std::optional<Vector> theta0;  // minimization start; zeros if absent
};

struct Snapshot {
  std::uint64_t step = 0;
  ChainState state;  // p and r are empty unless the full state is recorded
};

struct RunReport {
  std::size_t chain = 0;
  std::uint64_t seed = 0;
  std::uint64_t steps_done = 0;
  std::uint64_t gradient_evals = 0;       // sampling only
  std::uint64_t init_gradient_evals = 0;  // minimization
  double seconds_per_step = 0.0;
  std::vector<Snapshot> samples;
  ChainState final_state;
};

/// Divergence carrying the report up to the failing step.
class ChainDiverged : public DivergenceError {
 public:
  ChainDiverged(const std::string& what, std::uint64_t step, std::shared_ptr<RunReport> partial)
      : DivergenceError(what, step), partial_(std::move(partial)) {}
  const RunReport& partial() const { return *partial_; }

 private:
  std::shared_ptr<RunReport> partial_;
};

/// Warning text when eta is above the algorithm's linear stability limit on
/// the certified curvature range; empty otherwise.
inline std::string stability_warning(const SamplerConfig& cfg) {
  const double eta = cfg.params.eta;
  const double inv_kappa = 1.0 / cfg.potential.kappa();
  double worst = 0.0;
  for (double l : {inv_kappa, 0.5 * (1.0 + inv_kappa), 1.0}) {
    double rho = 0.0;
    if (cfg.algorithm == Algorithm::third_order) {
      const Mat3 T = mode_transition_matrix(mean_coeffs(cfg.params), l);
      rho = T.eigenvalues().cwiseAbs().maxCoeff();
    } else if (cfg.algorithm == Algorithm::ula) {
      rho = std::abs(1.0 - eta * l);
    } else {
      const UnderdampedCoeffs uc(eta, cfg.underdamped_xi, 1.0);
      Eigen::Matrix2d T;
      T << 1.0 + uc.theta_g * l, uc.theta_r, uc.r_g * l, uc.r_r;
      rho = T.eigenvalues().cwiseAbs().maxCoeff();
    }
    worst = std::max(worst, rho);
  }
  if (worst < 1.0) return {};
  return "step size " + std::to_string(eta) + " is above the linear stability limit of " + to_string(cfg.algorithm) +
         " (spectral radius " + std::to_string(worst) + ")";
}

/// (theta_hat, 0, 0) with theta_hat from minimize at tol = 1/L.
inline ChainState init_state(const PotentialSpec& pot, const std::optional<Vector>& theta0 = std::nullopt,
                             std::size_t* gradient_evals = nullptr) {
  const Vector start = theta0.value_or(Vector::Zero(pot.dim()));
  const Minimum mn = minimize(pot, start);
  if (gradient_evals) *gradient_evals = mn.gradient_evals;
  return ChainState(mn.theta, Vector::Zero(pot.dim()), Vector::Zero(pot.dim()));
}

/// Per-configuration objects shared read-only by every chain.
struct ChainKernel {
  std::optional<TransitionCoeffs> coeffs;
  std::optional<DeltaUProvider> delta_u;
  UnderdampedCoeffs underdamped;
  std::uint64_t evals_per_step = 1;
};

inline ChainKernel make_chain_kernel(const SamplerConfig& cfg) {
  ChainKernel k;
  const PotentialSpec& pot = cfg.potential;
  if (cfg.algorithm == Algorithm::third_order) {
    k.coeffs.emplace(cfg.params);
    k.delta_u.emplace(cfg.delta_u_mode == DeltaUMode::exact
                          ? DeltaUProvider::exact(pot, cfg.params.eta)
                          : DeltaUProvider::chebyshev(pot, cfg.params.eta, cfg.alpha));
    k.evals_per_step = k.delta_u->evals_per_call();
  } else if (cfg.algorithm == Algorithm::underdamped) {
    k.underdamped = UnderdampedCoeffs(cfg.params.eta, cfg.underdamped_xi, pot.L());
  } else {
    require(cfg.params.eta > 0.0, "ula: eta must be positive");
  }
  return k;
}

/// Runs one chain from a given start. Stream index = chain index.
inline RunReport run_chain_from(const SamplerConfig& cfg, const ChainKernel& kernel, const ChainState& start,
                                std::size_t chain_index) {
  require(cfg.record_every >= 1, "run_chain: record_every must be >= 1");
  require_dim(start.dim(), cfg.potential.dim(), "run_chain start state");
  auto report = std::make_shared<RunReport>();
  report->chain = chain_index;
  report->seed = cfg.seed;

  const PotentialSpec& pot = cfg.potential;
  NormalStream rng(cfg.seed, chain_index);
  auto noise = NoiseSource::gaussian(rng);
  ChainState x = start;

  auto record = [&](std::uint64_t k) {
    Snapshot s;
    s.step = k;
    s.state.theta = x.theta;
    if (cfg.record_full_state) {
      s.state.p = x.p;
      s.state.r = x.r;
    }
    report->samples.push_back(std::move(s));
  };

  StepWorkspace ws;
  Vector grad;
  record(0);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t k = 1; k <= cfg.steps; ++k) {
    switch (cfg.algorithm) {
      case Algorithm::third_order: step(x, *kernel.coeffs, *kernel.delta_u, noise, ws); break;
      case Algorithm::underdamped: underdamped_step(x, pot, kernel.underdamped, noise, grad); break;
      case Algorithm::ula: ula_step(x, pot, cfg.params.eta, noise, grad); break;
    }
    report->gradient_evals += kernel.evals_per_step;
    if (!x.finite()) {
      report->steps_done = k - 1;
      report->final_state = x;
      throw ChainDiverged("chain " + std::to_string(chain_index) + " produced a non-finite state at step " +
                              std::to_string(k),
                          k, report);
    }
    report->steps_done = k;
    if (k % cfg.record_every == 0) record(k);
  }
  const auto t1 = std::chrono::steady_clock::now();
  if (cfg.steps > 0) {
    report->seconds_per_step = std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(cfg.steps);
  }
  report->final_state = x;
  return *report;
}

inline RunReport run_chain(const SamplerConfig& cfg, std::size_t chain_index = 0) {
  std::size_t init_evals = 0;
  const ChainState start = init_state(cfg.potential, cfg.theta0, &init_evals);
  RunReport rep = run_chain_from(cfg, make_chain_kernel(cfg), start, chain_index);
  rep.init_gradient_evals = init_evals;
  return rep;
}

/// Runs cfg.chains chains on cfg.threads workers. The initial point is
/// computed once and shared; results are ordered by chain index and do not
/// depend on the thread count.
inline std::vector<RunReport> run_chains(const SamplerConfig& cfg) {
  require(cfg.chains >= 1, "run_chains: chains must be >= 1");
  std::size_t init_evals = 0;
  const ChainState start = init_state(cfg.potential, cfg.theta0, &init_evals);
  const ChainKernel kernel = make_chain_kernel(cfg);
  std::vector<RunReport> out(cfg.chains);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= cfg.chains) return;
      try {
        out[c] = run_chain_from(cfg, kernel, start, c);
        out[c].init_gradient_evals = c == 0 ? init_evals : 0;
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!first_error) first_error = std::current_exception();
        next.store(cfg.chains);
        return;
      }
    }
  };
  const std::size_t nthreads = std::max<std::size_t>(1, std::min(cfg.threads, cfg.chains));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

}  // namespace tlmc
