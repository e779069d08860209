#pragma once

// Experiment configuration for the tlmc tool: schema with defaults, strict
// key checking, potential construction and provenance hashing.

#include "toml_lite.hpp"

#include "tlmc/tlmc.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tlmc::cli {

using nlohmann::json;

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// FNV-1a over the bytes of s.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Defaults for every recognised key. Anything not listed here is rejected.
inline json config_defaults() {
  return json{
      {"potential",
       {{"type", "quadratic"},
        {"d", 10},
        {"kappa", 5.0},
        {"L", 5.0},
        {"seed", 1},
        {"spectrum", "linear"},
        {"rotate", false},
        {"dataset", ""},
        {"n", 50},
        {"ridge", 1.0},
        {"c", 0.5}}},
      {"dynamics",
       {{"gamma", nullptr},
        {"xi", nullptr},
        {"eta", 0.05},
        {"schedule", "fixed"},
        {"c", 0.1},
        {"C", 1.0},
        {"epsilon", 0.1},
        {"alpha", 3},
        {"L_alpha", nullptr},
        {"delta_u", "exact"},
        {"underdamped_xi", 2.0},
        {"panels", 128}}},
      {"run",
       {{"algorithm", "third_order"},
        {"steps", 1000},
        {"chains", 1},
        {"seed", 0},
        {"thinning", 1},
        {"threads", 1},
        {"full_state", false},
        {"out", ""},
        {"report", ""},
        {"stride", 1},
        {"view", "theta"},
        {"etas", json::array({0.2, 0.1, 0.05, 0.025, 0.0125})},
        {"method", "exact"},
        {"burn_in", 1000},
        {"mixing_epsilon", nullptr},
        {"check_samples", 1000},
        {"kappa_points", 50},
        {"timing", false}}},
  };
}

/// Overlays user values onto the defaults, rejecting unknown sections/keys
/// and type mismatches.
inline json merge_config(const json& user) {
  json cfg = config_defaults();
  if (!user.is_object()) throw ConfigError("config root must be a table");
  for (const auto& [section, body] : user.items()) {
    if (!cfg.contains(section)) throw ConfigError("unknown config section [" + section + "]");
    if (!body.is_object()) throw ConfigError("config entry '" + section + "' must be a table");
    for (const auto& [key, v] : body.items()) {
      if (!cfg[section].contains(key)) throw ConfigError("unknown config key '" + section + "." + key + "'");
      const json& def = cfg[section][key];
      const bool ok = def.is_null() ? v.is_number()
                      : def.is_number() ? v.is_number()
                      : def.is_boolean() ? v.is_boolean()
                      : def.is_string() ? v.is_string()
                      : def.is_array() ? v.is_array()
                      : false;
      if (!ok) throw ConfigError("config key '" + section + "." + key + "' has the wrong type");
      if (def.is_number_integer() && !v.is_number_integer())
        throw ConfigError("config key '" + section + "." + key + "' must be an integer");
      if (def.is_number_integer() && v.get<long long>() < 0)
        throw ConfigError("config key '" + section + "." + key + "' must be non-negative");
      cfg[section][key] = v;
    }
  }
  return cfg;
}

inline void set_key(json& cfg, const std::string& section, const std::string& key, json v) {
  // Command-line overrides go through the same key and type checks as the file.
  json patch = json::object();
  patch[section][key] = std::move(v);
  cfg[section][key] = merge_config(patch)[section][key];
}

inline std::uint64_t get_u64(const json& j) { return j.get<std::uint64_t>(); }

// ---------------------------------------------------------------------------
// Potentials

inline Vector linspace(double a, double b, Eigen::Index n) {
  if (n == 1) return Vector::Constant(1, b);
  return Vector::LinSpaced(n, a, b);
}

/// Random orthogonal matrix from the QR factorization of a Gaussian matrix.
inline Matrix random_rotation(Eigen::Index d, std::uint64_t seed) {
  NormalStream rng(seed, 0x726f74ULL);
  Matrix G(d, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < d; ++i) G(i, j) = rng();
  Eigen::HouseholderQR<Matrix> qr(G);
  Matrix Q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (R(j, j) < 0) Q.col(j) *= -1.0;
  return Q;
}

inline Vector spectrum(const json& p, Eigen::Index d, double m, double L) {
  const std::string kind = p["spectrum"].get<std::string>();
  if (kind == "linear") return linspace(m, L, d);
  if (kind == "random") {
    // Log-uniform interior values with both endpoints pinned so the bounds are exact.
    NormalStream rng(get_u64(p["seed"]), 0x737065ULL);
    boost::random::uniform_real_distribution<double> u(std::log(m), std::log(L));
    Vector lam(d);
    for (Eigen::Index i = 0; i < d; ++i) lam[i] = std::exp(u(rng.engine()));
    lam[0] = m;
    lam[d - 1] = L;
    return lam;
  }
  throw ConfigError("potential.spectrum must be 'linear' or 'random'");
}

/// Synthetic logistic-regression data: rows x_i ~ N(0, I/d), labels drawn
/// from the logistic model with a standard-normal weight vector.
inline std::pair<Matrix, Vector> synthetic_logistic(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  NormalStream rng(seed, 0x6c6f67ULL);
  Vector w(d);
  for (Eigen::Index j = 0; j < d; ++j) w[j] = rng();
  Matrix X(n, d);
  Vector y(n);
  boost::random::uniform_real_distribution<double> u(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = rng() / std::sqrt(static_cast<double>(d));
    const double prob = tlmc::detail::sigmoid(X.row(i).dot(w));
    y[i] = u(rng.engine()) < prob ? 1.0 : -1.0;
  }
  return {X, y};
}

inline PotentialSpec build_potential(const json& cfg) {
  const json& p = cfg["potential"];
  const std::string type = p["type"].get<std::string>();
  const auto d = static_cast<Eigen::Index>(p["d"].get<long long>());
  if (type == "quadratic" || type == "radial") {
    if (d < 1) throw ConfigError("potential.d must be >= 1");
    const double kappa = p["kappa"].get<double>();
    const double L = p["L"].get<double>();
    if (!(kappa >= 1.0) || !(L > 0.0)) throw ConfigError("potential.kappa must be >= 1 and potential.L positive");
    const double m = L / kappa;
    if (type == "quadratic") {
      const Vector lam = spectrum(p, d, m, L);
      const Matrix V = p["rotate"].get<bool>() ? random_rotation(d, get_u64(p["seed"])) : Matrix::Identity(d, d);
      return make_quadratic(Vector::Zero(d), lam, V);
    }
    const double c = p["c"].get<double>();
    if (!(c >= 0.0) || L - c < m) throw ConfigError("potential.c must satisfy 0 <= c <= L - L/kappa");
    return make_softened_radial(linspace(m, L - c, d), c);
  }
  if (type == "logistic") {
    const std::string path = p["dataset"].get<std::string>();
    const double ridge = p["ridge"].get<double>();
    if (!path.empty()) {
      auto [X, y] = read_logistic_csv(path);
      return make_logistic(std::move(X), std::move(y), ridge);
    }
    const auto n = static_cast<Eigen::Index>(p["n"].get<long long>());
    if (n < 1 || d < 1) throw ConfigError("potential.n and potential.d must be >= 1");
    auto [X, y] = synthetic_logistic(n, d, get_u64(p["seed"]));
    return make_logistic(std::move(X), std::move(y), ridge);
  }
  throw ConfigError("potential.type must be 'quadratic', 'logistic' or 'radial'");
}

// ---------------------------------------------------------------------------
// Dynamics and run settings

inline DeltaUMode parse_delta_u(const std::string& s) {
  if (s == "exact") return DeltaUMode::exact;
  if (s == "chebyshev") return DeltaUMode::chebyshev;
  throw ConfigError("dynamics.delta_u must be 'exact' or 'chebyshev'");
}

/// Step size from the configured schedule.
inline double resolve_eta(const json& cfg, const PotentialSpec& pot) {
  const json& dy = cfg["dynamics"];
  const std::string schedule = dy["schedule"].get<std::string>();
  const double c = dy["c"].get<double>();
  const double C = dy["C"].get<double>();
  const double eps = dy["epsilon"].get<double>();
  const double d = static_cast<double>(pot.dim());
  if (schedule == "fixed") return dy["eta"].get<double>();
  if (schedule == "thm1") return step_size_thm1(pot.kappa(), d, pot.L(), eps, c, C).eta;
  if (schedule == "thm2") {
    std::optional<double> La;
    if (!dy["L_alpha"].is_null()) La = dy["L_alpha"].get<double>();
    if (!La) {
      if (auto* bb = pot.as<BlackBoxGradient>()) La = bb->L_alpha;
    }
    if (!La) throw ConfigError("schedule 'thm2' needs dynamics.L_alpha");
    return step_size_thm2(pot.kappa(), d, pot.L(), *La, static_cast<int>(dy["alpha"].get<long long>()), eps, c, C)
        .eta;
  }
  throw ConfigError("dynamics.schedule must be 'fixed', 'thm1' or 'thm2'");
}

struct Resolved {
  json cfg;  // merged config with derived values filled in
  PotentialSpec potential;
  SamplerConfig sampler;
  std::string hash;
};

inline Resolved resolve(json cfg) {
  PotentialSpec pot = build_potential(cfg);
  const double eta = resolve_eta(cfg, pot);
  json& dy = cfg["dynamics"];
  const double gamma = dy["gamma"].is_null() ? pot.kappa() : dy["gamma"].get<double>();
  const double xi = dy["xi"].is_null() ? 2.0 * pot.kappa() : dy["xi"].get<double>();
  DynamicsParams prm{gamma, xi, eta, pot.L()};
  prm.validate();

  const json& run = cfg["run"];
  SamplerConfig sc{pot, prm};
  sc.algorithm = parse_algorithm(run["algorithm"].get<std::string>());
  sc.delta_u_mode = parse_delta_u(dy["delta_u"].get<std::string>());
  sc.alpha = static_cast<int>(dy["alpha"].get<long long>());
  sc.underdamped_xi = dy["underdamped_xi"].get<double>();
  sc.steps = run["steps"].get<std::uint64_t>();
  sc.record_every = run["thinning"].get<std::uint64_t>();
  if (sc.record_every < 1) throw ConfigError("run.thinning must be >= 1");
  sc.seed = run["seed"].get<std::uint64_t>();
  sc.chains = run["chains"].get<std::size_t>();
  if (sc.chains < 1) throw ConfigError("run.chains must be >= 1");
  sc.threads = std::max<std::size_t>(1, run["threads"].get<std::size_t>());
  sc.record_full_state = run["full_state"].get<bool>();

  json derived = {{"m", pot.m()},     {"L", pot.L()},  {"kappa", pot.kappa()}, {"dim", pot.dim()},
                  {"eta", eta},       {"gamma", gamma}, {"xi", xi},             {"potential_kind", pot.kind_name()}};
  // Thread count and output paths do not change results; keep them out of the hash.
  json hashed = cfg;
  hashed["run"].erase("threads");
  hashed["run"].erase("out");
  hashed["run"].erase("report");
  hashed["run"].erase("timing");
  const std::string hash = hex64(fnv1a64(hashed.dump()));
  cfg["derived"] = derived;
  return Resolved{std::move(cfg), std::move(pot), std::move(sc), hash};
}

}  // namespace tlmc::cli
