// tlmc: coefficient inspection, sampling, mixing curves, bias sweeps and
// spectral inequality checks for the third-order Langevin sampler.
//
// Exit codes: 0 ok, 1 internal error, 2 usage/config error,
// 3 numerical failure or divergence, 4 verification failure.

#include "experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <tuple>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace {

using namespace tlmc;
using namespace tlmc::cli;
using nlohmann::json;

enum ExitCode { kOk = 0, kInternal = 1, kUsage = 2, kNumerical = 3, kVerifyFailed = 4 };

struct Overrides {
  std::string config_path;
  // Typed flags, read after parsing: option, "section.key", current value.
  std::vector<std::tuple<CLI::Option*, std::string, std::function<json()>>> flags;
  std::vector<std::string> sets;  // raw --set section.key=value
};

// Registers a typed option that, when given, overrides section.key.
template <class T>
void add_override(CLI::App* app, Overrides& ov, const std::string& flag, const std::string& key,
                  const std::string& help, std::shared_ptr<T> slot) {
  CLI::Option* opt = app->add_option(flag, *slot, help);
  ov.flags.emplace_back(opt, key, [slot] { return json(*slot); });
}

void add_common(CLI::App* app, Overrides& ov) {
  app->add_option("--config", ov.config_path, "TOML-syntax experiment config")->check(CLI::ExistingFile);
  add_override(app, ov, "--potential", "potential.type", "quadratic | logistic | radial", std::make_shared<std::string>());
  add_override(app, ov, "--d", "potential.d", "dimension", std::make_shared<long long>());
  add_override(app, ov, "--kappa", "potential.kappa", "condition number", std::make_shared<double>());
  add_override(app, ov, "--dataset", "potential.dataset", "logistic CSV with columns y,x1..xd",
               std::make_shared<std::string>());
  add_override(app, ov, "--algo", "run.algorithm", "third_order | underdamped | ula", std::make_shared<std::string>());
  add_override(app, ov, "--eta", "dynamics.eta", "step size (fixed schedule)", std::make_shared<double>());
  add_override(app, ov, "--delta-u", "dynamics.delta_u", "exact | chebyshev", std::make_shared<std::string>());
  add_override(app, ov, "--alpha", "dynamics.alpha", "Chebyshev node count", std::make_shared<long long>());
  add_override(app, ov, "--steps", "run.steps", "steps per chain", std::make_shared<long long>());
  add_override(app, ov, "--seed", "run.seed", "RNG seed", std::make_shared<long long>());
  add_override(app, ov, "--chains", "run.chains", "number of chains", std::make_shared<long long>());
  add_override(app, ov, "--threads", "run.threads", "worker threads", std::make_shared<long long>());
  add_override(app, ov, "--out", "run.out", "output path (default stdout)", std::make_shared<std::string>());
  add_override(app, ov, "--report", "run.report", "JSON report path", std::make_shared<std::string>());
  auto full = std::make_shared<bool>(false);
  CLI::Option* opt = app->add_flag("--full-state", *full, "record p and r blocks as well");
  ov.flags.emplace_back(opt, "run.full_state", [full] { return json(*full); });
  app->add_option("--set", ov.sets, "override any key: section.key=value (TOML value syntax)");
}

json load_config(const Overrides& ov) {
  json user = ov.config_path.empty() ? json::object() : read_toml_lite(ov.config_path);
  json cfg = merge_config(user);
  for (const auto& [opt, path, value] : ov.flags) {
    if (opt->count() == 0) continue;
    const auto dot = path.find('.');
    set_key(cfg, path.substr(0, dot), path.substr(dot + 1), value());
  }
  for (const auto& s : ov.sets) {
    const auto eq = s.find('=');
    const auto dot = s.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
      throw ConfigError("--set expects section.key=value, got '" + s + "'");
    const json parsed = parse_toml_lite("[" + s.substr(0, dot) + "]\n" + s.substr(dot + 1, eq - dot - 1) + " = " +
                                        s.substr(eq + 1));
    const auto& [section, body] = *parsed.items().begin();
    const auto& [key, v] = *body.items().begin();
    set_key(cfg, section, key, v);
  }
  return cfg;
}

std::string provenance(const std::string& hash) { return std::string(kVersion) + " config=" + hash; }

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open output file '" + path + "'");
  f << text;
  if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

// Series go to run.out (stdout if empty). The report goes to run.report, or to
// stdout when the series was written to a file.
void emit(const Resolved& rs, const std::string& series, const json& report) {
  const std::string out = rs.cfg["run"]["out"].get<std::string>();
  const std::string rep = rs.cfg["run"]["report"].get<std::string>();
  write_text(out, series);
  if (!rep.empty()) {
    write_text(rep, report.dump(2) + "\n");
  } else if (!out.empty()) {
    write_text("", report.dump(2) + "\n");
  }
}

json report_header(const Resolved& rs, const std::string& command) {
  return json{{"command", command}, {"version", kVersion}, {"config_hash", rs.hash}, {"config", rs.cfg}};
}

void append_row(std::string& buf, std::initializer_list<std::string> cells) {
  bool first = true;
  for (const auto& c : cells) {
    if (!first) buf += ',';
    buf += c;
    first = false;
  }
  buf += '\n';
}

// ---------------------------------------------------------------------------

int cmd_coeffs(const DynamicsParams& prm, int panels, const std::string& out) {
  const double tol = 1e-9;
  const auto deltas = oracle_deltas(prm, panels);
  json coeffs = json::object(), oracle = json::object(), delta = json::object();
  double worst = 0.0;
  for (const auto& d : deltas) {
    coeffs[d.name] = d.closed_form;
    oracle[d.name] = d.oracle;
    delta[d.name] = d.abs_delta();
    worst = std::max(worst, d.abs_delta());
  }
  json params = {{"gamma", prm.gamma}, {"xi", prm.xi}, {"eta", prm.eta}, {"L", prm.L}, {"panels", panels}};
  const bool ok = worst <= tol;
  json j = {{"command", "coeffs"},
            {"version", kVersion},
            {"config_hash", hex64(fnv1a64(params.dump()))},
            {"params", params},
            {"coefficients", coeffs},
            {"oracle", oracle},
            {"abs_delta", delta},
            {"max_abs_delta", worst},
            {"tolerance", tol},
            {"passed", ok}};
  write_text(out, j.dump(2) + "\n");
  return ok ? kOk : kVerifyFailed;
}

int cmd_sample(const Resolved& rs) {
  const SamplerConfig& sc = rs.sampler;
  const std::string warning = stability_warning(sc);
  if (!warning.empty()) std::cerr << json{{"warning", warning}}.dump() << "\n";

  const auto runs = run_chains(sc);
  const auto d = sc.potential.dim();
  std::string csv = "# " + provenance(rs.hash) + "\n";
  std::string header = "step,chain";
  auto add_block = [&](const char* name) {
    for (Eigen::Index j = 0; j < d; ++j) header += "," + std::string(name) + "_" + std::to_string(j);
  };
  add_block("theta");
  if (sc.record_full_state) {
    add_block("p");
    add_block("r");
  }
  csv += header + "\n";
  const bool has_p = sc.algorithm == Algorithm::third_order;
  for (const auto& run : runs) {
    for (const auto& s : run.samples) {
      csv += std::to_string(s.step) + "," + std::to_string(run.chain);
      for (Eigen::Index j = 0; j < d; ++j) csv += "," + fmt_double(s.state.theta[j]);
      if (sc.record_full_state) {
        // ULA has neither block and the underdamped chain only r; absent blocks print as 0.
        for (Eigen::Index j = 0; j < d; ++j) csv += "," + fmt_double(has_p ? s.state.p[j] : 0.0);
        for (Eigen::Index j = 0; j < d; ++j)
          csv += "," + fmt_double(sc.algorithm == Algorithm::ula ? 0.0 : s.state.r[j]);
      }
      csv += "\n";
    }
  }

  json rep = report_header(rs, "sample");
  json chains = json::array();
  std::uint64_t total = 0;
  for (const auto& run : runs) {
    json c = {{"chain", run.chain},
              {"steps_done", run.steps_done},
              {"gradient_evals", run.gradient_evals},
              {"init_gradient_evals", run.init_gradient_evals}};
    if (rs.cfg["run"]["timing"].get<bool>()) c["seconds_per_step"] = run.seconds_per_step;
    chains.push_back(c);
    total += run.gradient_evals + run.init_gradient_evals;
  }
  rep["chains"] = chains;
  rep["gradient_evals_total"] = total;
  if (!warning.empty()) rep["warning"] = warning;
  emit(rs, csv, rep);
  return kOk;
}

int cmd_mixing(const Resolved& rs) {
  const SamplerConfig& sc = rs.sampler;
  if (sc.potential.as<Quadratic>() == nullptr)
    throw ConfigError("mixing needs a quadratic potential (the target law must be Gaussian)");
  const std::string view_name = rs.cfg["run"]["view"].get<std::string>();
  StateView view;
  GaussianSummary target;
  SamplerConfig run_cfg = sc;
  if (view_name == "theta") {
    view = StateView::theta;
    target = quadratic_target(sc.potential);
  } else if (view_name == "full") {
    if (sc.algorithm != Algorithm::third_order) throw ConfigError("run.view = 'full' is only defined for third_order");
    view = StateView::full;
    target = quadratic_joint_target(sc.potential);
    run_cfg.record_full_state = true;
  } else {
    throw ConfigError("run.view must be 'theta' or 'full'");
  }
  const auto runs = run_chains(run_cfg);
  const auto curve = mixing_curve(runs, target, rs.cfg["run"]["stride"].get<std::size_t>(), view);

  std::string csv = "# " + provenance(rs.hash) + " view=" + view_name + "\n";
  csv += "step,w2,stderr\n";
  json rows = json::array();
  for (const auto& p : curve.points) append_row(csv, {std::to_string(p.step), fmt_double(p.w2), fmt_double(p.stderr_)});

  json rep = report_header(rs, "mixing");
  rep["view"] = view_name;
  rep["points"] = curve.points.size();
  rep["final_w2"] = curve.points.empty() ? 0.0 : curve.points.back().w2;
  const json& eps = rs.cfg["run"]["mixing_epsilon"];
  if (!eps.is_null()) {
    const auto t = mixing_time(curve, eps.get<double>());
    rep["mixing_epsilon"] = eps;
    rep["mixing_time"] = t ? json(*t) : json(nullptr);
  }
  emit(rs, csv, rep);
  return kOk;
}

int cmd_bias_sweep(Resolved rs) {
  const json& run = rs.cfg["run"];
  const std::string method = run["method"].get<std::string>();
  std::vector<double> etas;
  for (const auto& e : run["etas"]) {
    if (!e.is_number() || !(e.get<double>() > 0.0)) throw ConfigError("run.etas must be positive numbers");
    etas.push_back(e.get<double>());
  }
  if (etas.size() < 2) throw ConfigError("run.etas needs at least two step sizes");
  if (rs.cfg["dynamics"]["schedule"].get<std::string>() != "fixed")
    throw ConfigError("bias-sweep sets eta itself; dynamics.schedule must be 'fixed'");

  std::string body;
  json points = json::array();
  json rep = report_header(rs, "bias-sweep");
  rep["method"] = method;
  std::vector<double> bias, theta_bias;
  if (method == "exact") {
    if (rs.potential.as<Quadratic>() == nullptr) throw ConfigError("method 'exact' needs a quadratic potential");
    body += "eta,plateau_bias,theta_bias\n";
    for (double eta : etas) {
      SamplerConfig sc = rs.sampler;
      sc.params.eta = eta;
      const auto b = stationary_bias(sc);
      bias.push_back(b.state_w2);
      theta_bias.push_back(b.theta_w2);
      append_row(body, {fmt_double(eta), fmt_double(b.state_w2), fmt_double(b.theta_w2)});
      points.push_back({{"eta", eta}, {"plateau_bias", b.state_w2}, {"theta_bias", b.theta_w2}});
    }
    rep["slope"] = loglog_slope(etas, bias);
    rep["theta_slope"] = loglog_slope(etas, theta_bias);
  } else if (method == "momentum") {
    // The averaging window and burn-in are run.steps and run.burn_in at the
    // first eta; other step sizes keep the same simulated time.
    body += "eta,plateau_bias,stderr,steps\n";
    const double eta0 = etas.front();
    for (double eta : etas) {
      SamplerConfig sc = rs.sampler;
      sc.params.eta = eta;
      const double scale = eta0 / eta;
      sc.steps = static_cast<std::uint64_t>(std::ceil(static_cast<double>(run["steps"].get<std::uint64_t>()) * scale));
      const auto burn =
          static_cast<std::uint64_t>(std::ceil(static_cast<double>(run["burn_in"].get<std::uint64_t>()) * scale));
      const auto mb = momentum_bias(sc, burn);
      bias.push_back(std::abs(mb.bias));
      append_row(body, {fmt_double(eta), fmt_double(mb.bias), fmt_double(mb.stderr_), std::to_string(sc.steps)});
      points.push_back({{"eta", eta}, {"plateau_bias", mb.bias}, {"stderr", mb.stderr_}, {"steps", sc.steps}});
    }
    rep["slope"] = loglog_slope(etas, bias);
  } else {
    throw ConfigError("run.method must be 'exact' or 'momentum'");
  }
  rep["points"] = points;
  std::string head = "# " + provenance(rs.hash) + " method=" + method + " slope=" + fmt_double(rep["slope"].get<double>());
  if (rep.contains("theta_slope")) head += " theta_slope=" + fmt_double(rep["theta_slope"].get<double>());
  emit(rs, head + "\n" + body, rep);
  return kOk;
}

int cmd_verify(const Resolved& rs, int panels) {
  const json& run = rs.cfg["run"];
  auto checks = run_spectral_suite(run["seed"].get<std::uint64_t>(), run["check_samples"].get<std::size_t>(),
                                run["kappa_points"].get<std::size_t>());
  CheckResult grid{"kernel_oracle_grid_max_abs_delta", true, 0.0, 1e-9, 0};
  for (const auto& prm : oracle_grid()) {
    for (const auto& d : oracle_deltas(prm, panels)) grid.worst = std::max(grid.worst, d.abs_delta());
    ++grid.cases;
  }
  grid.passed = grid.worst <= grid.threshold;
  checks.push_back(grid);

  json table = json::array();
  bool all = true;
  for (const auto& c : checks) {
    table.push_back({{"name", c.name}, {"passed", c.passed}, {"worst", c.worst}, {"threshold", c.threshold}, {"cases", c.cases}});
    all = all && c.passed;
  }
  json rep = {{"command", "verify"}, {"version", kVersion}, {"config_hash", rs.hash}, {"checks", table}, {"passed", all}};
  write_text(run["out"].get<std::string>(), rep.dump(2) + "\n");
  return all ? kOk : kVerifyFailed;
}

int fail(int code, const std::string& type, const std::string& message, json extra = json::object()) {
  json err = {{"error", {{"type", type}, {"message", message}, {"exit_code", code}}}};
  for (auto& [k, v] : extra.items()) err["error"][k] = v;
  std::cerr << err.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tlmc: third-order Langevin Monte Carlo toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  DynamicsParams cprm{1.0, 2.0, 0.1, 1.0};
  int cpanels = 128;
  std::string cout_path;
  auto* coeffs = app.add_subcommand("coeffs", "closed-form kernel constants and quadrature-oracle deltas (JSON)");
  coeffs->add_option("--gamma", cprm.gamma, "coupling gamma")->capture_default_str();
  coeffs->add_option("--xi", cprm.xi, "friction xi")->capture_default_str();
  coeffs->add_option("--eta", cprm.eta, "step size")->capture_default_str();
  coeffs->add_option("--L", cprm.L, "smoothness L")->capture_default_str();
  coeffs->add_option("--panels", cpanels, "oracle quadrature panels (>= 64)")->capture_default_str();
  coeffs->add_option("--out", cout_path, "output path (default stdout)");

  Overrides ov;
  auto* sample = app.add_subcommand("sample", "run chains and write trajectories (CSV) and a report (JSON)");
  auto* mixing = app.add_subcommand("mixing", "W2 mixing curve against a Gaussian target (CSV: step,w2,stderr)");
  auto* sweep = app.add_subcommand("bias-sweep", "stationary bias versus step size with log-log slope");
  auto* verify = app.add_subcommand("verify", "spectral inequality suite and kernel oracle grid (JSON)");
  for (auto* sub : {sample, mixing, sweep, verify}) add_common(sub, ov);
  int vpanels = 128;
  verify->add_option("--panels", vpanels, "oracle quadrature panels (>= 64)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  try {
    if (coeffs->parsed()) return cmd_coeffs(cprm, cpanels, cout_path);
    const Resolved rs = resolve(load_config(ov));
    if (sample->parsed()) return cmd_sample(rs);
    if (mixing->parsed()) return cmd_mixing(rs);
    if (sweep->parsed()) return cmd_bias_sweep(rs);
    if (verify->parsed()) return cmd_verify(rs, vpanels);
    return fail(kUsage, "usage", "no subcommand given");
  } catch (const ConfigError& e) {
    return fail(kUsage, "config", e.what());
  } catch (const ArgumentError& e) {
    return fail(kUsage, "argument", e.what());
  } catch (const ChainDiverged& e) {
    return fail(kNumerical, "divergence", e.what(),
                {{"step", e.step()}, {"chain", e.partial().chain}, {"steps_done", e.partial().steps_done}});
  } catch (const DivergenceError& e) {
    return fail(kNumerical, "divergence", e.what(), {{"step", e.step()}});
  } catch (const NumericalError& e) {
    return fail(kNumerical, "numerical", e.what());
  } catch (const ConvergenceError& e) {
    return fail(kNumerical, "convergence", e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(kUsage, "config", e.what());
  } catch (const std::exception& e) {
    return fail(kInternal, "internal", e.what());
  }
}
