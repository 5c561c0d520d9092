// dichotomy-lab: numerical toolbox for asymptotically autonomous linear
// delay differential equations. Certifies hyperbolicity of the limiting
// systems, builds Green's functions, solves forced equations, and verifies
// exponential dichotomy bounds. See README.md for the config schema.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>

#include "dlab/config.hpp"
#include "dlab/dichotomy.hpp"
#include "dlab/evolution.hpp"
#include "dlab/green.hpp"
#include "dlab/reports.hpp"
#include "dlab/spectrum.hpp"

namespace {

namespace fs = std::filesystem;
using dlab::json;

struct CliArgs {
  std::string config_path;
  std::string out_dir;
  std::int64_t seed = -1;  // -1: keep the config's seed
};

dlab::RunConfig load_config(const CliArgs& args) {
  std::ifstream in(args.config_path);
  if (!in) throw dlab::IoError("cannot read config: " + args.config_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw dlab::ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  dlab::RunConfig cfg = dlab::parse_config(j);
  if (!args.out_dir.empty()) cfg.output.directory = args.out_dir;
  if (args.seed >= 0) cfg.numerics.seed = static_cast<std::uint64_t>(args.seed);
  return cfg;
}

void write_artifact(const dlab::RunConfig& cfg, const std::string& name,
                    const std::string& body) {
  if (cfg.output.directory.empty()) return;
  std::error_code ec;
  fs::create_directories(cfg.output.directory, ec);
  dlab::write_text_file((fs::path(cfg.output.directory) / name).string(), body);
}

void print_report(const dlab::RunConfig& cfg, const std::string& name, const json& j) {
  const std::string body = j.dump(2) + "\n";
  std::cout << body;
  if (cfg.output.json_reports) write_artifact(cfg, name, body);
}

// ---- pipeline stages ------------------------------------------------------

json cmd_spectrum(const dlab::RunConfig& cfg) {
  return dlab::spectrum_report_json(cfg.system);
}

dlab::GreenKernel build_green(const dlab::RunConfig& cfg, dlab::Branch branch) {
  const dlab::LimitSystem limit = cfg.system.limit(branch);
  const double a0 = dlab::spectral_gap(limit);
  const double t_max = std::min(cfg.numerics.T, 10.0 / a0 + limit.max_delay() + 5.0);
  return dlab::green_autonomous(limit, a0, -t_max, t_max, cfg.numerics.step);
}

json cmd_green(const dlab::RunConfig& cfg) {
  const dlab::GreenKernel g = build_green(cfg, dlab::Branch::Plus);
  if (cfg.output.csv) write_artifact(cfg, "green.csv", dlab::green_csv(g));
  return dlab::green_report_json(g);
}

json cmd_solve(const dlab::RunConfig& cfg) {
  dlab::ForcingSpec forcing = cfg.forcing;
  if (!cfg.has_forcing) {
    forcing.amplitude = Eigen::VectorXd::Ones(cfg.system.dim);
    forcing.center = 0.0;
    forcing.width = 1.0;
  }
  const double r = cfg.system.max_delay();
  const double s = forcing.center - forcing.width - r - 1.0;
  const double t_end = forcing.center + forcing.width + cfg.numerics.horizon;
  const dlab::GridFunction h = dlab::GridFunction::sample(
      s, t_end, cfg.numerics.step, [&](double t) { return forcing.eval(t); });
  const dlab::HistorySegment phi = dlab::HistorySegment::constant(
      s, r, Eigen::VectorXd::Zero(cfg.system.dim), cfg.numerics.m);
  const dlab::Trajectory traj =
      dlab::integrate(cfg.system, s, phi, t_end, &h, cfg.numerics.step);
  if (cfg.output.csv)
    write_artifact(cfg, "trajectory.csv", dlab::trajectory_csv(traj, cfg.numerics.step));

  json rep = {{"schema_version", dlab::kSchemaVersion},
              {"report", "solve"},
              {"t_start", traj.start},
              {"t_end", traj.end},
              {"final_norm", traj.y.back().lpNorm<Eigen::Infinity>()}};
  // Green-kernel cross check on the autonomous subfamily
  if (cfg.system.limits_equal() && cfg.system.perturbation_sup() == 0.0) {
    const dlab::GreenKernel g = build_green(cfg, dlab::Branch::Plus);
    const dlab::ConvolveResult conv = dlab::convolve_solve(g, h);
    double diff = 0.0;
    for (double t = traj.start; t <= traj.end + 1e-12; t += cfg.numerics.step)
      diff = std::max(diff,
                      (traj.eval(t) - conv.x.eval(t)).lpNorm<Eigen::Infinity>());
    rep["green_cross_check_sup"] = diff;
    rep["green_residual_sup"] = conv.residual_sup;
    rep["warnings"] = conv.warnings;
  }
  return rep;
}

json cmd_pairing(const dlab::RunConfig& cfg, int pairs = 20) {
  const double span = 20.0;
  std::mt19937_64 rng(cfg.numerics.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  auto bump_grid = [&](double step) {
    const double c = 8.0 * unif(rng);
    const double w = 3.0 + 2.0 * unif(rng);
    Eigen::VectorXd dir(cfg.system.dim);
    for (int k = 0; k < cfg.system.dim; ++k) dir(k) = unif(rng);
    return [=](double t) -> Eigen::VectorXd {
      const double u = (t - c) / w;
      if (std::abs(u) >= 1.0) return Eigen::VectorXd::Zero(dir.size());
      const double q = 1.0 - u * u;
      return dir * (q * q * q * q);
    };
  };
  json table = json::array();
  for (int p = 0; p < pairs; ++p) {
    const auto fx = bump_grid(cfg.numerics.step);
    const auto fy = bump_grid(cfg.numerics.step);
    double res[2];
    for (int lev = 0; lev < 2; ++lev) {
      const double step = cfg.numerics.step / (lev + 1 == 2 ? 2.0 : 1.0);
      const auto x = dlab::GridFunction::sample(-span, span, step, fx);
      const auto y = dlab::GridFunction::sample(-span, span, step, fy);
      res[lev] = dlab::adjoint_pairing_residual(cfg.system, x, y);
    }
    table.push_back({{"residual", res[0]},
                     {"residual_half_step", res[1]},
                     {"halving_ratio", res[1] > 0.0 ? res[0] / res[1] : 0.0}});
  }
  return {{"schema_version", dlab::kSchemaVersion},
          {"report", "pairing-check"},
          {"pairs", table}};
}

dlab::DichotomyOptions dichotomy_options(const dlab::RunConfig& cfg) {
  dlab::DichotomyOptions opt;
  opt.m = cfg.numerics.m;
  opt.dt = cfg.numerics.step;
  opt.sample_dt = std::max(0.5, cfg.numerics.horizon / 40.0);
  opt.probes = cfg.numerics.probes;
  opt.seed = cfg.numerics.seed;
  opt.domain = {cfg.numerics.T, std::max(cfg.numerics.step, 1.0 / 64.0)};
  return opt;
}

json cmd_dichotomy(const dlab::RunConfig& cfg) {
  dlab::is_asymptotically_hyperbolic(cfg.system);
  const dlab::DichotomyReport rep = dlab::verify_dichotomy(
      cfg.system, {0.0}, cfg.numerics.horizon, dichotomy_options(cfg));
  if (cfg.output.csv) write_artifact(cfg, "decay.csv", dlab::decay_csv(rep));
  return dlab::dichotomy_report_json(rep);
}

json cmd_fredholm(const dlab::RunConfig& cfg) {
  const auto diag = dlab::fredholm_diagnostics(
      cfg.system, {20.0, 1.0 / 8.0}, cfg.numerics.seed);
  json rep = dlab::fredholm_json(diag);
  rep["schema_version"] = dlab::kSchemaVersion;
  rep["report"] = "fredholm";
  return rep;
}

json cmd_all(const dlab::RunConfig& cfg) {
  json checks = json::array();
  auto check = [&](const std::string& name, bool pass, const json& detail) {
    checks.push_back({{"check", name}, {"pass", pass}, {"detail", detail}});
  };

  const json spec = cmd_spectrum(cfg);
  const bool hyper = spec["plus"]["hyperbolic"].get<bool>() &&
                     spec["minus"]["hyperbolic"].get<bool>();
  check("spectrum_hyperbolic", hyper, spec);
  if (!hyper)
    return {{"schema_version", dlab::kSchemaVersion},
            {"report", "all"},
            {"verdict", "not asymptotically hyperbolic"},
            {"checks", checks}};

  const dlab::GreenKernel g = build_green(cfg, dlab::Branch::Plus);
  const json greenj = dlab::green_report_json(g);
  check("green_jump", greenj["jump_error"].get<double>() <= 1e-6, greenj);
  double dom_root = 0.0;
  for (const auto& rt : spec["plus"]["roots"])
    if (dom_root == 0.0 || std::abs(rt["re"].get<double>()) < dom_root)
      dom_root = std::abs(rt["re"].get<double>());
  if (dom_root > 0.0)
    check("green_envelope_rate", std::abs(g.fit_a - dom_root) <= 0.1 * dom_root,
          {{"fit_a", g.fit_a}, {"dominant_root", dom_root}});

  const json solvej = cmd_solve(cfg);
  const bool solve_ok =
      !solvej.contains("green_cross_check_sup") ||
      solvej["green_cross_check_sup"].get<double>() <= 1e-4;
  check("convolve_integrate", solve_ok, solvej);

  const json pairj = cmd_pairing(cfg, 5);
  double worst_pairing = 0.0;
  for (const auto& p : pairj["pairs"])
    worst_pairing = std::max(worst_pairing, p["residual"].get<double>());
  check("pairing", worst_pairing <= 1e-4, pairj);

  const dlab::DichotomyReport rep = dlab::verify_dichotomy(
      cfg.system, {0.0}, cfg.numerics.horizon, dichotomy_options(cfg));
  if (cfg.output.csv) write_artifact(cfg, "decay.csv", dlab::decay_csv(rep));
  const json dichj = dlab::dichotomy_report_json(rep);
  bool proj_ok = true, fwd_ok = true, bwd_ok = true, theory_ok = true;
  for (const auto& at : rep.per_s) {
    proj_ok = proj_ok && at.idempotence_residual <= 1e-3 &&
              at.probe_gamma_ratio <= rep.gamma0.gamma0 &&
              at.commutation_rel <= 1e-2;
    fwd_ok = fwd_ok && at.forward_fit.valid && at.forward_fit.lambda > 0.0;
    if (at.rank_Q > 0)
      bwd_ok = bwd_ok && at.backward_fit.valid && at.backward_fit.lambda > 0.0;
    theory_ok = theory_ok && at.theory_bound_margin <= 1.0;
  }
  check("projection_algebra", proj_ok, dichj["per_s"]);
  check("forward_decay", fwd_ok, dichj["per_s"]);
  check("backward_decay", bwd_ok, dichj["per_s"]);
  check("theory_bound", theory_ok, dichj["per_s"]);
  check("fredholm", rep.fredholm.hypotheses_ok &&
                        rep.fredholm.range_orth_residual <= 1e-6,
        dlab::fredholm_json(rep.fredholm));

  bool all_pass = true;
  for (const auto& c : checks) all_pass = all_pass && c["pass"].get<bool>();
  return {{"schema_version", dlab::kSchemaVersion},
          {"report", "all"},
          {"verdict", rep.verdict},
          {"all_checks_pass", all_pass},
          {"checks", checks}};
}

int dispatch(const std::string& cmd, const CliArgs& args) {
  dlab::RunConfig cfg = load_config(args);
  if (cmd != "all") cfg.command = cmd;
  json rep;
  if (cmd == "spectrum")
    rep = cmd_spectrum(cfg);
  else if (cmd == "green")
    rep = cmd_green(cfg);
  else if (cmd == "solve")
    rep = cmd_solve(cfg);
  else if (cmd == "pairing-check")
    rep = cmd_pairing(cfg);
  else if (cmd == "dichotomy")
    rep = cmd_dichotomy(cfg);
  else if (cmd == "fredholm")
    rep = cmd_fredholm(cfg);
  else
    rep = cmd_all(cfg);
  print_report(cfg, cmd == "pairing-check" ? "pairing.json" : cmd + ".json", rep);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dichotomy-lab: exponential dichotomies for asymptotically "
               "autonomous delay differential equations"};
  app.set_version_flag("--version", std::string("dichotomy-lab schema ") +
                                        dlab::kSchemaVersion);
  app.require_subcommand(0, 1);

  CliArgs args;
  std::string chosen;
  for (const char* name : {"spectrum", "green", "solve", "pairing-check",
                           "dichotomy", "fredholm", "all"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", args.config_path, "JSON config path")->required();
    sub->add_option("--out", args.out_dir, "artifact output directory");
    sub->add_option("--seed", args.seed, "override the config seed");
    sub->callback([&chosen, name] { chosen = name; });
  }

  CLI11_PARSE(app, argc, argv);
  if (chosen.empty()) {
    std::cerr << app.help();
    return 2;
  }
  try {
    return dispatch(chosen, args);
  } catch (const dlab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const dlab::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const dlab::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
