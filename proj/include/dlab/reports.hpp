#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "dlab/config.hpp"
#include "dlab/dichotomy.hpp"
#include "dlab/green.hpp"
#include "dlab/spectrum.hpp"
#include "dlab/system.hpp"

namespace dlab {

/// Fixed-format float for CSV cells: deterministic, round-trippable.
inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline json root_report_json(const RootReport& rep) {
  json roots = json::array();
  for (const auto& r : rep.roots)
    roots.push_back({{"re", r.s.real()},
                     {"im", r.s.imag()},
                     {"residual", r.residual},
                     {"multiplicity", r.multiplicity}});
  return {{"hyperbolic", rep.hyperbolic},
          {"gap", rep.strip_halfwidth},
          {"axis_margin", rep.axis_margin},
          {"scan_window", rep.scan_window},
          {"winding_count", rep.winding_count},
          {"roots", roots},
          {"warnings", rep.warnings}};
}

/// Spectrum report for one limiting system; a non-hyperbolic limit is a
/// finding here, not an error.
inline json spectrum_branch_json(const LimitSystem& limit) {
  try {
    return root_report_json(spectral_gap_report(limit));
  } catch (const NotHyperbolicError& e) {
    return {{"hyperbolic", false},
            {"axis_root_im", e.axis_z()},
            {"error", e.what()}};
  }
}

inline json spectrum_report_json(const DelaySystem& sys) {
  return {{"schema_version", kSchemaVersion},
          {"report", "spectrum"},
          {"plus", spectrum_branch_json(sys.limit(Branch::Plus))},
          {"minus", spectrum_branch_json(sys.limit(Branch::Minus))}};
}

inline json green_report_json(const GreenKernel& g) {
  const Eigen::MatrixXd jump_err =
      g.jump - Eigen::MatrixXd::Identity(g.dim(), g.dim());
  return {{"schema_version", kSchemaVersion},
          {"report", "green"},
          {"t_min", g.t_min},
          {"t_max", g.t_max()},
          {"step", g.step},
          {"contour_a0", g.contour_a0},
          {"fit_K", g.fit_K},
          {"fit_a", g.fit_a},
          {"envelope_K0", g.envelope_K0},
          {"jump_error", jump_err.cwiseAbs().maxCoeff()},
          {"warnings", g.warnings}};
}

inline json fit_json(const ExponentialFit& f) {
  return {{"D", f.D}, {"lambda", f.lambda}, {"samples_used", f.used}, {"valid", f.valid}};
}

inline json gamma0_json(const Gamma0Estimate& g) {
  return {{"gamma0", g.gamma0},
          {"beta", g.beta},
          {"inv_norm", g.inv_norm},
          {"l", g.l},
          {"lambda_theory", g.lambda_theory},
          {"low_confidence", !g.converged}};
}

inline json fredholm_json(const FredholmDiagnostics& f) {
  return {{"dim_ker", f.dim_ker},
          {"dim_ker_adjoint", f.dim_ker_adjoint},
          {"index", f.index},
          {"range_orth_residual", f.range_orth_residual},
          {"smin_rel", f.smin_rel},
          {"smin_rel_adjoint", f.smin_rel_adjoint},
          {"hypotheses_ok", f.hypotheses_ok}};
}

inline json dichotomy_report_json(const DichotomyReport& rep) {
  json per_s = json::array();
  for (const auto& at : rep.per_s) {
    per_s.push_back({{"s", at.s},
                     {"rank_P", at.rank_P},
                     {"rank_Q", at.rank_Q},
                     {"idempotence_residual", at.idempotence_residual},
                     {"commutation_rel", at.commutation_rel},
                     {"q_condition", at.q_condition},
                     {"probe_gamma_ratio", at.probe_gamma_ratio},
                     {"theory_bound_margin", at.theory_bound_margin},
                     {"forward_fit", fit_json(at.forward_fit)},
                     {"backward_fit", fit_json(at.backward_fit)}});
  }
  return {{"schema_version", kSchemaVersion},
          {"report", "dichotomy"},
          {"verdict", rep.verdict},
          {"gamma0", gamma0_json(rep.gamma0)},
          {"fredholm", fredholm_json(rep.fredholm)},
          {"per_s", per_s},
          {"warnings", rep.warnings}};
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << body;
  if (!out.good()) throw IoError("write failed: " + path);
}

/// CSV decay curves: ts,norm,envelope,component with component in {P, Q}.
inline std::string decay_csv(const DichotomyReport& rep) {
  std::string out = "ts,norm,envelope,component\n";
  auto emit = [&](const std::vector<DecaySample>& curve, const ExponentialFit& fit,
                  const char* comp) {
    for (const auto& p : curve) {
      const double env = fit.valid ? fit.D * std::exp(-fit.lambda * p.ts) : 0.0;
      out += csv_num(p.ts) + "," + csv_num(p.norm) + "," + csv_num(env) + "," +
             comp + "\n";
    }
  };
  for (const auto& at : rep.per_s) {
    emit(at.forward_curve, at.forward_fit, "P");
    emit(at.backward_curve, at.backward_fit, "Q");
  }
  return out;
}

inline void emit_decay_csv(const DichotomyReport& rep, const std::string& path) {
  write_text_file(path, decay_csv(rep));
}

/// CSV of G_0: t then the n^2 entries row-major.
inline std::string green_csv(const GreenKernel& g) {
  std::string out = "t";
  for (int r = 0; r < g.dim(); ++r)
    for (int c = 0; c < g.dim(); ++c)
      out += ",g" + std::to_string(r) + std::to_string(c);
  out += "\n";
  for (int i = 0; i < g.size(); ++i) {
    out += csv_num(g.grid_t(i));
    for (int r = 0; r < g.dim(); ++r)
      for (int c = 0; c < g.dim(); ++c) out += "," + csv_num(g.samples[i](r, c));
    out += "\n";
  }
  return out;
}

/// CSV trajectory: t, x1..xn.
inline std::string trajectory_csv(const Trajectory& traj, double sample_step) {
  std::string out = "t";
  for (int c = 0; c < traj.dim(); ++c) out += ",x" + std::to_string(c + 1);
  out += "\n";
  for (double t = traj.start; t <= traj.end + 1e-12; t += sample_step) {
    out += csv_num(t);
    const Eigen::VectorXd x = traj.eval(t);
    for (int c = 0; c < traj.dim(); ++c) out += "," + csv_num(x(c));
    out += "\n";
  }
  return out;
}

}  // namespace dlab
