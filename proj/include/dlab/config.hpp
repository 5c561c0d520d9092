#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <vector>

#include "dlab/errors.hpp"
#include "dlab/system.hpp"

namespace dlab {

inline constexpr const char* kSchemaVersion = "1.0.0";

using json = nlohmann::ordered_json;

/// Optional forcing term for the `solve` pipeline: a smooth bump
/// amplitude * (1 - u^2)^3 with u = (t - center)/width.
struct ForcingSpec {
  Eigen::VectorXd amplitude;
  double center = 0.0;
  double width = 1.0;

  Eigen::VectorXd eval(double t) const {
    const double u = (t - center) / width;
    if (std::abs(u) >= 1.0) return Eigen::VectorXd::Zero(amplitude.size());
    const double w = 1.0 - u * u;
    return amplitude * (w * w * w);
  }
};

struct NumericsConfig {
  double step = 1.0 / 64.0;
  double T = 50.0;
  int m = 0;              // 0: derive 64 * max(1, r_N) after the system loads
  double horizon = 0.0;   // 0: derive 20 * max(1, r_N)
  int probes = 256;
  std::uint64_t seed = 42;
};

struct OutputConfig {
  std::string directory;
  bool csv = true;
  bool json_reports = true;
};

struct RunConfig {
  DelaySystem system;
  std::string command = "all";
  NumericsConfig numerics;
  OutputConfig output;
  ForcingSpec forcing;
  bool has_forcing = false;
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                           const std::string& path) {
  if (!obj.is_object()) throw ConfigError(path + " must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key))
      throw ConfigError("unknown key " + path + "." + key);
}

inline Eigen::MatrixXd parse_matrix(const json& j, int n, const std::string& path) {
  Eigen::MatrixXd m(n, n);
  if (!j.is_array()) throw ConfigError(path + " must be an array");
  if (j.size() == static_cast<size_t>(n) && n > 0 && j.front().is_array()) {
    for (int r = 0; r < n; ++r) {
      if (!j[r].is_array() || j[r].size() != static_cast<size_t>(n))
        throw ConfigError(path + " rows must have length " + std::to_string(n));
      for (int c = 0; c < n; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
  }
  if (j.size() != static_cast<size_t>(n) * n)
    throw ConfigError(path + " must be " + std::to_string(n) + "x" +
                      std::to_string(n) + " (nested rows or flat row-major)");
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) m(r, c) = j[r * n + c].get<double>();
  return m;
}

inline Eigen::VectorXd parse_vector(const json& j, int n, const std::string& path) {
  if (!j.is_array() || j.size() != static_cast<size_t>(n))
    throw ConfigError(path + " must be an array of length " + std::to_string(n));
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = j[i].get<double>();
  return v;
}

inline PerturbationProfile parse_perturbation(const json& j, int n,
                                              const std::string& path) {
  reject_unknown(j, {"kind", "amplitude", "rate", "width", "center"}, path);
  PerturbationProfile p = PerturbationProfile::zero(n);
  const std::string kind = j.value("kind", "zero");
  if (kind == "zero") {
    if (j.contains("amplitude"))
      p.amplitude = parse_matrix(j["amplitude"], n, path + ".amplitude");
    return PerturbationProfile::zero(n);
  }
  if (kind == "rational_decay")
    p.kind = ProfileKind::RationalDecay;
  else if (kind == "exponential_decay")
    p.kind = ProfileKind::ExponentialDecay;
  else if (kind == "compact_bump")
    p.kind = ProfileKind::CompactBump;
  else
    throw ConfigError(path + ".kind: unknown perturbation kind '" + kind + "'");
  if (!j.contains("amplitude"))
    throw ConfigError(path + ".amplitude is required for kind '" + kind + "'");
  p.amplitude = parse_matrix(j["amplitude"], n, path + ".amplitude");
  p.rate = j.value("rate", 1.0);
  p.width = j.value("width", 1.0);
  p.center = j.value("center", 0.0);
  return p;
}

}  // namespace detail

inline DelaySystem parse_system(const json& j, const std::string& path = "system") {
  detail::reject_unknown(
      j, {"dim", "delays", "limit_plus", "limit_minus", "perturbations"}, path);
  DelaySystem sys;
  if (!j.contains("dim") || !j["dim"].is_number_integer())
    throw ConfigError(path + ".dim must be a positive integer");
  sys.dim = j["dim"].get<int>();
  if (sys.dim <= 0) throw ConfigError(path + ".dim must be a positive integer");
  if (!j.contains("delays") || !j["delays"].is_array())
    throw ConfigError(path + ".delays must be an array");
  for (const auto& d : j["delays"]) sys.delays.push_back(d.get<double>());

  auto parse_list = [&](const char* key) {
    std::vector<Eigen::MatrixXd> out;
    if (!j.contains(key) || !j[key].is_array())
      throw ConfigError(path + "." + key + " must be an array of matrices");
    int idx = 0;
    for (const auto& m : j[key])
      out.push_back(detail::parse_matrix(
          m, sys.dim, path + "." + key + "[" + std::to_string(idx++) + "]"));
    return out;
  };
  sys.limit_plus = parse_list("limit_plus");
  sys.limit_minus = j.contains("limit_minus") ? parse_list("limit_minus")
                                              : sys.limit_plus;

  if (j.contains("perturbations")) {
    int idx = 0;
    for (const auto& p : j["perturbations"])
      sys.perturbations.push_back(detail::parse_perturbation(
          p, sys.dim, path + ".perturbations[" + std::to_string(idx++) + "]"));
  } else {
    for (size_t k = 0; k < sys.delays.size(); ++k)
      sys.perturbations.push_back(PerturbationProfile::zero(sys.dim));
  }
  sys.validate();
  return sys;
}

inline RunConfig parse_config(const json& j) {
  detail::reject_unknown(
      j, {"system", "command", "numerics", "output", "forcing"}, "config");
  RunConfig cfg;
  if (!j.contains("system")) throw ConfigError("config.system is required");
  cfg.system = parse_system(j["system"]);

  if (j.contains("command")) {
    cfg.command = j["command"].get<std::string>();
    static const std::set<std::string> cmds{"spectrum", "green",    "solve",
                                            "pairing-check", "dichotomy",
                                            "fredholm", "all"};
    if (!cmds.count(cfg.command))
      throw ConfigError("config.command: unknown command '" + cfg.command + "'");
  }

  if (j.contains("numerics")) {
    const auto& nj = j["numerics"];
    detail::reject_unknown(nj, {"step", "T", "m", "horizon", "probes", "seed"},
                           "config.numerics");
    cfg.numerics.step = nj.value("step", cfg.numerics.step);
    cfg.numerics.T = nj.value("T", cfg.numerics.T);
    cfg.numerics.m = nj.value("m", 0);
    cfg.numerics.horizon = nj.value("horizon", 0.0);
    cfg.numerics.probes = nj.value("probes", cfg.numerics.probes);
    cfg.numerics.seed = nj.value("seed", cfg.numerics.seed);
    if (!(cfg.numerics.step > 0.0)) throw ConfigError("config.numerics.step must be > 0");
    if (!(cfg.numerics.T > 0.0)) throw ConfigError("config.numerics.T must be > 0");
    if (cfg.numerics.probes <= 0) throw ConfigError("config.numerics.probes must be > 0");
  }
  const double r_unit = std::max(1.0, cfg.system.max_delay());
  if (cfg.numerics.m <= 0)
    cfg.numerics.m = static_cast<int>(64.0 * r_unit);
  // delay-free systems have point histories; extra nodes would only
  // duplicate the state
  if (cfg.system.max_delay() == 0.0) cfg.numerics.m = 0;
  if (cfg.numerics.horizon <= 0.0) cfg.numerics.horizon = 20.0 * r_unit;

  if (j.contains("output")) {
    const auto& oj = j["output"];
    detail::reject_unknown(oj, {"directory", "csv", "json"}, "config.output");
    cfg.output.directory = oj.value("directory", std::string());
    cfg.output.csv = oj.value("csv", true);
    cfg.output.json_reports = oj.value("json", true);
  }

  if (j.contains("forcing")) {
    const auto& fj = j["forcing"];
    detail::reject_unknown(fj, {"kind", "amplitude", "center", "width"},
                           "config.forcing");
    if (fj.value("kind", "bump") != std::string("bump"))
      throw ConfigError("config.forcing.kind: only 'bump' is supported");
    if (!fj.contains("amplitude"))
      throw ConfigError("config.forcing.amplitude is required");
    cfg.forcing.amplitude =
        detail::parse_vector(fj["amplitude"], cfg.system.dim, "config.forcing.amplitude");
    cfg.forcing.center = fj.value("center", 0.0);
    cfg.forcing.width = fj.value("width", 1.0);
    if (!(cfg.forcing.width > 0.0))
      throw ConfigError("config.forcing.width must be > 0");
    cfg.has_forcing = true;
  }
  return cfg;
}

}  // namespace dlab
