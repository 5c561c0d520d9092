#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dlab/errors.hpp"
#include "dlab/weights.hpp"

namespace dlab {

/// Which limiting autonomous system anchors a computation.
enum class Branch { Plus, Minus };

inline const char* branch_name(Branch b) {
  return b == Branch::Plus ? "plus" : "minus";
}

enum class ProfileKind { Zero, RationalDecay, ExponentialDecay, CompactBump };

/// One perturbation coefficient C_j(t): a decaying matrix-valued profile.
struct PerturbationProfile {
  ProfileKind kind = ProfileKind::Zero;
  Eigen::MatrixXd amplitude;  // n x n, unused for Zero
  double rate = 1.0;          // exponential_decay
  double width = 1.0;         // compact_bump half-width
  double center = 0.0;        // compact_bump center

  static PerturbationProfile zero(int n) {
    PerturbationProfile p;
    p.kind = ProfileKind::Zero;
    p.amplitude = Eigen::MatrixXd::Zero(n, n);
    return p;
  }

  Eigen::MatrixXd eval(double t) const {
    switch (kind) {
      case ProfileKind::Zero:
        return Eigen::MatrixXd::Zero(amplitude.rows(), amplitude.cols());
      case ProfileKind::RationalDecay:
        return amplitude / (1.0 + t * t);
      case ProfileKind::ExponentialDecay:
        return amplitude * std::exp(-rate * std::abs(t));
      case ProfileKind::CompactBump: {
        const double u = (t - center) / width;
        if (std::abs(u) >= 1.0)
          return Eigen::MatrixXd::Zero(amplitude.rows(), amplitude.cols());
        // C^2 bump vanishing with two derivatives at the cutoff
        const double w = 1.0 - u * u;
        return amplitude * (w * w * w);
      }
    }
    throw NumericError("PerturbationProfile: unknown kind");
  }

  /// sup over a dense sample of the operator (2-)norm.
  double sup_norm(double horizon = 50.0) const {
    if (kind == ProfileKind::Zero) return 0.0;
    double s = 0.0;
    const int samples = 2000;
    for (int i = 0; i <= samples; ++i) {
      const double t = -horizon + 2.0 * horizon * i / samples;
      s = std::max(s, eval(t).operatorNorm());
    }
    // all shipped profiles peak at their center / at t = 0
    s = std::max(s, eval(center).operatorNorm());
    return s;
  }
};

/// A limiting autonomous system: x'(t) = sum_j A_j x(t - r_j).
struct LimitSystem {
  int dim = 0;
  std::vector<double> delays;
  std::vector<Eigen::MatrixXd> matrices;

  double max_delay() const { return delays.empty() ? 0.0 : delays.back(); }
};

/// An asymptotically autonomous DDE: L(t) = L_{limit} + M(t), with
/// M(t)phi = sum_j C_j(t) phi(-r_j) and possibly different limits at +-inf.
struct DelaySystem {
  int dim = 0;
  std::vector<double> delays;  // r_0 = 0 < r_1 < ... < r_N
  std::vector<Eigen::MatrixXd> limit_plus;
  std::vector<Eigen::MatrixXd> limit_minus;
  std::vector<PerturbationProfile> perturbations;

  int num_delays() const { return static_cast<int>(delays.size()); }
  double max_delay() const { return delays.empty() ? 0.0 : delays.back(); }

  void validate() const {
    if (dim <= 0) throw ConfigError("system.dim must be a positive integer");
    if (delays.empty() || delays.front() != 0.0)
      throw ConfigError("system.delays must start with r_0 = 0");
    for (size_t j = 1; j < delays.size(); ++j)
      if (!(delays[j] > delays[j - 1]))
        throw ConfigError("system.delays must be strictly increasing");
    auto check_list = [&](const std::vector<Eigen::MatrixXd>& ms,
                          const char* name) {
      if (ms.size() != delays.size())
        throw ConfigError(std::string("system.") + name +
                          " must have one matrix per delay");
      for (const auto& m : ms) {
        if (m.rows() != dim || m.cols() != dim)
          throw ConfigError(std::string("system.") + name +
                            " matrices must be dim x dim");
        if (!m.allFinite())
          throw ConfigError(std::string("system.") + name +
                            " matrices must be finite");
      }
    };
    check_list(limit_plus, "limit_plus");
    check_list(limit_minus, "limit_minus");
    if (perturbations.size() != delays.size())
      throw ConfigError("system.perturbations must have one entry per delay");
    for (const auto& p : perturbations) {
      if (p.amplitude.rows() != dim || p.amplitude.cols() != dim)
        throw ConfigError("perturbation amplitude must be dim x dim");
      if (p.kind != ProfileKind::Zero && !(p.width > 0.0))
        throw ConfigError("perturbation width must be positive");
      if (p.kind == ProfileKind::ExponentialDecay && !(p.rate > 0.0))
        throw ConfigError("perturbation rate must be positive");
      // decay check: finite everywhere sampled, vanishing at the horizon
      const double horizon = 1e6;
      for (double t : {-horizon, -10.0, 0.0, 10.0, horizon})
        if (!p.eval(t).allFinite())
          throw ConfigError("perturbation profile not finite");
      if (p.eval(horizon).operatorNorm() > 1e-6 * (1.0 + p.sup_norm()) ||
          p.eval(-horizon).operatorNorm() > 1e-6 * (1.0 + p.sup_norm()))
        throw ConfigError("perturbation profile must vanish as t -> +-inf");
    }
  }

  LimitSystem limit(Branch b) const {
    return {dim, delays, b == Branch::Plus ? limit_plus : limit_minus};
  }

  bool limits_equal(double tol = 0.0) const {
    for (size_t j = 0; j < delays.size(); ++j)
      if ((limit_plus[j] - limit_minus[j]).cwiseAbs().maxCoeff() > tol)
        return false;
    return true;
  }

  /// A_j(t) = A_{branch,j} + C_j(t), anchored at one limiting system.
  std::vector<Eigen::MatrixXd> coefficients_at(double t, Branch branch) const {
    if (!std::isfinite(t)) throw NumericError("coefficients_at: t not finite");
    const auto& base = branch == Branch::Plus ? limit_plus : limit_minus;
    std::vector<Eigen::MatrixXd> out;
    out.reserve(delays.size());
    for (size_t j = 0; j < delays.size(); ++j)
      out.push_back(base[j] + perturbations[j].eval(t));
    return out;
  }

  /// Whole-line coefficient A_j(t). With equal limits this is the limit
  /// matrix plus C_j(t); otherwise the two limits are joined by a smooth
  /// tanh ramp so the system stays asymptotically autonomous at both ends.
  Eigen::MatrixXd coeff(int j, double t) const {
    if (limits_equal()) return limit_plus[j] + perturbations[j].eval(t);
    const double s = 0.5 * (1.0 + std::tanh(t));
    return limit_minus[j] + s * (limit_plus[j] - limit_minus[j]) +
           perturbations[j].eval(t);
  }

  /// Sampled sup_t of sum_j |C_j(t)| (operator norms), the epsilon of the
  /// small-gain condition.
  double perturbation_sup(double horizon = 50.0) const {
    double best = 0.0;
    const int samples = 4000;
    for (int i = 0; i <= samples; ++i) {
      const double t = -horizon + 2.0 * horizon * i / samples;
      double s = 0.0;
      for (const auto& p : perturbations) s += p.eval(t).operatorNorm();
      best = std::max(best, s);
    }
    return best;
  }

  /// beta = sum_j sup_t |A_j(t)|, the sampled bound on ||L(t)||.
  double coefficient_sup(double horizon = 50.0) const {
    double beta = 0.0;
    for (int j = 0; j < num_delays(); ++j) {
      double s = 0.0;
      const int samples = 2000;
      for (int i = 0; i <= samples; ++i) {
        const double t = -horizon + 2.0 * horizon * i / samples;
        s = std::max(s, coeff(j, t).operatorNorm());
      }
      beta += s;
    }
    return beta;
  }
};

}  // namespace dlab
