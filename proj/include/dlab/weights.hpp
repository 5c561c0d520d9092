#pragma once

#include <cmath>
#include <utility>

#include "dlab/errors.hpp"

namespace dlab {

// Weight machinery of the finite measure dmu = dt / (1 + t^2):
//   omega(t) = (1 + t^2)^-1
//   k(t)     = omega'(t) / omega(t) = -2t / (1 + t^2)
//   shift factors M_j^{+-}(t) = (1 + t^2) / (1 + (t +- r_j)^2)
// These satisfy omega' = k * omega and omega(t +- r_j) = M_j^{+-}(t) omega(t)
// in closed form.

inline double omega(double t) { return 1.0 / (1.0 + t * t); }

inline double omega_log_derivative(double t) { return -2.0 * t / (1.0 + t * t); }

struct WeightEval {
  double omega;
  double k;
};

inline WeightEval weight_eval(double t) {
  if (!std::isfinite(t)) throw NumericError("weight_eval: t must be finite");
  return {omega(t), omega_log_derivative(t)};
}

/// M_j^{+-}(t) for a delay r_j. sign >= 0 selects the '+' factor.
inline double shift_factor(double t, double r_j, int sign) {
  const double u = (sign >= 0) ? t + r_j : t - r_j;
  return (1.0 + t * t) / (1.0 + u * u);
}

}  // namespace dlab
