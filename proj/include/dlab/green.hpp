#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <string>
#include <vector>

#include "dlab/errors.hpp"
#include "dlab/spectrum.hpp"
#include "dlab/system.hpp"

namespace dlab {

/// R(z) = Delta^{-1}(z) - (z+1)^{-1} I, the decaying remainder of the
/// resolvent after subtracting the slow (z+1)^{-1} part. Computed by a
/// direct linear solve.
inline Eigen::MatrixXcd resolvent_remainder(const LimitSystem& sys, Complex z) {
  const Eigen::MatrixXcd d = char_matrix(sys, z);
  if (smallest_singular_value(d) <= 1e-12)
    throw NumericError("resolvent_remainder: Delta(z) singular near z=(" +
                       std::to_string(z.real()) + "," + std::to_string(z.imag()) + ")");
  Eigen::MatrixXcd inv =
      d.partialPivLu().solve(Eigen::MatrixXcd::Identity(sys.dim, sys.dim));
  inv -= Eigen::MatrixXcd::Identity(sys.dim, sys.dim) / (z + 1.0);
  return inv;
}

namespace detail {

// Second-order remainder R2(z) = Delta^{-1}(z) - (z+1)^{-1} I
//                               - (I - S(z)) (z+1)^{-2},
// with S(z) = -sum_j A_j e^{-r_j z}. R2 decays like |Im z|^{-3} on vertical
// lines inside the root-free strip, which makes the truncated contour
// quadrature converge fast; the subtracted parts are inverted in closed form.
inline Eigen::MatrixXcd resolvent_remainder2(const LimitSystem& sys, Complex z) {
  const Eigen::MatrixXcd d = char_matrix(sys, z);
  Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(sys.dim, sys.dim);
  for (size_t j = 0; j < sys.delays.size(); ++j)
    s -= sys.matrices[j].cast<Complex>() * std::exp(-z * sys.delays[j]);
  const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(sys.dim, sys.dim);
  Eigen::MatrixXcd r = d.partialPivLu().solve(eye);
  r -= eye / (z + 1.0);
  r -= (eye - s) / ((z + 1.0) * (z + 1.0));
  return r;
}

// Closed-form inverse transform of the subtracted parts, supported on t >= 0:
//   (z+1)^{-1}           -> e^{-t} I
//   (z+1)^{-2}           -> t e^{-t} I
//   A_j e^{-r_j z}(z+1)^{-2} -> A_j (t-r_j) e^{-(t-r_j)} 1_{t >= r_j}
inline Eigen::MatrixXd analytic_part(const LimitSystem& sys, double t) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(sys.dim, sys.dim);
  if (t < 0.0) return g;
  g += (1.0 + t) * std::exp(-t) * Eigen::MatrixXd::Identity(sys.dim, sys.dim);
  for (size_t j = 0; j < sys.delays.size(); ++j) {
    const double u = t - sys.delays[j];
    if (u >= 0.0) g += sys.matrices[j] * (u * std::exp(-u));
  }
  return g;
}

}  // namespace detail

/// Least-squares exponential envelope of sampled |G|: returns (K, a) with
/// a the fitted decay rate and K inflated so |G(t)| <= K e^{-a|t|} holds at
/// every retained node. Fits block maxima of log|G| over unit bins of |t| so
/// oscillatory kernels do not bias the slope.
inline std::pair<double, double> fit_exponential_bound(
    const std::vector<double>& ts, const std::vector<double>& norms) {
  if (ts.size() != norms.size() || ts.empty())
    throw NumericError("fit_exponential_bound: bad samples");
  const double peak = *std::max_element(norms.begin(), norms.end());
  if (peak <= 0.0) throw NumericError("fit_exponential_bound: all-zero samples");
  std::map<int, std::pair<double, double>> bins;  // bin -> (|t| at max, max)
  for (size_t i = 0; i < ts.size(); ++i) {
    if (norms[i] <= 1e-10 * peak) continue;
    const double at = std::abs(ts[i]);
    const int b = static_cast<int>(std::floor(at));
    auto it = bins.find(b);
    if (it == bins.end() || norms[i] > it->second.second)
      bins[b] = {at, norms[i]};
  }
  if (bins.size() < 2)
    throw NumericError("fit_exponential_bound: degenerate fit (too few decaying samples)");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [b, v] : bins) {
    const double x = v.first, y = std::log(v.second);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(bins.size());
  const double denom = m * sxx - sx * sx;
  if (std::abs(denom) < 1e-30)
    throw NumericError("fit_exponential_bound: degenerate fit");
  const double slope = (m * sxy - sx * sy) / denom;
  const double a = -slope;
  double K = 0.0;
  for (size_t i = 0; i < ts.size(); ++i) {
    if (norms[i] <= 1e-10 * peak) continue;
    K = std::max(K, norms[i] * std::exp(a * std::abs(ts[i])));
  }
  return {K, a};
}

/// Sampled autonomous Green's function G_0 with its exponential envelope.
struct GreenKernel {
  LimitSystem system;                   // the limit it inverts
  double t_min = 0.0;
  double step = 0.0;
  std::vector<Eigen::MatrixXd> samples; // node at t = 0 stores the jump average
  Eigen::MatrixXd jump;                 // G_0(0+) - G_0(0-)
  double fit_K = 0.0;                   // free envelope fit
  double fit_a = 0.0;
  double envelope_K0 = 0.0;             // K_0 with the contour rate a_0
  double contour_a0 = 0.0;
  std::vector<std::string> warnings;

  int dim() const { return system.dim; }
  int size() const { return static_cast<int>(samples.size()); }
  double grid_t(int i) const { return t_min + i * step; }
  double t_max() const { return t_min + step * (size() - 1); }

  /// Linear interpolation; zero outside the sampled window (the kernel has
  /// decayed below resolution there).
  Eigen::MatrixXd eval(double t) const {
    if (t < t_min || t > t_max()) return Eigen::MatrixXd::Zero(dim(), dim());
    double u = (t - t_min) / step;
    int i = std::max(0, std::min(static_cast<int>(std::floor(u)),
                                 static_cast<int>(samples.size()) - 2));
    const double w = u - i;
    return (1.0 - w) * samples[i] + w * samples[i + 1];
  }

  std::vector<double> sample_norms() const {
    std::vector<double> out(samples.size());
    for (size_t i = 0; i < samples.size(); ++i)
      out[i] = samples[i].cwiseAbs().maxCoeff();
    return out;
  }
};

/// Builds G_0 on a uniform grid by contour-shifted inverse Fourier
/// quadrature: the analytic part is inverted in closed form and the
/// remainder integrated by trapezoid along Re z = -+ a_0.
///   t > 0: G_0(t) = f(t) + e^{-a0 t}/(2 pi) * int e^{ity} R2(-a0+iy) dy
///   t < 0: G_0(t) =        e^{+a0 t}/(2 pi) * int e^{ity} R2(+a0+iy) dy
/// The grid is snapped so t = 0 is a node; that node stores the average of
/// the one-sided limits and the jump is recorded separately.
inline GreenKernel green_autonomous(const LimitSystem& sys, double a0,
                                    double t_min, double t_max, double step,
                                    double z_max = 0.0) {
  if (!(a0 > 0.0 && a0 < 1.0))
    throw PreconditionError("green_autonomous: need a certified strip half-width 0 < a0 < 1");
  if (!(t_min < 0.0 && t_max > 0.0 && step > 0.0))
    throw NumericError("green_autonomous: grid must straddle 0");
  if (z_max == 0.0) z_max = 200.0 / a0;
  if (z_max < std::max(50.0, 10.0 / a0))
    throw PreconditionError("green_autonomous: z_max too small");

  // snap grid so 0 is a node
  const int below = static_cast<int>(std::ceil(-t_min / step - 1e-12));
  const int above = static_cast<int>(std::ceil(t_max / step - 1e-12));
  t_min = -below * step;
  const int nodes = below + above + 1;

  const double tabs = std::max(std::abs(t_min), t_min + (nodes - 1) * step);
  // the trapezoid aliases images of the kernel shifted by 2*pi/hz; those
  // images decay at the distance from the contour to the nearest
  // singularity of the integrand: at least a0/9 for characteristic roots
  // (by construction of the certified strip) and 1 - a0 for the
  // subtraction point z = -1. Capping hz at a fifth of that clearance
  // pushes the aliasing error below ~1e-10.
  const double clearance = std::min(a0 / 9.0, 1.0 - a0);
  const double hz = std::min(M_PI / (8.0 * std::max(1.0, tabs)), clearance / 5.0);
  const int half = static_cast<int>(std::ceil(z_max / hz));

  // precompute R2 along both contours
  std::vector<Eigen::MatrixXcd> r_minus(2 * half + 1), r_plus(2 * half + 1);
  for (int k = -half; k <= half; ++k) {
    const double y = k * hz;
    r_minus[k + half] = detail::resolvent_remainder2(sys, Complex(-a0, y));
    r_plus[k + half] = detail::resolvent_remainder2(sys, Complex(a0, y));
  }

  auto contour_sum = [&](const std::vector<Eigen::MatrixXcd>& r, double t) {
    // sum_k e^{i t y_k} R2_k * hz / (2 pi), by incremental rotation
    Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(sys.dim, sys.dim);
    const Complex rot = std::exp(Complex(0.0, t * hz));
    Complex phase = std::exp(Complex(0.0, t * (-half) * hz));
    for (int k = 0; k < 2 * half + 1; ++k) {
      const double w = (k == 0 || k == 2 * half) ? 0.5 : 1.0;
      acc += (w * phase) * r[k];
      phase *= rot;
    }
    return Eigen::MatrixXd((acc * (hz / (2.0 * M_PI))).real());
  };

  GreenKernel g;
  g.system = sys;
  g.t_min = t_min;
  g.step = step;
  g.contour_a0 = a0;
  g.samples.resize(nodes);
  Eigen::MatrixXd g0_plus, g0_minus;
  for (int i = 0; i < nodes; ++i) {
    const double t = t_min + i * step;
    if (i == below) {
      g0_plus = detail::analytic_part(sys, 0.0) + contour_sum(r_minus, 0.0);
      g0_minus = contour_sum(r_plus, 0.0);
      g.samples[i] = 0.5 * (g0_plus + g0_minus);
    } else if (t > 0.0) {
      g.samples[i] =
          detail::analytic_part(sys, t) + std::exp(-a0 * t) * contour_sum(r_minus, t);
    } else {
      g.samples[i] = std::exp(a0 * t) * contour_sum(r_plus, t);
    }
  }
  g.jump = g0_plus - g0_minus;

  // truncation tail estimate: |R2| ~ C/y^3 so the dropped tail is about
  // |R2(z_max)| * z_max / 2 on each side
  const double tail =
      std::max(r_minus.back().cwiseAbs().maxCoeff(), r_plus.back().cwiseAbs().maxCoeff()) *
      z_max / (2.0 * M_PI);
  if (tail > 1e-5)
    g.warnings.push_back("quadrature tail estimate " + std::to_string(tail) +
                         " exceeds 1e-5; increase z_max");

  std::vector<double> ts(nodes);
  for (int i = 0; i < nodes; ++i) ts[i] = g.grid_t(i);
  const auto norms = g.sample_norms();
  const auto [K, a] = fit_exponential_bound(ts, norms);
  g.fit_K = K;
  g.fit_a = a;
  double K0 = 0.0;
  for (int i = 0; i < nodes; ++i)
    K0 = std::max(K0, norms[i] * std::exp(a0 * std::abs(ts[i])));
  g.envelope_K0 = K0;
  return g;
}

inline std::pair<double, double> fit_exponential_bound(const GreenKernel& g) {
  std::vector<double> ts(g.size());
  for (int i = 0; i < g.size(); ++i) ts[i] = g.grid_t(i);
  return fit_exponential_bound(ts, g.sample_norms());
}

/// Gamma(t,z) = sum_j C_j(t) G_0(t - r_j - z), the first iterated kernel.
inline Eigen::MatrixXd perturbed_kernel_gamma(const DelaySystem& sys,
                                              const GreenKernel& g0, double t,
                                              double z) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(sys.dim, sys.dim);
  for (int j = 0; j < sys.num_delays(); ++j)
    out += sys.perturbations[j].eval(t) * g0.eval(t - sys.delays[j] - z);
  return out;
}

/// epsilon must stay below a0 e^{-a0 r_N} / (2 K0) for the Neumann series
/// constants to contract.
inline double small_gain_threshold(double a0, double K0, double r_max) {
  return a0 * std::exp(-a0 * r_max) / (2.0 * K0);
}

/// The perturbed kernel G(t,z) with its Neumann-series bookkeeping. The
/// sampled kernels live on one shared uniform grid for both arguments;
/// K(t_i, z_k) is stored as the n x n block (i,k) of a dense matrix.
struct PerturbedKernel {
  double grid_min = 0.0;
  double grid_step = 0.0;
  int grid_nodes = 0;
  int dim = 0;
  Eigen::MatrixXd total;                 // blocks of G(t_i, z_k)
  std::vector<double> term_sup_norms;    // sup |Gamma_j| per order
  double ratio = 0.0;                    // measured geometric decay of terms
  double K1 = 0.0, a1 = 0.0, K2 = 0.0;   // predicted constants
  double fit_K = 0.0, fit_a = 0.0;       // envelope fit of the total kernel
  std::vector<std::string> warnings;

  double grid_t(int i) const { return grid_min + i * grid_step; }

  Eigen::MatrixXd block(int i, int k) const {
    return total.block(i * dim, k * dim, dim, dim);
  }

  /// Bilinear interpolation in (t, z); zero outside the sampled square.
  Eigen::MatrixXd eval(double t, double z) const {
    const double hi = grid_min + grid_step * (grid_nodes - 1);
    if (t < grid_min || t > hi || z < grid_min || z > hi)
      return Eigen::MatrixXd::Zero(dim, dim);
    auto locate = [&](double x, int& i, double& w) {
      double u = (x - grid_min) / grid_step;
      i = std::max(0, std::min(static_cast<int>(std::floor(u)), grid_nodes - 2));
      w = u - i;
    };
    int it, iz;
    double wt, wz;
    locate(t, it, wt);
    locate(z, iz, wz);
    return (1 - wt) * (1 - wz) * block(it, iz) + wt * (1 - wz) * block(it + 1, iz) +
           (1 - wt) * wz * block(it, iz + 1) + wt * wz * block(it + 1, iz + 1);
  }
};

/// Builds G(t,z) = G_0(t-z) + int G_0(t-s) (sum_j Gamma_j(s,z)) ds by the
/// Neumann series up to order J, with Gamma_{j+1}(t,z) = int Gamma(t,s)
/// Gamma_j(s,z) ds (trapezoid on the shared grid). Preconditions: the
/// limiting systems coincide and the perturbation passes the small-gain
/// check epsilon < a0 e^{-a0 r_N} / (2 K0).
inline PerturbedKernel neumann_green(const DelaySystem& sys, const GreenKernel& g0,
                                     int order, double grid_lo, double grid_hi,
                                     double grid_step) {
  if (order < 1) throw PreconditionError("neumann_green: order must be >= 1");
  if (!sys.limits_equal())
    throw PreconditionError(
        "neumann_green: the Neumann construction needs one limiting system; "
        "limits at +-inf differ");
  const double a0 = g0.contour_a0;
  const double K0 = g0.envelope_K0;
  const double eps = sys.perturbation_sup();
  const double threshold = small_gain_threshold(a0, K0, sys.max_delay());
  if (!(eps < threshold))
    throw PreconditionError("neumann_green: small-gain violated: epsilon=" +
                            std::to_string(eps) + " >= threshold=" +
                            std::to_string(threshold));

  const int n = sys.dim;
  const int m = static_cast<int>(std::floor((grid_hi - grid_lo) / grid_step + 0.5)) + 1;

  PerturbedKernel pk;
  pk.grid_min = grid_lo;
  pk.grid_step = grid_step;
  pk.grid_nodes = m;
  pk.dim = n;
  pk.K1 = K0 * eps * std::exp(a0 * sys.max_delay());
  pk.a1 = std::sqrt(a0 * a0 - 2.0 * a0 * pk.K1);
  pk.K2 = pk.K1 / pk.a1;

  // G0 sampled as a block-Toeplitz matrix and the first iterated kernel
  Eigen::MatrixXd g0mat(m * n, m * n), gamma1(m * n, m * n);
  for (int i = 0; i < m; ++i) {
    const double t = pk.grid_t(i);
    std::vector<Eigen::MatrixXd> cj(sys.num_delays());
    for (int j = 0; j < sys.num_delays(); ++j) cj[j] = sys.perturbations[j].eval(t);
    for (int k = 0; k < m; ++k) {
      const double z = pk.grid_t(k);
      g0mat.block(i * n, k * n, n, n) = g0.eval(t - z);
      Eigen::MatrixXd gm = Eigen::MatrixXd::Zero(n, n);
      for (int j = 0; j < sys.num_delays(); ++j)
        gm += cj[j] * g0.eval(t - sys.delays[j] - z);
      gamma1.block(i * n, k * n, n, n) = gm;
    }
  }

  // trapezoid weights over the shared s-grid
  Eigen::VectorXd w = Eigen::VectorXd::Constant(m * n, grid_step);
  for (int c = 0; c < n; ++c) {
    w(c) *= 0.5;
    w((m - 1) * n + c) *= 0.5;
  }

  Eigen::MatrixXd term = gamma1;
  Eigen::MatrixXd series = gamma1;
  pk.term_sup_norms.push_back(term.cwiseAbs().maxCoeff());
  double worst_ratio = 0.0;
  for (int j = 2; j <= order; ++j) {
    term = gamma1 * w.asDiagonal() * term;
    const double s = term.cwiseAbs().maxCoeff();
    const double prev = pk.term_sup_norms.back();
    if (prev > 0.0) worst_ratio = std::max(worst_ratio, s / prev);
    pk.term_sup_norms.push_back(s);
    series += term;
  }
  pk.ratio = worst_ratio;
  if (order > 1 && worst_ratio >= 1.0)
    throw NumericError("neumann_green: iterated kernels not contracting (ratio >= 1)");

  pk.total = g0mat + g0mat * w.asDiagonal() * series;

  // envelope fit over |t - z|
  std::vector<double> ts, ns;
  ts.reserve(static_cast<size_t>(m) * m);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < m; ++k) {
      ts.push_back(pk.grid_t(i) - pk.grid_t(k));
      ns.push_back(pk.total.block(i * n, k * n, n, n).cwiseAbs().maxCoeff());
    }
  const auto [K, a] = fit_exponential_bound(ts, ns);
  pk.fit_K = K;
  pk.fit_a = a;
  return pk;
}

}  // namespace dlab
