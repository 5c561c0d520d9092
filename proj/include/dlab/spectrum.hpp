#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <complex>
#include <string>
#include <vector>

#include "dlab/errors.hpp"
#include "dlab/system.hpp"

namespace dlab {

using Complex = std::complex<double>;

/// Characteristic matrix Delta(s) = s I - sum_j A_j e^{-s r_j}.
inline Eigen::MatrixXcd char_matrix(const LimitSystem& sys, Complex s) {
  if (!std::isfinite(s.real()) || !std::isfinite(s.imag()))
    throw NumericError("char_matrix: s must be finite");
  Eigen::MatrixXcd d = s * Eigen::MatrixXcd::Identity(sys.dim, sys.dim);
  for (size_t j = 0; j < sys.delays.size(); ++j)
    d -= sys.matrices[j].cast<Complex>() * std::exp(-s * sys.delays[j]);
  return d;
}

/// Delta'(s) = I + sum_j r_j A_j e^{-s r_j}.
inline Eigen::MatrixXcd char_matrix_derivative(const LimitSystem& sys, Complex s) {
  Eigen::MatrixXcd d = Eigen::MatrixXcd::Identity(sys.dim, sys.dim);
  for (size_t j = 0; j < sys.delays.size(); ++j)
    d += sys.delays[j] * sys.matrices[j].cast<Complex>() * std::exp(-s * sys.delays[j]);
  return d;
}

inline Complex char_det(const LimitSystem& sys, Complex s) {
  return char_matrix(sys, s).determinant();
}

inline double smallest_singular_value(const Eigen::MatrixXcd& m) {
  return Eigen::JacobiSVD<Eigen::MatrixXcd>(m).singularValues().minCoeff();
}

/// Evaluated point on the characteristic variety.
struct CharPoint {
  Complex s;
  Eigen::MatrixXcd delta;
  Complex det;
  double smin;
};

inline CharPoint char_point(const LimitSystem& sys, Complex s) {
  CharPoint p;
  p.s = s;
  p.delta = char_matrix(sys, s);
  p.det = p.delta.determinant();
  p.smin = smallest_singular_value(p.delta);
  return p;
}

/// min over z in [-z_max, z_max] of the smallest singular value of Delta(iz).
inline double imaginary_axis_margin(const LimitSystem& sys, double z_max,
                                    double step, double* argmin_z = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  double best_z = 0.0;
  for (double z = -z_max; z <= z_max + 0.5 * step; z += step) {
    const double v = smallest_singular_value(char_matrix(sys, Complex(0.0, z)));
    if (v < best) {
      best = v;
      best_z = z;
    }
  }
  if (argmin_z) *argmin_z = best_z;
  return best;
}

/// Localization bound: any root with |Re s| <= c has |s| <= the returned
/// value, since |s| <= sum_j |A_j| e^{r_j c} on roots.
inline double root_window_bound(const LimitSystem& sys, double c) {
  if (!(c >= 0.0)) throw NumericError("root_window_bound: c must be >= 0");
  double b = c;
  for (size_t j = 0; j < sys.delays.size(); ++j)
    b += sys.matrices[j].operatorNorm() * std::exp(sys.delays[j] * c);
  return b;
}

namespace detail {

// Winding number contribution along one straight segment, by adaptive
// phase tracking with max accepted jump pi/4.
inline double track_phase(const LimitSystem& sys, Complex a, Complex b,
                          Complex fa, Complex fb, int depth) {
  const double jump = std::arg(fb / fa);
  if (std::abs(jump) < M_PI / 4.0) return jump;
  if (depth > 48) throw NumericError("count_roots_rectangle: phase tracking stalled (root on boundary?)");
  const Complex mid = 0.5 * (a + b);
  const Complex fm = char_det(sys, mid);
  if (std::abs(fm) == 0.0)
    throw NumericError("count_roots_rectangle: boundary passes through a root");
  return track_phase(sys, a, mid, fa, fm, depth + 1) +
         track_phase(sys, mid, b, fm, fb, depth + 1);
}

inline double boundary_min_smin(const LimitSystem& sys,
                                const std::vector<Complex>& corners, int per_edge) {
  double best = std::numeric_limits<double>::infinity();
  for (int e = 0; e < 4; ++e) {
    const Complex a = corners[e], b = corners[(e + 1) % 4];
    for (int i = 0; i < per_edge; ++i) {
      const Complex s = a + (b - a) * (double(i) / per_edge);
      best = std::min(best, smallest_singular_value(char_matrix(sys, s)));
    }
  }
  return best;
}

inline int winding_on_rectangle(const LimitSystem& sys, double re_lo, double re_hi,
                                double im_lo, double im_hi) {
  const std::vector<Complex> corners = {
      {re_lo, im_lo}, {re_hi, im_lo}, {re_hi, im_hi}, {re_lo, im_hi}};
  double total = 0.0;
  const int coarse = 16;
  for (int e = 0; e < 4; ++e) {
    const Complex a = corners[e], b = corners[(e + 1) % 4];
    Complex prev = a, fprev = char_det(sys, a);
    for (int i = 1; i <= coarse; ++i) {
      const Complex cur = a + (b - a) * (double(i) / coarse);
      const Complex fcur = char_det(sys, cur);
      total += track_phase(sys, prev, cur, fprev, fcur, 0);
      prev = cur;
      fprev = fcur;
    }
  }
  return static_cast<int>(std::lround(total / (2.0 * M_PI)));
}

}  // namespace detail

/// Argument-principle count of characteristic roots inside a rectangle,
/// with multiplicity. A near-singular boundary is pushed outward by one
/// grid step (up to 3 times) before giving up.
inline int count_roots_rectangle(const LimitSystem& sys, double re_lo, double re_hi,
                                 double im_lo, double im_hi,
                                 double boundary_step = 1e-2) {
  for (int attempt = 0; attempt < 4; ++attempt) {
    const std::vector<Complex> corners = {
        {re_lo, im_lo}, {re_hi, im_lo}, {re_hi, im_hi}, {re_lo, im_hi}};
    const double smin = detail::boundary_min_smin(sys, corners, 32);
    if (smin > 1e-8) {
      try {
        return detail::winding_on_rectangle(sys, re_lo, re_hi, im_lo, im_hi);
      } catch (const NumericError&) {
        // a root can sit exactly on an edge between the sampled boundary
        // points; fall through and push the boundary outward
      }
    }
    re_lo -= boundary_step;
    re_hi += boundary_step;
    im_lo -= boundary_step;
    im_hi += boundary_step;
  }
  throw NumericError("count_roots_rectangle: rectangle on root");
}

struct Root {
  Complex s;
  double residual;     // |det Delta(s)|
  int multiplicity = 1;
};

namespace detail {

/// Newton on det Delta via s <- s - 1/tr(Delta^{-1} Delta').
inline bool newton_refine(const LimitSystem& sys, Complex& s) {
  for (int it = 0; it < 60; ++it) {
    const Eigen::MatrixXcd d = char_matrix(sys, s);
    const Eigen::MatrixXcd dp = char_matrix_derivative(sys, s);
    const Complex tr = (d.partialPivLu().solve(dp)).trace();
    if (std::abs(tr) < 1e-300) return false;
    const Complex ds = 1.0 / tr;
    s -= ds;
    if (std::abs(ds) < 1e-13 * (1.0 + std::abs(s))) return true;
  }
  return false;
}

struct Rect {
  double re_lo, re_hi, im_lo, im_hi;
  int count;
  double diam() const { return std::max(re_hi - re_lo, im_hi - im_lo); }
};

}  // namespace detail

/// Locate all characteristic roots inside a rectangle: argument-principle
/// bisection down to diameter 1e-3, then Newton with the analytic
/// derivative. Returns refined roots (conjugate pairs included if the
/// rectangle covers them).
inline std::vector<Root> locate_roots(const LimitSystem& sys, double re_lo,
                                      double re_hi, double im_lo, double im_hi,
                                      int* total_count = nullptr) {
  std::vector<detail::Rect> stack;
  const int total = count_roots_rectangle(sys, re_lo, re_hi, im_lo, im_hi);
  if (total_count) *total_count = total;
  if (total > 0) stack.push_back({re_lo, re_hi, im_lo, im_hi, total});
  std::vector<Root> roots;
  // slightly irrational split ratio avoids bisection lines through roots
  const double ratio = 0.5000423711;
  while (!stack.empty()) {
    detail::Rect r = stack.back();
    stack.pop_back();
    if (r.diam() <= 1e-3) {
      Complex s(0.5 * (r.re_lo + r.re_hi), 0.5 * (r.im_lo + r.im_hi));
      if (!detail::newton_refine(sys, s)) {
        // keep the cell center with its honest residual
      }
      Root root{s, std::abs(char_det(sys, s)), r.count};
      bool merged = false;
      for (auto& existing : roots) {
        if (std::abs(existing.s - root.s) < 1e-6) {
          existing.multiplicity += r.count;
          merged = true;
          break;
        }
      }
      if (!merged) roots.push_back(root);
      continue;
    }
    detail::Rect a = r, b = r;
    if (r.re_hi - r.re_lo >= r.im_hi - r.im_lo) {
      const double mid = r.re_lo + ratio * (r.re_hi - r.re_lo);
      a.re_hi = mid;
      b.re_lo = mid;
    } else {
      const double mid = r.im_lo + ratio * (r.im_hi - r.im_lo);
      a.im_hi = mid;
      b.im_lo = mid;
    }
    a.count = count_roots_rectangle(sys, a.re_lo, a.re_hi, a.im_lo, a.im_hi, 1e-4);
    b.count = count_roots_rectangle(sys, b.re_lo, b.re_hi, b.im_lo, b.im_hi, 1e-4);
    if (a.count > 0) stack.push_back(a);
    if (b.count > 0) stack.push_back(b);
  }
  return roots;
}

struct RootReport {
  double strip_halfwidth = 0.0;  // certified a_0 (0 when not hyperbolic)
  std::vector<Root> roots;       // roots located in the scan strip |Re s| <= 1
  int winding_count = 0;         // total count in the scan strip
  double scan_window = 0.0;      // imaginary-axis bound of the scan
  double axis_margin = 0.0;      // min singular value of Delta(iz) on the axis
  bool hyperbolic = false;
  std::vector<std::string> warnings;
};

/// Scans the strip |Re s| <= 1, certifies hyperbolicity and returns the
/// root-free half-width a_0 = min(0.9 * min |Re root|, 0.9).
inline RootReport spectral_gap_report(const LimitSystem& sys) {
  RootReport rep;
  const double axis_bound = root_window_bound(sys, 0.0) + 1.0;
  double argmin_z = 0.0;
  rep.axis_margin = imaginary_axis_margin(sys, axis_bound, 0.01, &argmin_z);
  if (rep.axis_margin < 1e-8)
    rep.warnings.push_back("near-singular axis at z=" + std::to_string(argmin_z));

  rep.scan_window = root_window_bound(sys, 1.0) + 1.0;
  rep.roots = locate_roots(sys, -1.0, 1.0, -rep.scan_window, rep.scan_window,
                           &rep.winding_count);
  int refined = 0;
  for (const auto& r : rep.roots) refined += r.multiplicity;
  if (refined != rep.winding_count)
    rep.warnings.push_back("root count mismatch: refined " +
                           std::to_string(refined) + " of " +
                           std::to_string(rep.winding_count));

  double d = std::numeric_limits<double>::infinity();
  for (const auto& r : rep.roots) {
    if (std::abs(r.s.real()) <= 1e-8)
      throw NotHyperbolicError("not hyperbolic: characteristic root on the imaginary axis at z=" +
                                   std::to_string(r.s.imag()),
                               r.s.imag());
    d = std::min(d, std::abs(r.s.real()));
  }
  if (rep.axis_margin < 1e-8 && rep.roots.empty())
    throw NumericError("hyperbolicity undecidable: axis margin below 1e-8 with no located root");

  rep.strip_halfwidth = std::isfinite(d) ? std::min(0.9 * d, 0.9) : 0.9;
  // the certified strip must re-check root-free
  const double a0 = rep.strip_halfwidth;
  if (count_roots_rectangle(sys, -a0, a0, -rep.scan_window, rep.scan_window) != 0)
    throw NumericError("spectral_gap: certified strip contains a root");
  rep.hyperbolic = true;
  return rep;
}

inline double spectral_gap(const LimitSystem& sys) {
  return spectral_gap_report(sys).strip_halfwidth;
}

/// Runs spectral_gap on both limiting systems; throws per branch when a
/// limit is not hyperbolic.
inline std::pair<double, double> is_asymptotically_hyperbolic(const DelaySystem& sys) {
  double gp, gm;
  try {
    gp = spectral_gap(sys.limit(Branch::Plus));
  } catch (const NotHyperbolicError& e) {
    throw NotHyperbolicError(std::string("plus branch: ") + e.what(), e.axis_z());
  } catch (const NumericError& e) {
    throw NumericError(std::string("plus branch: ") + e.what());
  }
  try {
    gm = spectral_gap(sys.limit(Branch::Minus));
  } catch (const NotHyperbolicError& e) {
    throw NotHyperbolicError(std::string("minus branch: ") + e.what(), e.axis_z());
  } catch (const NumericError& e) {
    throw NumericError(std::string("minus branch: ") + e.what());
  }
  return {gp, gm};
}

}  // namespace dlab
