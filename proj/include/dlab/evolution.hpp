#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dlab/errors.hpp"
#include "dlab/green.hpp"
#include "dlab/grid.hpp"
#include "dlab/system.hpp"
#include "dlab/weights.hpp"

namespace dlab {

/// A discretized element of C([-r, 0], R^n): the state of the DDE semiflow
/// at some base time.
struct HistorySegment {
  double base_time = 0.0;
  double span = 0.0;                    // r_N
  std::vector<Eigen::VectorXd> nodes;   // m+1 uniform samples on [-span, 0]

  int resolution() const { return static_cast<int>(nodes.size()) - 1; }
  int dim() const { return static_cast<int>(nodes.front().size()); }

  static HistorySegment constant(double base_time, double span, const Eigen::VectorXd& v,
                                 int m) {
    return {base_time, span, std::vector<Eigen::VectorXd>(m + 1, v)};
  }

  template <typename F>
  static HistorySegment sample(double base_time, double span, int m, int dim, F&& f) {
    std::vector<Eigen::VectorXd> nodes;
    nodes.reserve(m + 1);
    for (int i = 0; i <= m; ++i) {
      const double theta = span == 0.0 ? 0.0 : -span + span * i / m;
      Eigen::VectorXd v(dim);
      for (int c = 0; c < dim; ++c) v(c) = f(theta, c);
      nodes.push_back(v);
    }
    return {base_time, span, std::move(nodes)};
  }

  /// phi(theta) for theta in [-span, 0], by linear interpolation.
  Eigen::VectorXd eval(double theta) const {
    if (span == 0.0 || nodes.size() == 1) return nodes.back();
    const double h = span / resolution();
    double u = (theta + span) / h;
    int i = std::max(0, std::min(static_cast<int>(std::floor(u)),
                                 static_cast<int>(nodes.size()) - 2));
    const double w = u - i;
    return (1.0 - w) * nodes[i] + w * nodes[i + 1];
  }

  double sup_norm() const {
    double s = 0.0;
    for (const auto& v : nodes) s = std::max(s, v.template lpNorm<Eigen::Infinity>());
    return s;
  }

  Eigen::VectorXd flat() const {
    Eigen::VectorXd v(nodes.size() * dim());
    for (size_t i = 0; i < nodes.size(); ++i)
      v.segment(i * dim(), dim()) = nodes[i];
    return v;
  }

  static HistorySegment from_flat(double base_time, double span, int m, int dim,
                                  const Eigen::VectorXd& v) {
    std::vector<Eigen::VectorXd> nodes(m + 1);
    for (int i = 0; i <= m; ++i) nodes[i] = v.segment(i * dim, dim);
    return {base_time, span, std::move(nodes)};
  }
};

/// Dense solution of the DDE on [s, t_end], with the initial history kept
/// alongside so any x_tau with tau in [s, t_end] can be extracted.
struct Trajectory {
  double start = 0.0;
  double end = 0.0;
  double step = 0.0;
  std::vector<Eigen::VectorXd> y;   // values at start + i*step
  std::vector<Eigen::VectorXd> yd;  // derivatives there (Hermite dense output)
  HistorySegment history;           // phi on [start - span, start]

  int dim() const { return static_cast<int>(y.front().size()); }

  /// x(t) for t in [start - history.span, end].
  Eigen::VectorXd eval(double t) const {
    if (t <= start) return history.eval(std::max(t - start, -history.span));
    double u = (t - start) / step;
    int i = std::max(0, std::min(static_cast<int>(std::floor(u)),
                                 static_cast<int>(y.size()) - 2));
    const double w = u - i;
    // cubic Hermite on [t_i, t_i+1]
    const double h00 = (1 + 2 * w) * (1 - w) * (1 - w);
    const double h10 = w * (1 - w) * (1 - w);
    const double h01 = w * w * (3 - 2 * w);
    const double h11 = w * w * (w - 1);
    return h00 * y[i] + (h10 * step) * yd[i] + h01 * y[i + 1] + (h11 * step) * yd[i + 1];
  }

  HistorySegment segment(double tau, int m) const {
    const double span = history.span;
    std::vector<Eigen::VectorXd> nodes;
    nodes.reserve(m + 1);
    for (int i = 0; i <= m; ++i) {
      const double theta = span == 0.0 ? 0.0 : -span + span * i / m;
      nodes.push_back(eval(tau + theta));
    }
    return {tau, span, std::move(nodes)};
  }
};

namespace detail {

inline double integrator_step(const DelaySystem& sys, double dt_hint) {
  double r_min = 0.0;
  for (double r : sys.delays)
    if (r > 0.0) {
      r_min = r;
      break;
    }
  if (r_min == 0.0) return dt_hint;
  const int k = std::max(1, static_cast<int>(std::ceil(r_min / dt_hint - 1e-12)));
  return r_min / k;
}

}  // namespace detail

/// Method-of-steps integration of x'(t) = sum_j A_j(t) x(t-r_j) + h(t) from
/// the history phi at base time s, with a classical 4th-order one-step
/// scheme. Delayed values come from the cubic-Hermite dense output (never
/// the current step: the step size divides the smallest positive delay).
inline Trajectory integrate(const DelaySystem& sys, double s, const HistorySegment& phi,
                            double t_end, const GridFunction* forcing = nullptr,
                            double dt_hint = 1.0 / 64.0) {
  if (t_end < s) throw NumericError("integrate: t_end must be >= s");
  if (forcing && forcing->extension() == Extension::None &&
      (forcing->t_min() > s + 1e-12 || forcing->t_max() < t_end - 1e-12))
    throw NumericError("integrate: forcing grid does not cover [s, t_end]");
  const double dt = detail::integrator_step(sys, dt_hint);
  const int steps = static_cast<int>(std::ceil((t_end - s) / dt - 1e-9));

  Trajectory traj;
  traj.start = s;
  traj.step = dt;
  traj.history = phi;
  traj.history.base_time = s;
  traj.y.reserve(steps + 1);
  traj.yd.reserve(steps + 1);
  traj.y.push_back(phi.eval(0.0));

  auto delayed = [&](double tau) -> Eigen::VectorXd {
    // tau is strictly behind the step being advanced
    if (tau <= s) return phi.eval(std::max(tau - s, -phi.span));
    double u = (tau - s) / dt;
    int i = std::max(0, std::min(static_cast<int>(std::floor(u)),
                                 static_cast<int>(traj.y.size()) - 1));
    if (i == static_cast<int>(traj.y.size()) - 1) return traj.y[i];
    const double w = u - i;
    const double h00 = (1 + 2 * w) * (1 - w) * (1 - w);
    const double h10 = w * (1 - w) * (1 - w);
    const double h01 = w * w * (3 - 2 * w);
    const double h11 = w * w * (w - 1);
    return h00 * traj.y[i] + (h10 * dt) * traj.yd[i] + h01 * traj.y[i + 1] +
           (h11 * dt) * traj.yd[i + 1];
  };

  auto rhs = [&](double t, const Eigen::VectorXd& x) {
    Eigen::VectorXd v = sys.coeff(0, t) * x;
    for (int j = 1; j < sys.num_delays(); ++j)
      v += sys.coeff(j, t) * delayed(t - sys.delays[j]);
    if (forcing) v += forcing->eval(t);
    return v;
  };

  for (int i = 0; i < steps; ++i) {
    const double t = s + i * dt;
    const Eigen::VectorXd& x = traj.y.back();
    const Eigen::VectorXd k1 = rhs(t, x);
    traj.yd.push_back(k1);
    const Eigen::VectorXd k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1);
    const Eigen::VectorXd k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2);
    const Eigen::VectorXd k4 = rhs(t + dt, x + dt * k3);
    Eigen::VectorXd next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (next.template lpNorm<Eigen::Infinity>() > 1e12)
      throw NumericError("integrate: blow-up (norm exceeded 1e12)");
    traj.y.push_back(std::move(next));
  }
  traj.yd.push_back(rhs(s + steps * dt, traj.y.back()));
  traj.end = s + steps * dt;
  return traj;
}

/// T(t,s) phi = x_t.
inline HistorySegment solution_operator(const DelaySystem& sys, double s, double t,
                                        const HistorySegment& phi,
                                        double dt_hint = 1.0 / 64.0) {
  if (t == s) return phi;
  return integrate(sys, s, phi, t, nullptr, dt_hint).segment(t, phi.resolution());
}

/// Nodal-basis matrix of T(t,s) at the given times: each hat-function
/// history is integrated once over the whole window and its segments are
/// read off along the way.
struct OperatorFamily {
  std::vector<double> times;
  std::vector<Eigen::MatrixXd> mats;  // (m+1)n square, columns = basis images
};

inline OperatorFamily operator_family(const DelaySystem& sys, double s,
                                      const std::vector<double>& times, int m,
                                      double dt_hint = 1.0 / 64.0) {
  const int n = sys.dim;
  const double span = sys.max_delay();
  const int cols = (m + 1) * n;
  OperatorFamily fam;
  fam.times = times;
  fam.mats.assign(times.size(), Eigen::MatrixXd::Zero(cols, cols));
  const double t_end = *std::max_element(times.begin(), times.end());
  for (int node = 0; node <= m; ++node)
    for (int c = 0; c < n; ++c) {
      HistorySegment hat = HistorySegment::sample(
          s, span, m, n, [&](double theta, int cc) -> double {
            if (cc != c || span == 0.0) return (cc == c && node == m) ? 1.0 : 0.0;
            const double h = span / m;
            const double u = std::abs((theta + span) / h - node);
            return u >= 1.0 ? 0.0 : 1.0 - u;
          });
      const Trajectory traj =
          t_end > s ? integrate(sys, s, hat, t_end, nullptr, dt_hint) : Trajectory{};
      for (size_t k = 0; k < times.size(); ++k) {
        const HistorySegment seg =
            times[k] == s ? hat : traj.segment(times[k], m);
        fam.mats[k].col(node * n + c) = seg.flat();
      }
    }
  return fam;
}

inline Eigen::MatrixXd operator_matrix(const DelaySystem& sys, double s, double t, int m,
                                       double dt_hint = 1.0 / 64.0) {
  return operator_family(sys, s, {t}, m, dt_hint).mats.front();
}

/// Induced sup-norm of a nodal operator matrix (max absolute row sum).
inline double induced_sup_norm(const Eigen::MatrixXd& m) {
  return m.cwiseAbs().rowwise().sum().maxCoeff();
}

struct ConvolveResult {
  GridFunction x;
  double residual_sup = 0.0;  // ||x' - sum A_j x(.-r_j) - h||_sup, interior
  double forcing_sup = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {

/// Interior finite-difference residual of the nonhomogeneous autonomous
/// equation, skipping a delay span at each boundary.
inline double convolution_residual(const LimitSystem& sys, const GridFunction& x,
                                   const GridFunction& h) {
  double worst = 0.0;
  const double hstep = x.step();
  const double margin = sys.max_delay() + 2.0 * hstep;
  for (int i = 1; i < x.size() - 1; ++i) {
    const double t = x.grid_t(i);
    if (t - x.t_min() < margin || x.t_max() - t < hstep) continue;
    if (t < h.t_min() || t > h.t_max()) continue;
    Eigen::VectorXd res = (x.node(i + 1) - x.node(i - 1)) / (2.0 * hstep);
    for (size_t j = 0; j < sys.delays.size(); ++j)
      res -= sys.matrices[j] * x.eval(t - sys.delays[j]);
    res -= h.eval(t);
    worst = std::max(worst, res.template lpNorm<Eigen::Infinity>());
  }
  return worst;
}

}  // namespace detail

/// x(t) = int G_0(t - z) h(z) dz by trapezoid, on an output grid aligned
/// with h's grid (so the kernel jump always lands on a node, where the
/// stored sample is the one-sided average).
inline ConvolveResult convolve_solve(const GreenKernel& g, const GridFunction& h) {
  ConvolveResult out;
  const double hs = h.sup_norm();
  out.forcing_sup = hs;
  if (hs > 0.0 &&
      (h.node(0).template lpNorm<Eigen::Infinity>() > 1e-8 * hs ||
       h.node(h.size() - 1).template lpNorm<Eigen::Infinity>() > 1e-8 * hs))
    out.warnings.push_back("forcing does not decay at its grid ends; truncation error is O(tail)");

  const double pad_left = -g.t_min;   // kernel support reaches t - z in [g.t_min, g.t_max]
  const double pad_right = g.t_max();
  const double step = h.step();
  const int extra_l = static_cast<int>(std::ceil(pad_left / step));
  const int extra_r = static_cast<int>(std::ceil(pad_right / step));
  const int m = h.size() + extra_l + extra_r;
  std::vector<Eigen::VectorXd> vals(m, Eigen::VectorXd::Zero(h.dim()));
  const double t0 = h.t_min() - extra_l * step;
  for (int i = 0; i < m; ++i) {
    const double t = t0 + i * step;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(h.dim());
    for (int k = 0; k < h.size(); ++k) {
      const double w = (k == 0 || k == h.size() - 1) ? 0.5 : 1.0;
      acc += w * (g.eval(t - h.grid_t(k)) * h.node(k));
    }
    vals[i] = acc * step;
  }
  out.x = GridFunction(t0, step, std::move(vals), Extension::Zero);
  out.residual_sup = detail::convolution_residual(g.system, out.x, h);
  return out;
}

/// x(t) = int G(t, z) h(z) dz for the perturbed kernel.
inline ConvolveResult convolve_solve(const PerturbedKernel& g, const GridFunction& h) {
  ConvolveResult out;
  out.forcing_sup = h.sup_norm();
  const double step = h.step();
  const double lo = g.grid_min;
  const double hi = g.grid_t(g.grid_nodes - 1);
  const int m = static_cast<int>(std::floor((hi - lo) / step + 0.5)) + 1;
  std::vector<Eigen::VectorXd> vals(m, Eigen::VectorXd::Zero(h.dim()));
  for (int i = 0; i < m; ++i) {
    const double t = lo + i * step;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(h.dim());
    for (int k = 0; k < h.size(); ++k) {
      const double w = (k == 0 || k == h.size() - 1) ? 0.5 : 1.0;
      acc += w * (g.eval(t, h.grid_t(k)) * h.node(k));
    }
    vals[i] = acc * step;
  }
  out.x = GridFunction(lo, step, std::move(vals), Extension::Zero);
  return out;
}

/// The matrices of the adjoint equation: B_0(t) = k(t) I + A_0(t) and
/// B_j(t) = M_j^+(t) A_j(t + r_j) for j >= 1.
inline std::vector<Eigen::MatrixXd> adjoint_matrices(const DelaySystem& sys, double t) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(sys.num_delays());
  out.push_back(omega_log_derivative(t) * Eigen::MatrixXd::Identity(sys.dim, sys.dim) +
                sys.coeff(0, t));
  for (int j = 1; j < sys.num_delays(); ++j)
    out.push_back(shift_factor(t, sys.delays[j], +1) * sys.coeff(j, t + sys.delays[j]));
  return out;
}

/// |<Lambda x, y>_mu - <x, Lambda* y>_mu| / (||x|| ||y||), both sides by
/// centered differences and weighted trapezoid. x and y must share the grid
/// and be compactly supported inside it.
inline double adjoint_pairing_residual(const DelaySystem& sys, const GridFunction& x,
                                       const GridFunction& y) {
  if (x.size() != y.size() || x.t_min() != y.t_min() || x.step() != y.step())
    throw NumericError("adjoint_pairing_residual: x and y must share a grid");
  const double nx = x.sup_norm(), ny = y.sup_norm();
  if (nx == 0.0 || ny == 0.0) return 0.0;
  auto boundary = [&](const GridFunction& f, double scale) {
    return f.node(0).template lpNorm<Eigen::Infinity>() > 1e-10 * scale ||
           f.node(f.size() - 1).template lpNorm<Eigen::Infinity>() > 1e-10 * scale;
  };
  if (boundary(x, nx) || boundary(y, ny))
    throw PreconditionError("adjoint_pairing_residual: non-compact support");

  const double h = x.step();
  const int m = x.size();
  auto deriv = [&](const GridFunction& f, int i) -> Eigen::VectorXd {
    if (i == 0) return (f.node(1) - f.node(0)) / h;
    if (i == m - 1) return (f.node(m - 1) - f.node(m - 2)) / h;
    return (f.node(i + 1) - f.node(i - 1)) / (2.0 * h);
  };
  auto zero_eval = [&](const GridFunction& f, double t) -> Eigen::VectorXd {
    if (t < f.t_min() || t > f.t_max()) return Eigen::VectorXd::Zero(f.dim());
    return f.eval(t);
  };

  double lhs = 0.0, rhs = 0.0;
  for (int i = 0; i < m; ++i) {
    const double t = x.grid_t(i);
    const double w = ((i == 0 || i == m - 1) ? 0.5 : 1.0) * h * omega(t);
    Eigen::VectorXd lam_x = deriv(x, i);
    for (int j = 0; j < sys.num_delays(); ++j)
      lam_x -= sys.coeff(j, t) * zero_eval(x, t - sys.delays[j]);
    lhs += w * y.node(i).dot(lam_x);

    Eigen::VectorXd lam_y = -deriv(y, i);
    const auto bj = adjoint_matrices(sys, t);
    for (int j = 0; j < sys.num_delays(); ++j)
      lam_y -= bj[j].transpose() * zero_eval(y, t + sys.delays[j]);
    rhs += w * lam_y.dot(x.node(i));
  }
  return std::abs(lhs - rhs) / (nx * ny);
}

}  // namespace dlab
