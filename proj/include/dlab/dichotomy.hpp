#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dlab/errors.hpp"
#include "dlab/evolution.hpp"
#include "dlab/grid.hpp"
#include "dlab/system.hpp"

namespace dlab {

enum class Direction { Forward, Backward };

/// Truncated whole-line domain [-T, T] with a uniform collocation grid.
struct WholeLineDomain {
  double T = 30.0;
  double step = 1.0 / 64.0;
};

/// Discretized whole-line operator Lambda_L on [-T, T]: centered differences
/// at interior nodes, linear interpolation for the delayed values, v = 0
/// clamped over one delay span at the left end and at the right end node.
/// The factorization is shared by every solve on the same (system, domain).
namespace detail {

inline int domain_nodes(const WholeLineDomain& dom) {
  return 2 * static_cast<int>(std::floor(dom.T / dom.step + 0.5)) + 1;
}

inline int clamp_left_nodes(const DelaySystem& sys, const WholeLineDomain& dom) {
  return std::max(1, static_cast<int>(std::ceil(sys.max_delay() / dom.step)) + 1);
}

inline Eigen::SparseMatrix<double> assemble_collocation(const DelaySystem& sys,
                                                        const WholeLineDomain& dom) {
  const int n = sys.dim;
  const int nodes = domain_nodes(dom);
  const int clamp_left = clamp_left_nodes(sys, dom);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<size_t>(nodes) * n * (2 + 3 * sys.num_delays()));
  auto add_block = [&](int row_node, int col_node, const Eigen::MatrixXd& b) {
    for (int rr = 0; rr < n; ++rr)
      for (int cc = 0; cc < n; ++cc)
        if (b(rr, cc) != 0.0)
          trip.emplace_back(row_node * n + rr, col_node * n + cc, b(rr, cc));
  };
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < nodes; ++i) {
    const double t = -dom.T + i * dom.step;
    if (i < clamp_left || i == nodes - 1) {
      add_block(i, i, eye);
      continue;
    }
    add_block(i, i + 1, eye / (2.0 * dom.step));
    add_block(i, i - 1, -eye / (2.0 * dom.step));
    for (int j = 0; j < sys.num_delays(); ++j) {
      const Eigen::MatrixXd a = sys.coeff(j, t);
      const double tau = t - sys.delays[j];
      if (tau < -dom.T - 1e-12) continue;  // zero extension
      const double u = (tau + dom.T) / dom.step;
      const int i0 = std::max(0, std::min(static_cast<int>(std::floor(u)), nodes - 2));
      const double w = u - i0;
      if (1.0 - w != 0.0) add_block(i, i0, -(1.0 - w) * a);
      if (w != 0.0) add_block(i, i0 + 1, -w * a);
    }
  }
  Eigen::SparseMatrix<double> m(nodes * n, nodes * n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

}  // namespace detail

class Collocation {
 public:
  Collocation(const DelaySystem& sys, const WholeLineDomain& dom)
      : sys_(sys), dom_(dom), n_(sys.dim) {
    nodes_ = detail::domain_nodes(dom);
    t_.resize(nodes_);
    for (int i = 0; i < nodes_; ++i) t_[i] = -dom.T + i * dom.step;
    clamp_left_ = detail::clamp_left_nodes(sys, dom);
    matrix_ = detail::assemble_collocation(sys, dom);
    lu_.compute(matrix_);
    if (lu_.info() != Eigen::Success)
      throw NumericError("collocation: singular matrix (kernel obstruction)");
  }

  const DelaySystem& system() const { return sys_; }
  const WholeLineDomain& domain() const { return dom_; }
  int nodes() const { return nodes_; }
  int unknowns() const { return nodes_ * n_; }
  int clamp_left() const { return clamp_left_; }
  double node_t(int i) const { return t_[i]; }
  const Eigen::SparseMatrix<double>& matrix() const { return matrix_; }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd v = lu_.solve(rhs);
    if (lu_.info() != Eigen::Success)
      throw NumericError("collocation: solve failed");
    return v;
  }

  Eigen::VectorXd solve_transpose(const Eigen::VectorXd& rhs) const {
    if (!lu_t_) {
      lu_t_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
      Eigen::SparseMatrix<double> at = matrix_.transpose();
      at.makeCompressed();
      lu_t_->compute(at);
      if (lu_t_->info() != Eigen::Success)
        throw NumericError("collocation: transpose factorization failed");
    }
    return lu_t_->solve(rhs);
  }

 private:
  DelaySystem sys_;
  WholeLineDomain dom_;
  int n_, nodes_, clamp_left_;
  std::vector<double> t_;
  Eigen::SparseMatrix<double> matrix_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
  mutable std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_t_;
};

/// The whole-line extension psi of a history segment: the history on
/// [s-r, s], then the held endpoint value (phi(0) forward, phi(-r)
/// backward plateau on the other side).
inline std::function<Eigen::VectorXd(double)> extend_history(
    const HistorySegment& phi, double s, Direction dir = Direction::Forward) {
  const double r = phi.span;
  // both directions agree on [s-r, s]; each one's plateau covers the side
  // the forcing is built on, the other side is a harmless continuation
  (void)dir;
  return [phi, s, r](double t) -> Eigen::VectorXd {
    if (t >= s) return phi.eval(0.0);
    if (t <= s - r) return phi.eval(-r);
    return phi.eval(t - s);
  };
}

/// g(t) = L(t) psi_t on the forced side of s, zero on the other side.
inline GridFunction build_forcing(const DelaySystem& sys, double s,
                                  const std::function<Eigen::VectorXd(double)>& psi,
                                  Direction dir, const WholeLineDomain& dom) {
  const int nodes = 2 * static_cast<int>(std::floor(dom.T / dom.step + 0.5)) + 1;
  std::vector<Eigen::VectorXd> vals(nodes, Eigen::VectorXd::Zero(sys.dim));
  for (int i = 0; i < nodes; ++i) {
    const double t = -dom.T + i * dom.step;
    const bool forced = dir == Direction::Forward ? t >= s - 1e-12 : t <= s + 1e-12;
    if (!forced) continue;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(sys.dim);
    for (int j = 0; j < sys.num_delays(); ++j)
      g += sys.coeff(j, t) * psi(t - sys.delays[j]);
    // the one-sided forcing jumps at s; sampling the node on the jump at
    // half weight keeps the centered-difference solve second order
    if (std::abs(t - s) <= 1e-12) g *= 0.5;
    vals[i] = g;
  }
  return GridFunction(-dom.T, dom.step, std::move(vals), Extension::Zero);
}

struct WholeLineResult {
  GridFunction v;
  double leak_left = 0.0;   // max |v| over a delay span next to the left clamp
  double leak_right = 0.0;  // max |v| over one unit next to the right clamp
};

/// Solves Lambda_L v = g on the truncated line.
inline WholeLineResult solve_whole_line(const Collocation& colloc, const GridFunction& g) {
  const int n = colloc.system().dim;
  if (g.size() != colloc.nodes())
    throw NumericError("solve_whole_line: forcing grid does not match the collocation grid");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(colloc.unknowns());
  for (int i = colloc.clamp_left(); i < colloc.nodes() - 1; ++i)
    rhs.segment(i * n, n) = g.node(i);
  const Eigen::VectorXd sol = colloc.solve(rhs);

  std::vector<Eigen::VectorXd> vals(colloc.nodes());
  for (int i = 0; i < colloc.nodes(); ++i) vals[i] = sol.segment(i * n, n);
  WholeLineResult out{GridFunction(-colloc.domain().T, colloc.domain().step,
                                   std::move(vals), Extension::Zero)};
  const double window = std::max(colloc.system().max_delay(), 1.0);
  const int wn = static_cast<int>(window / colloc.domain().step);
  for (int i = colloc.clamp_left(); i < std::min(colloc.clamp_left() + wn, colloc.nodes()); ++i)
    out.leak_left = std::max(out.leak_left, out.v.node(i).template lpNorm<Eigen::Infinity>());
  for (int i = std::max(0, colloc.nodes() - 1 - wn); i < colloc.nodes() - 1; ++i)
    out.leak_right = std::max(out.leak_right, out.v.node(i).template lpNorm<Eigen::Infinity>());
  return out;
}

/// P phi = v_s + phi and Q phi = -v_s, from the whole-line solve of
/// Lambda_L v = g with the forward extension forcing.
inline std::pair<HistorySegment, HistorySegment> project(const Collocation& colloc,
                                                         double s,
                                                         const HistorySegment& phi) {
  const auto& sys = colloc.system();
  const auto psi = extend_history(phi, s);
  const GridFunction g = build_forcing(sys, s, psi, Direction::Forward, colloc.domain());
  const WholeLineResult wl = solve_whole_line(colloc, g);
  const int m = phi.resolution();
  const double r = phi.span;
  std::vector<Eigen::VectorXd> pn(m + 1), qn(m + 1);
  for (int i = 0; i <= m; ++i) {
    const double theta = (r == 0.0) ? 0.0 : -r + r * i / m;
    const Eigen::VectorXd vs = wl.v.eval(s + theta);
    pn[i] = vs + phi.eval(theta);
    qn[i] = -vs;
  }
  return {HistorySegment{s, r, std::move(pn)}, HistorySegment{s, r, std::move(qn)}};
}

/// Nodal matrix of P(s): columns are projections of the hat-function
/// histories.
inline Eigen::MatrixXd projector_matrix(const Collocation& colloc, double s, int m) {
  const auto& sys = colloc.system();
  const int n = sys.dim;
  const double span = sys.max_delay();
  const int cols = (m + 1) * n;
  Eigen::MatrixXd P(cols, cols);
  for (int node = 0; node <= m; ++node)
    for (int c = 0; c < n; ++c) {
      HistorySegment hat = HistorySegment::sample(
          s, span, m, n, [&](double theta, int cc) -> double {
            if (cc != c) return 0.0;
            if (span == 0.0) return node == m ? 1.0 : 0.0;
            const double h = span / m;
            const double u = std::abs((theta + span) / h - node);
            return u >= 1.0 ? 0.0 : 1.0 - u;
          });
      P.col(node * n + c) = project(colloc, s, hat).first.flat();
    }
  return P;
}

struct Gamma0Estimate {
  double gamma0 = 0.0;
  double beta = 0.0;
  double inv_norm = 0.0;    // estimated ||Lambda_L^{-1}|| (sup-norm surrogate)
  double l = 0.0;           // smallest admissible step count
  double lambda_theory = 0.0;
  bool converged = true;
};

namespace detail {

/// Estimates ||A^{-1}||_inf = ||A^{-T}||_1 by Hager's algorithm plus random
/// +-1 probes; a lower bound by construction.
inline double inverse_sup_norm_estimate(const Collocation& c, std::uint64_t seed,
                                        int probes, bool* converged) {
  const int N = c.unknowns();
  double best = 0.0;
  // Hager on B = A^{-T}: ||B||_1; products Bx = solve_transpose, B^T y = solve
  Eigen::VectorXd x = Eigen::VectorXd::Constant(N, 1.0 / N);
  int stalls = 0;
  for (int it = 0; it < 8; ++it) {
    Eigen::VectorXd bx = c.solve_transpose(x);
    best = std::max(best, bx.template lpNorm<1>() / x.template lpNorm<1>());
    Eigen::VectorXd xi = bx.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
    Eigen::VectorXd z = c.solve(xi);
    int jmax;
    z.cwiseAbs().maxCoeff(&jmax);
    if (z.template lpNorm<Eigen::Infinity>() <= z.dot(x)) break;
    Eigen::VectorXd e = Eigen::VectorXd::Zero(N);
    e(jmax) = 1.0;
    if ((e - x).norm() < 1e-14) {
      ++stalls;
      break;
    }
    x = e;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int p = 0; p < probes; ++p) {
    Eigen::VectorXd g(N);
    for (int i = 0; i < N; ++i) g(i) = coin(rng) ? 1.0 : -1.0;
    const Eigen::VectorXd v = c.solve(g);
    best = std::max(best, v.template lpNorm<Eigen::Infinity>() /
                              g.template lpNorm<Eigen::Infinity>());
  }
  if (converged) *converged = stalls == 0;
  return best;
}

}  // namespace detail

/// gamma_0 = ||Lambda_L^{-1}|| beta + 1, with the discretized inverse norm
/// as a surrogate; also the theoretical step count l > 2 gamma_0 ||inv||
/// (beta r + 1) + r and lambda = ln(2)/l.
inline Gamma0Estimate gamma0_estimate(const Collocation& colloc,
                                      std::uint64_t seed = 42, int probes = 50) {
  Gamma0Estimate est;
  est.beta = colloc.system().coefficient_sup();
  est.inv_norm =
      detail::inverse_sup_norm_estimate(colloc, seed, probes, &est.converged);
  est.gamma0 = est.inv_norm * est.beta + 1.0;
  const double r = colloc.system().max_delay();
  est.l = std::floor(2.0 * est.gamma0 * est.inv_norm * (est.beta * r + 1.0) + r) + 1.0;
  est.lambda_theory = std::log(2.0) / est.l;
  return est;
}

/// Dense collocation matrix of Lambda_L (for SVD-sized domains). Assembled
/// without factorizing, so near-singular operators can still be diagnosed.
inline Eigen::MatrixXd dense_collocation(const DelaySystem& sys, const WholeLineDomain& dom) {
  return Eigen::MatrixXd(detail::assemble_collocation(sys, dom));
}

/// Dense discretization of the adjoint operator Lambda_{L*}:
/// -y'(t) - sum_j B_j^T(t) y(t + r_j), clamped over one delay span at the
/// right end and at the left end node (mirrored boundary treatment).
inline Eigen::MatrixXd dense_adjoint_collocation(const DelaySystem& sys,
                                                 const WholeLineDomain& dom) {
  const int n = sys.dim;
  const int nodes = 2 * static_cast<int>(std::floor(dom.T / dom.step + 0.5)) + 1;
  const double r = sys.max_delay();
  const int clamp_right = std::max(1, static_cast<int>(std::ceil(r / dom.step)) + 1);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nodes * n, nodes * n);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < nodes; ++i) {
    const double t = -dom.T + i * dom.step;
    if (i == 0 || i >= nodes - clamp_right) {
      a.block(i * n, i * n, n, n) = eye;
      continue;
    }
    a.block(i * n, (i + 1) * n, n, n) -= eye / (2.0 * dom.step);
    a.block(i * n, (i - 1) * n, n, n) += eye / (2.0 * dom.step);
    const auto bj = adjoint_matrices(sys, t);
    for (int j = 0; j < sys.num_delays(); ++j) {
      const double tau = t + sys.delays[j];
      if (tau > dom.T + 1e-12) continue;
      const double u = (tau + dom.T) / dom.step;
      const int i0 = std::max(0, std::min(static_cast<int>(std::floor(u)), nodes - 2));
      const double w = u - i0;
      a.block(i * n, i0 * n, n, n) -= (1.0 - w) * bj[j].transpose();
      if (w != 0.0) a.block(i * n, (i0 + 1) * n, n, n) -= w * bj[j].transpose();
    }
  }
  return a;
}

struct FredholmDiagnostics {
  int dim_ker = 0;
  int dim_ker_adjoint = 0;
  int index = 0;
  double range_orth_residual = 0.0;
  double smin_rel = 0.0;          // smallest relative singular value, forward
  double smin_rel_adjoint = 0.0;
  bool hypotheses_ok = false;     // trivial kernels and well-separated smin
};

/// SVD-based kernel dimensions of the discretized Lambda_L and its adjoint,
/// the index, and the numeric range-orthogonality residual.
inline FredholmDiagnostics fredholm_diagnostics(const DelaySystem& sys,
                                                const WholeLineDomain& dom,
                                                std::uint64_t seed = 42,
                                                double hypothesis_floor = 2e-3) {
  const Eigen::MatrixXd a = dense_collocation(sys, dom);
  const Eigen::MatrixXd astar = dense_adjoint_collocation(sys, dom);
  Eigen::BDCSVD<Eigen::MatrixXd> svd_a(a);
  Eigen::BDCSVD<Eigen::MatrixXd> svd_s(astar, Eigen::ComputeThinV);
  const auto& sa = svd_a.singularValues();
  const auto& ss = svd_s.singularValues();

  FredholmDiagnostics diag;
  diag.smin_rel = sa.minCoeff() / sa.maxCoeff();
  diag.smin_rel_adjoint = ss.minCoeff() / ss.maxCoeff();
  for (int i = 0; i < sa.size(); ++i)
    if (sa(i) < 1e-8 * sa.maxCoeff()) ++diag.dim_ker;
  std::vector<Eigen::VectorXd> adjoint_kernel;
  for (int i = 0; i < ss.size(); ++i)
    if (ss(i) < 1e-8 * ss.maxCoeff()) {
      ++diag.dim_ker_adjoint;
      adjoint_kernel.push_back(svd_s.matrixV().col(i));
    }
  diag.index = diag.dim_ker - diag.dim_ker_adjoint;

  // numeric counterpart of range orthogonality: <y, Lambda x>_mu over
  // adjoint-kernel y and random smooth compactly supported x
  if (!adjoint_kernel.empty()) {
    const int n = sys.dim;
    const int nodes = 2 * static_cast<int>(std::floor(dom.T / dom.step + 0.5)) + 1;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    double worst = 0.0;
    for (int p = 0; p < 8; ++p) {
      Eigen::VectorXd x(nodes * n);
      const double c = 0.5 * dom.T * unif(rng);
      const double w = 0.2 * dom.T * (1.5 + unif(rng) * 0.5);
      Eigen::VectorXd dir(n);
      for (int k = 0; k < n; ++k) dir(k) = unif(rng);
      for (int i = 0; i < nodes; ++i) {
        const double t = -dom.T + i * dom.step;
        const double u = (t - c) / w;
        const double bump = std::abs(u) >= 1.0 ? 0.0 : std::pow(1.0 - u * u, 4);
        x.segment(i * n, n) = bump * dir;
      }
      const Eigen::VectorXd lx = a * x;
      for (const auto& y : adjoint_kernel) {
        double pair = 0.0, ny = 0.0, nl = 0.0;
        for (int i = 0; i < nodes; ++i) {
          const double wq =
              ((i == 0 || i == nodes - 1) ? 0.5 : 1.0) * dom.step * omega(-dom.T + i * dom.step);
          pair += wq * y.segment(i * n, n).dot(lx.segment(i * n, n));
          ny += wq * y.segment(i * n, n).squaredNorm();
          nl += wq * lx.segment(i * n, n).squaredNorm();
        }
        if (ny > 0.0 && nl > 0.0)
          worst = std::max(worst, std::abs(pair) / std::sqrt(ny * nl));
      }
    }
    diag.range_orth_residual = worst;
  }
  diag.hypotheses_ok = diag.dim_ker == 0 && diag.dim_ker_adjoint == 0 &&
                       diag.smin_rel > hypothesis_floor;
  return diag;
}

struct DecaySample {
  double ts;      // t - s
  double norm;
};

struct ExponentialFit {
  double D = 0.0;
  double lambda = 0.0;
  int used = 0;       // samples entering the fit (before the truncation floor)
  bool valid = false;
};

/// Log-linear fit D e^{-lambda ts} of a decay curve. Samples after the
/// global minimum are dropped: past that point the curve is dominated by
/// the truncation/projection noise floor of the discretized projectors.
inline ExponentialFit fit_decay(const std::vector<DecaySample>& curve) {
  ExponentialFit fit;
  std::vector<DecaySample> use;
  double best = std::numeric_limits<double>::infinity();
  size_t best_i = 0;
  for (size_t i = 0; i < curve.size(); ++i)
    if (curve[i].norm > 0.0 && curve[i].norm < best) {
      best = curve[i].norm;
      best_i = i;
    }
  for (size_t i = 0; i <= best_i && i < curve.size(); ++i)
    if (curve[i].norm > 0.0) use.push_back(curve[i]);
  if (use.size() < 3) return fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& p : use) {
    const double y = std::log(p.norm);
    sx += p.ts;
    sy += y;
    sxx += p.ts * p.ts;
    sxy += p.ts * y;
  }
  const double m = static_cast<double>(use.size());
  const double denom = m * sxx - sx * sx;
  if (std::abs(denom) < 1e-30) return fit;
  fit.lambda = -(m * sxy - sx * sy) / denom;
  for (const auto& p : use)
    fit.D = std::max(fit.D, p.norm * std::exp(fit.lambda * p.ts));
  fit.used = static_cast<int>(use.size());
  fit.valid = true;
  return fit;
}

struct DichotomyOptions {
  int m = 32;                  // history resolution
  double dt = 1.0 / 64.0;      // integrator step
  double sample_dt = 0.5;      // decay-curve sampling
  int probes = 64;
  std::uint64_t seed = 42;
  WholeLineDomain domain{30.0, 1.0 / 64.0};
  WholeLineDomain fredholm_domain{20.0, 1.0 / 8.0};
};

struct DichotomyAtS {
  double s = 0.0;
  Eigen::MatrixXd P;
  double idempotence_residual = 0.0;  // ||P^2 - P||
  int rank_P = 0, rank_Q = 0;
  std::vector<DecaySample> forward_curve;
  std::vector<DecaySample> backward_curve;
  ExponentialFit forward_fit;
  ExponentialFit backward_fit;
  double commutation_rel = 0.0;       // max ||P(t)T - T P(s)|| / ||T||
  double q_condition = 0.0;           // worst condition of the restricted map
  double probe_gamma_ratio = 0.0;     // max ||P phi|| / ||phi|| over probes
  double theory_bound_margin = 0.0;   // max ||T P phi|| / (2 g0^2 e^{-lt}||phi||)
};

struct DichotomyReport {
  std::vector<DichotomyAtS> per_s;
  Gamma0Estimate gamma0;
  FredholmDiagnostics fredholm;
  std::string verdict;  // "dichotomy" | "dichotomy violated"
  std::vector<std::string> warnings;
};

/// Verifies the dichotomy axioms numerically: projector algebra, the
/// commutation identity, forward decay on range P, backward decay on range
/// Q through the inverted restricted operator, and the conservative
/// theoretical bound 2 gamma_0^2 e^{-lambda_theory (t-s)}.
inline DichotomyReport verify_dichotomy(const DelaySystem& sys,
                                        const std::vector<double>& s_list,
                                        double horizon,
                                        const DichotomyOptions& opt = {}) {
  DichotomyReport rep;
  const int n = sys.dim;
  const double r = sys.max_delay();
  if (horizon < 10.0 * r)
    throw PreconditionError("verify_dichotomy: horizon must be >= 10 r_N");
  Collocation colloc(sys, opt.domain);
  rep.gamma0 = gamma0_estimate(colloc, opt.seed, 50);
  rep.fredholm = fredholm_diagnostics(sys, opt.fredholm_domain, opt.seed);

  bool violated = false;
  for (double s : s_list) {
    DichotomyAtS at;
    at.s = s;
    std::vector<double> times;
    for (double ts = std::max(r, opt.sample_dt); ts <= horizon + 1e-9; ts += opt.sample_dt)
      times.push_back(s + ts);
    const OperatorFamily fam = operator_family(sys, s, times, opt.m, opt.dt);

    at.P = projector_matrix(colloc, s, opt.m);
    const int dim = at.P.rows();
    const Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(dim, dim) - at.P;
    at.idempotence_residual = induced_sup_norm(at.P * at.P - at.P);
    at.rank_Q = static_cast<int>(std::lround(Q.trace()));
    at.rank_P = dim - at.rank_Q;

    // projectors at the sample times (reusing the factorization)
    std::vector<Eigen::MatrixXd> P_t(times.size());
    for (size_t k = 0; k < times.size(); ++k)
      P_t[k] = projector_matrix(colloc, times[k], opt.m);

    // forward decay on range P
    for (size_t k = 0; k < times.size(); ++k)
      at.forward_curve.push_back({times[k] - s, induced_sup_norm(fam.mats[k] * at.P)});
    at.forward_fit = fit_decay(at.forward_curve);

    // commutation residual, relative to ||T||
    for (size_t k = 0; k < times.size(); ++k) {
      const double tn = induced_sup_norm(fam.mats[k]);
      if (tn == 0.0) continue;
      const double res =
          induced_sup_norm(P_t[k] * fam.mats[k] - fam.mats[k] * at.P) / tn;
      at.commutation_rel = std::max(at.commutation_rel, res);
    }

    // backward decay on range Q via the inverted restricted operator
    if (at.rank_Q > 0) {
      auto q_basis = [&](const Eigen::MatrixXd& q, int rank) {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(q, Eigen::ComputeThinU);
        return Eigen::MatrixXd(svd.matrixU().leftCols(rank));
      };
      const Eigen::MatrixXd Us = q_basis(Q, at.rank_Q);
      for (size_t k = 0; k < times.size(); ++k) {
        const Eigen::MatrixXd Qt = Eigen::MatrixXd::Identity(dim, dim) - P_t[k];
        const int rank_t = static_cast<int>(std::lround(Qt.trace()));
        if (rank_t != at.rank_Q) {
          rep.warnings.push_back("rank of Q changed along the line at t=" +
                                 std::to_string(times[k]));
          continue;
        }
        const Eigen::MatrixXd Ut = q_basis(Qt, rank_t);
        const Eigen::MatrixXd C = Ut.transpose() * (fam.mats[k] * Us);
        Eigen::JacobiSVD<Eigen::MatrixXd> csvd(C, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const double cond = csvd.singularValues()(0) /
                            csvd.singularValues()(csvd.singularValues().size() - 1);
        at.q_condition = std::max(at.q_condition, cond);
        if (csvd.singularValues().minCoeff() <= 0.0 || !std::isfinite(cond))
          throw NumericError("verify_dichotomy: F-space degeneracy (restricted operator singular)");
        const Eigen::MatrixXd back = Us * C.inverse() * Ut.transpose() * Qt;
        at.backward_curve.push_back({times[k] - s, induced_sup_norm(back)});
      }
      at.backward_fit = fit_decay(at.backward_curve);
    }

    // probe bounds: ||P phi|| <= gamma_0 ||phi|| and the theoretical decay
    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int p = 0; p < opt.probes; ++p) {
      Eigen::VectorXd phi(dim);
      for (int i = 0; i < dim; ++i) phi(i) = coin(rng) ? 1.0 : -1.0;
      const Eigen::VectorXd pphi = at.P * phi;
      at.probe_gamma_ratio =
          std::max(at.probe_gamma_ratio, pphi.template lpNorm<Eigen::Infinity>() /
                                             phi.template lpNorm<Eigen::Infinity>());
      for (size_t k = 0; k < times.size(); ++k) {
        const double lhs = (fam.mats[k] * pphi).template lpNorm<Eigen::Infinity>();
        const double bound = 2.0 * rep.gamma0.gamma0 * rep.gamma0.gamma0 *
                             std::exp(-rep.gamma0.lambda_theory * (times[k] - s)) *
                             phi.template lpNorm<Eigen::Infinity>();
        at.theory_bound_margin = std::max(at.theory_bound_margin, lhs / bound);
      }
    }

    if (!at.forward_fit.valid || at.forward_fit.lambda <= 0.0) violated = true;
    if (at.rank_Q > 0 && (!at.backward_fit.valid || at.backward_fit.lambda <= 0.0))
      violated = true;
    rep.per_s.push_back(std::move(at));
  }
  rep.verdict = violated ? "dichotomy violated" : "dichotomy";
  return rep;
}

}  // namespace dlab
