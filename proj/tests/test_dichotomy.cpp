#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dlab/dichotomy.hpp"

using namespace dlab;

namespace {

DelaySystem scalar_ode(double a) {
  DelaySystem sys;
  sys.dim = 1;
  sys.delays = {0.0};
  sys.limit_plus = {Eigen::MatrixXd::Constant(1, 1, a)};
  sys.limit_minus = sys.limit_plus;
  sys.perturbations = {PerturbationProfile::zero(1)};
  return sys;
}

DelaySystem saddle() {
  DelaySystem sys;
  sys.dim = 2;
  sys.delays = {0.0, 1.0};
  Eigen::MatrixXd a0(2, 2);
  a0 << -1.0, 0.0, 0.0, 1.0;
  sys.limit_plus = {a0, Eigen::MatrixXd::Zero(2, 2)};
  sys.limit_minus = sys.limit_plus;
  sys.perturbations = {PerturbationProfile::zero(2), PerturbationProfile::zero(2)};
  return sys;
}

const WholeLineDomain kDomain{25.0, 1.0 / 64.0};

}  // namespace

TEST_CASE("history extension plateaus") {
  const auto c = HistorySegment::constant(0.0, 1.0, Eigen::VectorXd::Constant(1, 3.0), 8);
  const auto psi_c = extend_history(c, 0.0);
  for (double t : {-5.0, -0.5, 0.0, 2.0}) CHECK(psi_c(t)(0) == doctest::Approx(3.0));

  const auto ramp = HistorySegment::sample(0.0, 1.0, 8, 1,
                                           [](double theta, int) { return theta; });
  CHECK(extend_history(ramp, 0.0, Direction::Forward)(2.0)(0) == doctest::Approx(0.0));
  CHECK(extend_history(ramp, 0.0, Direction::Backward)(-5.0)(0) == doctest::Approx(-1.0));
}

TEST_CASE("forcing construction") {
  const auto sys = scalar_ode(-1.0);
  const auto zero_phi = HistorySegment::constant(0.0, 0.0, Eigen::VectorXd::Zero(1), 0);
  const auto g0 = build_forcing(sys, 0.0, extend_history(zero_phi, 0.0),
                                Direction::Forward, kDomain);
  CHECK(g0.sup_norm() == 0.0);

  const auto one = HistorySegment::constant(0.0, 0.0, Eigen::VectorXd::Ones(1), 0);
  const auto g1 = build_forcing(sys, 0.0, extend_history(one, 0.0),
                                Direction::Forward, kDomain);
  CHECK(g1.eval(3.0)(0) == doctest::Approx(-1.0));
  CHECK(g1.eval(-3.0)(0) == 0.0);

  // sup bound over random histories
  const double beta = sys.coefficient_sup();
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int p = 0; p < 100; ++p) {
    const auto phi = HistorySegment::sample(0.0, 0.0, 0, 1,
                                            [&](double, int) { return unif(rng); });
    const auto g = build_forcing(sys, 0.0, extend_history(phi, 0.0),
                                 Direction::Forward, kDomain);
    CHECK(g.sup_norm() <= beta * phi.sup_norm() * (1.0 + 1e-12));
  }
}

TEST_CASE("whole line solve against closed forms") {
  const auto sys = scalar_ode(-1.0);
  Collocation colloc(sys, kDomain);

  const auto zero = GridFunction::zeros(-kDomain.T, kDomain.T, kDomain.step, 1);
  CHECK(solve_whole_line(colloc, zero).v.sup_norm() == 0.0);

  // forcing from the constant-1 history: v(t) = e^{-t} - 1 on t >= 0, 0 before
  const auto one = HistorySegment::constant(0.0, 0.0, Eigen::VectorXd::Ones(1), 0);
  const auto g = build_forcing(sys, 0.0, extend_history(one, 0.0),
                               Direction::Forward, kDomain);
  const auto wl = solve_whole_line(colloc, g);
  for (double t : {0.5, 1.0, 4.0})
    CHECK(wl.v.eval(t)(0) == doctest::Approx(std::exp(-t) - 1.0).epsilon(2e-3));
  for (double t : {-3.0, -10.0}) CHECK(std::abs(wl.v.eval(t)(0)) <= 2e-3);
  CHECK(wl.leak_left <= 1e-4 * wl.v.sup_norm());

  // saddle: the second component cancels the plateau
  const auto sad = saddle();
  Collocation sc(sad, kDomain);
  Eigen::VectorXd e2 = Eigen::VectorXd::Zero(2);
  e2(1) = 1.0;
  const auto phi2 = HistorySegment::constant(0.0, 1.0, e2, 16);
  const auto g2 = build_forcing(sad, 0.0, extend_history(phi2, 0.0),
                                Direction::Forward, kDomain);
  const auto wl2 = solve_whole_line(sc, g2);
  for (double t : {1.0, 3.0, 8.0})
    CHECK(wl2.v.eval(t)(1) == doctest::Approx(-1.0).epsilon(2e-3));
}

TEST_CASE("projection splits the state") {
  const auto sys = scalar_ode(-1.0);
  Collocation colloc(sys, kDomain);

  // stable scalar: F(s) is trivial, P is the identity
  const auto one = HistorySegment::constant(0.0, 0.0, Eigen::VectorXd::Ones(1), 0);
  const auto [p1, q1] = project(colloc, 0.0, one);
  CHECK(p1.eval(0.0)(0) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(std::abs(q1.eval(0.0)(0)) <= 1e-3);

  const auto zero_phi = HistorySegment::constant(0.0, 0.0, Eigen::VectorXd::Zero(1), 0);
  const auto [p0, q0] = project(colloc, 0.0, zero_phi);
  CHECK(p0.sup_norm() == 0.0);
  CHECK(q0.sup_norm() == 0.0);

  // saddle: a backward-bounded segment lies in range Q
  const auto sad = saddle();
  Collocation sc(sad, kDomain);
  const auto unstable = HistorySegment::sample(0.0, 1.0, 16, 2, [](double theta, int c) {
    return c == 1 ? std::exp(theta) : 0.0;
  });
  const auto [pu, qu] = project(sc, 0.0, unstable);
  CHECK(pu.sup_norm() <= 1e-3);
  CHECK(qu.sup_norm() == doctest::Approx(1.0).epsilon(2e-3));

  // P phi + Q phi = phi exactly, by construction
  for (int i = 0; i <= 16; ++i)
    CHECK((pu.nodes[i] + qu.nodes[i] - unstable.nodes[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("projector matrices") {
  const auto sys = scalar_ode(-1.0);
  Collocation colloc(sys, kDomain);
  const Eigen::MatrixXd p = projector_matrix(colloc, 0.0, 0);
  CHECK((p - Eigen::MatrixXd::Identity(1, 1)).cwiseAbs().maxCoeff() <= 1e-3);

  const auto sad = saddle();
  Collocation sc(sad, kDomain);
  const Eigen::MatrixXd ps = projector_matrix(sc, 0.0, 16);
  CHECK(induced_sup_norm(ps * ps - ps) <= 1e-3);
  const double trace = ps.trace();
  // one unstable scalar direction: trace deficit 1 against the nodal dimension
  CHECK(trace == doctest::Approx(34.0 - 1.0).epsilon(1e-2));
}

TEST_CASE("gamma0 estimate") {
  const auto sys = scalar_ode(-1.0);
  Collocation colloc(sys, kDomain);
  const auto est = gamma0_estimate(colloc, 42, 20);
  CHECK(est.beta == doctest::Approx(1.0));
  CHECK(est.gamma0 >= 1.0);
  CHECK(est.inv_norm > 0.1);
  CHECK(est.lambda_theory > 0.0);

  DelaySystem pert = sys;
  pert.perturbations[0].kind = ProfileKind::RationalDecay;
  pert.perturbations[0].amplitude = Eigen::MatrixXd::Constant(1, 1, -0.1);
  CHECK(pert.coefficient_sup() == doctest::Approx(1.1).epsilon(1e-6));
}

TEST_CASE("fredholm diagnostics") {
  const WholeLineDomain coarse{20.0, 1.0 / 8.0};
  const auto stab = fredholm_diagnostics(scalar_ode(-1.0), coarse);
  CHECK(stab.dim_ker == 0);
  CHECK(stab.dim_ker_adjoint == 0);
  CHECK(stab.index == 0);
  CHECK(stab.range_orth_residual <= 1e-6);
  CHECK(stab.hypotheses_ok);

  const auto sad = fredholm_diagnostics(saddle(), coarse);
  CHECK(sad.dim_ker == 0);
  CHECK(sad.index == 0);
  CHECK(sad.hypotheses_ok);

  // x' = 0: not hyperbolic, the discretized operator is near singular
  const auto flat = fredholm_diagnostics(scalar_ode(0.0), coarse);
  CHECK_FALSE(flat.hypotheses_ok);
}

TEST_CASE("decay fitting truncates at the noise floor") {
  std::vector<DecaySample> curve;
  for (double t = 0.5; t <= 20.0; t += 0.5)
    curve.push_back({t, std::exp(-t) + 1e-6 * std::exp(0.5 * t)});
  const auto fit = fit_decay(curve);
  CHECK(fit.valid);
  CHECK(fit.lambda == doctest::Approx(1.0).epsilon(0.1));
  CHECK(fit.D == doctest::Approx(1.0).epsilon(0.3));
}

TEST_CASE("dichotomy verification on the stable scalar system") {
  DichotomyOptions opt;
  opt.m = 0;
  opt.sample_dt = 0.5;
  opt.probes = 16;
  opt.domain = kDomain;
  const auto rep = verify_dichotomy(scalar_ode(-1.0), {0.0}, 10.0, opt);
  CHECK(rep.verdict == "dichotomy");
  REQUIRE(rep.per_s.size() == 1);
  const auto& at = rep.per_s.front();
  CHECK(at.rank_Q == 0);
  CHECK((at.P - Eigen::MatrixXd::Identity(1, 1)).cwiseAbs().maxCoeff() <= 1e-3);
  CHECK(at.forward_fit.valid);
  CHECK(at.forward_fit.lambda == doctest::Approx(1.0).epsilon(0.1));
  CHECK(at.theory_bound_margin <= 1.0);
  CHECK(rep.fredholm.hypotheses_ok);
}

TEST_CASE("grid halving moves the fitted rate by less than 5 percent") {
  DichotomyOptions coarse;
  coarse.m = 0;
  coarse.sample_dt = 0.5;
  coarse.probes = 4;
  coarse.domain = {25.0, 1.0 / 32.0};
  DichotomyOptions fine = coarse;
  fine.domain = {25.0, 1.0 / 64.0};
  const auto sys = scalar_ode(-1.0);
  const double l1 = verify_dichotomy(sys, {0.0}, 10.0, coarse).per_s[0].forward_fit.lambda;
  const double l2 = verify_dichotomy(sys, {0.0}, 10.0, fine).per_s[0].forward_fit.lambda;
  CHECK(std::abs(l1 - l2) <= 0.05 * std::abs(l2));
}

TEST_CASE("whole line solve cross-checks against the perturbed kernel") {
  // small-gain admissible perturbation of the stable scalar system
  DelaySystem pert = scalar_ode(-1.0);
  pert.perturbations[0].kind = ProfileKind::RationalDecay;
  pert.perturbations[0].amplitude = Eigen::MatrixXd::Constant(1, 1, -0.1);

  const double a0 = spectral_gap(pert.limit(Branch::Plus));
  const GreenKernel g0 =
      green_autonomous(pert.limit(Branch::Plus), a0, -15.0, 15.0, 1.0 / 32.0);
  const PerturbedKernel pk = neumann_green(pert, g0, 6, -14.0, 14.0, 1.0 / 16.0);

  const auto h = GridFunction::sample(-14.0, 14.0, 1.0 / 16.0, [](double t) {
    const double u = t / 2.0;
    const double b = std::abs(u) >= 1.0 ? 0.0 : std::pow(1.0 - u * u, 3);
    return Eigen::VectorXd::Constant(1, b);
  });
  const auto via_kernel = convolve_solve(pk, h);

  Collocation colloc(pert, kDomain);
  const auto g = GridFunction::sample(-kDomain.T, kDomain.T, kDomain.step,
                                      [&](double t) -> Eigen::VectorXd {
                                        if (t < h.t_min() || t > h.t_max())
                                          return Eigen::VectorXd::Zero(1);
                                        return h.eval(t);
                                      });
  const auto wl = solve_whole_line(colloc, g);
  double diff = 0.0;
  for (double t = -8.0; t <= 8.0; t += 0.25)
    diff = std::max(diff, std::abs(wl.v.eval(t)(0) - via_kernel.x.eval(t)(0)));
  CHECK(diff <= 5e-3 * wl.v.sup_norm() + 1e-3);
}
