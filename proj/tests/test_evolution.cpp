#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "dlab/evolution.hpp"

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

DelaySystem delayed_scalar() {
  DelaySystem sys;
  sys.dim = 1;
  sys.delays = {0.0, 1.0};
  sys.limit_plus = {Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Constant(1, 1, -1.0)};
  sys.limit_minus = sys.limit_plus;
  sys.perturbations = {PerturbationProfile::zero(1), PerturbationProfile::zero(1)};
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

HistorySegment const_history(double s, double span, double v, int m) {
  return HistorySegment::constant(s, span, Eigen::VectorXd::Constant(1, v), m);
}

}  // namespace

TEST_CASE("scalar ODE integration") {
  const auto traj = integrate(scalar_ode(-1.0), 0.0, const_history(0.0, 0.0, 1.0, 0), 1.0);
  CHECK(traj.eval(1.0)(0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-8));
}

TEST_CASE("method of steps matches hand integration for the delayed equation") {
  const auto sys = delayed_scalar();
  const auto traj = integrate(sys, 0.0, const_history(0.0, 1.0, 1.0, 16), 2.0);
  for (double t : {0.25, 0.5, 0.75, 1.0})
    CHECK(traj.eval(t)(0) == doctest::Approx(1.0 - t).epsilon(1e-8));
  for (double t : {1.25, 1.5, 2.0}) {
    const double exact = 1.0 - t + 0.5 * (t - 1.0) * (t - 1.0);
    CHECK(traj.eval(t)(0) == doctest::Approx(exact).epsilon(1e-7));
  }
}

TEST_CASE("forced integration by variation of constants") {
  const auto h = GridFunction::sample(0.0, 5.0, 1.0 / 64.0, [](double) {
    return Eigen::VectorXd::Ones(1);
  });
  const auto traj =
      integrate(scalar_ode(-1.0), 0.0, const_history(0.0, 0.0, 0.0, 0), 5.0, &h);
  for (double t : {0.5, 1.0, 3.0})
    CHECK(traj.eval(t)(0) == doctest::Approx(1.0 - std::exp(-t)).epsilon(1e-8));
}

TEST_CASE("solution operator identity and cocycle") {
  const auto sys = delayed_scalar();
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const int m = 16;
  auto phi = HistorySegment::sample(0.0, 1.0, m, 1,
                                    [&](double, int) { return unif(rng); });

  const auto same = solution_operator(sys, 0.0, 0.0, phi);
  for (int i = 0; i <= m; ++i)
    CHECK((same.nodes[i] - phi.nodes[i]).cwiseAbs().maxCoeff() == 0.0);

  // the restart at t = 1 resamples the history on m+1 nodes, so the
  // composed operator differs from the direct one at O(1/m^2)
  const auto two_step = solution_operator(sys, 1.0, 2.0, solution_operator(sys, 0.0, 1.0, phi));
  const auto direct = solution_operator(sys, 0.0, 2.0, phi);
  double diff = 0.0;
  for (int i = 0; i <= m; ++i)
    diff = std::max(diff, (two_step.nodes[i] - direct.nodes[i]).cwiseAbs().maxCoeff());
  CHECK(diff <= 2e-3);
}

TEST_CASE("operator matrix basics") {
  const auto sys = delayed_scalar();
  const int m = 16;
  const auto id = operator_matrix(sys, 0.0, 0.0, m);
  CHECK((id - Eigen::MatrixXd::Identity(m + 1, m + 1)).cwiseAbs().maxCoeff() <= 1e-12);

  // matrix application agrees with direct integration
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const auto phi = HistorySegment::sample(0.0, 1.0, m, 1,
                                          [&](double, int) { return unif(rng); });
  const auto tmat = operator_matrix(sys, 0.0, 3.0, m);
  const Eigen::VectorXd via_matrix = tmat * phi.flat();
  const auto via_integration = solution_operator(sys, 0.0, 3.0, phi);
  CHECK((via_matrix - via_integration.flat()).cwiseAbs().maxCoeff() <= 1e-6);

  // stable scalar: induced norms decay in t
  const auto stab = scalar_ode(-1.0);
  double prev = 1e300;
  for (double t : {1.0, 2.0, 4.0}) {
    const double nrm = induced_sup_norm(operator_matrix(stab, 0.0, t, 0));
    CHECK(nrm < prev);
    prev = nrm;
  }
}

TEST_CASE("saddle growth rate") {
  const auto sys = saddle();
  const auto phi = HistorySegment::constant(0.0, 1.0, Eigen::VectorXd::Ones(2), 16);
  const auto x = integrate(sys, 0.0, phi, 6.0);
  CHECK(x.eval(6.0)(0) == doctest::Approx(std::exp(-6.0)).epsilon(1e-6));
  CHECK(x.eval(6.0)(1) == doctest::Approx(std::exp(6.0)).epsilon(1e-6));
  const double n2 = induced_sup_norm(operator_matrix(sys, 0.0, 2.0, 16));
  const double n4 = induced_sup_norm(operator_matrix(sys, 0.0, 4.0, 16));
  CHECK(std::log(n4 / n2) / 2.0 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("convolution solves the forced autonomous equation") {
  const auto sys = scalar_ode(-1.0);
  const double a0 = spectral_gap(sys.limit(Branch::Plus));
  const GreenKernel g =
      green_autonomous(sys.limit(Branch::Plus), a0, -5.0, 15.0, 1.0 / 128.0);
  auto h = GridFunction::sample(-3.0, 3.0, 1.0 / 128.0, [](double t) {
    const double u = t / 1.0;
    const double b = std::abs(u) >= 1.0 ? 0.0 : std::pow(1.0 - u * u, 3);
    return Eigen::VectorXd::Constant(1, b);
  });
  h.with_extension(Extension::Zero);
  const ConvolveResult res = convolve_solve(g, h);
  CHECK(res.residual_sup <= 1e-3 * h.sup_norm());

  // oracle: integrate from rest far left of the bump
  const auto traj =
      integrate(sys, -3.0, const_history(-3.0, 0.0, 0.0, 0), 10.0, &h, 1.0 / 128.0);
  double diff = 0.0;
  for (double t = -3.0; t <= 10.0; t += 0.125)
    diff = std::max(diff, std::abs(traj.eval(t)(0) - res.x.eval(t)(0)));
  CHECK(diff <= 2e-4);

  // zero forcing gives zero
  const auto zero = GridFunction::zeros(-2.0, 2.0, 0.25, 1);
  CHECK(convolve_solve(g, zero).x.sup_norm() == 0.0);
}

TEST_CASE("adjoint matrices") {
  const auto stab = scalar_ode(-1.0);
  CHECK(adjoint_matrices(stab, 0.0)[0](0, 0) == doctest::Approx(-1.0));
  CHECK(adjoint_matrices(stab, 1.0)[0](0, 0) == doctest::Approx(-2.0));
  const auto del = delayed_scalar();
  CHECK(adjoint_matrices(del, 0.0)[1](0, 0) == doctest::Approx(-0.5));
}

TEST_CASE("adjoint pairing residual") {
  const auto sys = delayed_scalar();
  auto bump = [](double c, double w) {
    return [c, w](double t) {
      const double u = (t - c) / w;
      const double b = std::abs(u) >= 1.0 ? 0.0 : std::pow(1.0 - u * u, 4);
      return Eigen::VectorXd::Constant(1, b);
    };
  };
  const auto x = GridFunction::sample(-20.0, 20.0, 1.0 / 64.0, bump(1.0, 4.0));
  const auto y = GridFunction::sample(-20.0, 20.0, 1.0 / 64.0, bump(-2.0, 5.0));
  const double res = adjoint_pairing_residual(sys, x, y);
  CHECK(res <= 1e-4);

  const auto x2 = GridFunction::sample(-20.0, 20.0, 1.0 / 128.0, bump(1.0, 4.0));
  const auto y2 = GridFunction::sample(-20.0, 20.0, 1.0 / 128.0, bump(-2.0, 5.0));
  const double res2 = adjoint_pairing_residual(sys, x2, y2);
  CHECK(res / res2 >= 3.0);
  CHECK(res / res2 <= 5.0);

  const auto zero = GridFunction::zeros(-20.0, 20.0, 0.25, 1);
  CHECK(adjoint_pairing_residual(sys, zero, zero) == 0.0);

  // non-compact support is rejected
  const auto flat = GridFunction::sample(-20.0, 20.0, 0.25, [](double) {
    return Eigen::VectorXd::Ones(1);
  });
  CHECK_THROWS_AS(adjoint_pairing_residual(sys, flat, flat), PreconditionError);
}

TEST_CASE("linearity of the discretized operator") {
  const auto sys = delayed_scalar();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const int m = 16;
  const auto phi = HistorySegment::sample(0.0, 1.0, m, 1, [&](double, int) { return unif(rng); });
  const auto psi = HistorySegment::sample(0.0, 1.0, m, 1, [&](double, int) { return unif(rng); });
  const auto tmat = operator_matrix(sys, 0.0, 2.0, m);
  const Eigen::VectorXd lhs = tmat * (2.5 * phi.flat() + psi.flat());
  const Eigen::VectorXd rhs = 2.5 * (tmat * phi.flat()) + tmat * psi.flat();
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-9 * rhs.cwiseAbs().maxCoeff());
}
