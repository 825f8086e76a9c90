#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "slpt/coupled_mode.hpp"
#include "slpt/errors.hpp"

using namespace slpt;

namespace {

const double kD = 3.0 * M_PI;

EffectiveParams lossless(double V, double chi = 0.0, double l = 0.25) { return make_effective(V, chi, l, kD, 0.0); }

double field_distance(const FieldSolution& a, const FieldSolution& b, int stride = 1) {
  double worst = 0.0;
  for (std::size_t i = 0; i < b.psi_plus.size(); ++i) {
    worst = std::max(worst, std::abs(a.psi_plus[i * stride] - b.psi_plus[i]));
    worst = std::max(worst, std::abs(a.psi_minus[i * stride] - b.psi_minus[i]));
  }
  return worst;
}

}  // namespace

TEST_CASE("rhs against the written-out coupled-mode equations") {
  const auto ep = make_effective(0.7, cplx(0.3, -0.02), 0.4, kD, 0.05);
  const oracle::Model m{0.7, 0.3, 0.4, ep.massRatio, kD};
  // the oracle takes a real chi; compare with the imaginary part removed
  auto ep_real = ep;
  ep_real.chibar = 0.3;
  for (double z : {0.0, 0.37, 2.9}) {
    const cplx p(0.3, -0.1), q(-0.05, 0.2);
    cplx dp, dq;
    oracle::derivs(m, 1.3, z, p, q, dp, dq);
    const auto r = rhs(z, p, q, 1.3, ep_real);
    CHECK(std::abs(r.plus - dp) < 1e-15);
    CHECK(std::abs(r.minus - dq) < 1e-15);
  }
  const auto zero = rhs(1.0, 0.0, 0.0, 2.0, ep);
  CHECK(zero.plus == cplx(0.0, 0.0));
  CHECK(zero.minus == cplx(0.0, 0.0));
  // psi_+ = psi_- kills the coupling term; only the detuning drive is left
  const auto same = rhs(0.0, 1.0, 1.0, 2.0, lossless(0.0));
  CHECK(std::abs(same.plus - cplx(0.0, 0.5)) < 1e-15);
  CHECK(std::abs(same.minus + cplx(0.0, 0.5)) < 1e-15);
}

TEST_CASE("grid minimum") {
  CHECK(Grid::min_steps(kD) == 192);
  CHECK_NOTHROW(Grid(kD, 192));
  CHECK_THROWS_AS(Grid(kD, 191), InvalidArgument);
  CHECK_THROWS_AS(Grid(0.0, 1000), InvalidArgument);
  const Grid g(kD, 200);
  CHECK(g.samples() == 201);
  CHECK(g.z(200) == kD);
}

TEST_CASE("zero initial data stays zero") {
  const auto sol = integrate_ivp(0.0, 0.0, 1.5, make_effective(1.0, 0.1, 0.1, kD, 0.01), Grid(kD, 400));
  for (std::size_t i = 0; i < sol.psi_plus.size(); ++i) {
    CHECK(sol.psi_plus[i] == cplx(0.0, 0.0));
    CHECK(sol.psi_minus[i] == cplx(0.0, 0.0));
  }
}

TEST_CASE("integrator reproduces the free plane wave") {
  const double l = 0.25, eps = 2.3;
  const Grid g(kD, 4096);
  const auto [p0, m0] = oracle::plane_wave(eps, l, 0.0);
  const auto sol = integrate_ivp(p0, m0, eps, lossless(0.0, 0.0, l), g);
  double worst = 0.0;
  for (int i = 0; i < g.samples(); ++i) {
    const auto [p, m] = oracle::plane_wave(eps, l, g.z(i));
    worst = std::max({worst, std::abs(sol.psi_plus[i] - p), std::abs(sol.psi_minus[i] - m)});
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("integrator is fourth order") {
  // start on the physical solution so nothing grows exponentially
  const auto ep = make_effective(1.0, 0.05, 0.25, kD, 0.02);
  const cplx s = solve_linear(1.2, 0.3, ep, Grid(kD, 1024)).psi_minus.front();
  const auto a = integrate_ivp(0.3, s, 1.2, ep, Grid(kD, 256));
  const auto b = integrate_ivp(0.3, s, 1.2, ep, Grid(kD, 512));
  const auto c = integrate_ivp(0.3, s, 1.2, ep, Grid(kD, 1024));
  const double e1 = field_distance(b, a, 2);
  const double e2 = field_distance(c, b, 2);
  CHECK(std::log2(e1 / e2) >= 3.7);
}

TEST_CASE("lossless linear problem conserves flux") {
  const Grid g(kD, 1024);
  for (double V : {0.0, 1.0}) {
    for (double eps : {0.1, 0.9, 1.7, 5.0, 11.0}) {
      const auto sol = solve_linear(eps, 1.0, lossless(V), g);
      CHECK(std::abs(sol.T + sol.R - 1.0) <= 1e-7);
    }
  }
}

TEST_CASE("loss removes flux") {
  const auto sol = solve_linear(1.2, 1.0, make_effective(1.0, 0.0, 0.25, kD, 0.02), Grid(kD, 1024));
  CHECK(sol.T + sol.R < 1.0);
  CHECK(sol.T > 0.0);
}

TEST_CASE("free Fabry-Perot resonances are fully transmitting") {
  const Grid g(kD, 2048);
  for (int n = 1; n <= 6; ++n) {
    const auto sol = solve_linear(oracle::free_resonance(n, kD), 1.0, lossless(0.0), g);
    CHECK(sol.T == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(sol.R < 1e-8);
  }
}

TEST_CASE("linear solution scales with the drive") {
  const auto ep = make_effective(1.0, 0.0, 0.25, kD, 0.02);
  const Grid g(kD, 1024);
  const auto a = solve_linear(1.4, 0.5, ep, g);
  const auto b = solve_linear(1.4, 1.0, ep, g);
  CHECK(a.T == doctest::Approx(b.T).epsilon(1e-12));
  CHECK(std::abs(2.0 * a.psi_minus.front() - b.psi_minus.front()) < 1e-12);
  CHECK(std::abs(b.psi_minus.back()) < 1e-12);
  CHECK(b.psi_plus.front() == cplx(1.0, 0.0));
}

TEST_CASE("nonlinear solver with chibar = 0 reproduces the linear solution") {
  const auto ep = make_effective(1.0, 0.0, 0.25, kD, 0.02);
  const Grid g(kD, 1024);
  const SolverSettings s;
  const auto lin = solve_linear(1.4, 0.5, ep, g);
  const auto nl = solve_nonlinear(1.4, 0.5, ep, g, 0.0, s);
  CHECK(nl.converged);
  CHECK(nl.residual <= s.tolerance_for(0.5));
  CHECK(std::abs(nl.T - lin.T) <= 10.0 * s.tolerance_for(0.5));
}

TEST_CASE("zero drive gives the zero solution") {
  const auto sol = solve_nonlinear(1.1, 0.0, make_effective(1.0, 0.1, 0.1, kD, 0.01), Grid(kD, 400), 0.0);
  CHECK(sol.converged);
  CHECK(sol.psi_minus.front() == cplx(0.0, 0.0));
  CHECK(sol.psi_plus.back() == cplx(0.0, 0.0));
}

TEST_CASE("weak drive approaches the linear transmission") {
  const auto ep = make_effective(1.0, 0.1, 0.1, kD, 0.01);
  const Grid g(kD, 1024);
  const auto lin = solve_linear(1.07, 1e-3, ep, g);
  const auto nl = solve_nonlinear(1.07, 1e-3, ep, g, lin.psi_minus.front());
  CHECK(std::abs(nl.T - lin.T) <= 1e-4);
}

TEST_CASE("nonlinear solution matches the backward-shooting oracle where it is unique") {
  const auto ep = make_effective(1.0, 0.1, 0.1, kD, 0.01);
  const oracle::Model m{1.0, 0.1, 0.1, ep.massRatio, kD};
  const Grid g(kD, 1024);
  for (double eps : {0.95, 1.3}) {
    const auto ref = oracle::backward_transmissions(m, eps, 0.1, 1024, 600);
    REQUIRE(ref.size() == 1);
    const auto lin = solve_linear(eps, 0.1, ep, g);
    const auto nl = solve_nonlinear(eps, 0.1, ep, g, lin.psi_minus.front());
    CHECK(nl.T == doctest::Approx(ref[0]).epsilon(1e-6));
  }
}

TEST_CASE("global phase of the drive is a symmetry") {
  const auto ep = make_effective(1.0, 0.1, 0.1, kD, 0.01);
  const Grid g(kD, 1024);
  const cplx rot = std::polar(1.0, 0.8);
  const cplx s0 = solve_linear(0.95, 0.1, ep, g).psi_minus.front();
  const auto a = solve_nonlinear(0.95, 0.1, ep, g, s0);
  const auto b = solve_nonlinear(0.95, 0.1 * rot, ep, g, a.psi_minus.front() * rot);
  CHECK(a.T == doctest::Approx(b.T).epsilon(1e-8));
  CHECK(std::abs(a.psi_plus.back() * rot - b.psi_plus.back()) < 1e-9);
}

TEST_CASE("Newton failure is reported") {
  const auto ep = make_effective(1.0, 0.1, 0.1, kD, 0.01);
  SolverSettings s;
  s.max_newton_iters = 1;
  CHECK_THROWS_AS(solve_nonlinear(1.07, 0.1, ep, Grid(kD, 400), cplx(5.0, 3.0), s), Error);
  s.max_newton_iters = 0;
  const cplx lin = solve_linear(1.07, 0.1, ep, Grid(kD, 400)).psi_minus.front();
  CHECK_THROWS_AS(solve_nonlinear(1.07, 0.1, ep, Grid(kD, 400), lin, s), NoConvergence);
}
