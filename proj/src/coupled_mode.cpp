#include "slpt/coupled_mode.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "slpt/errors.hpp"

namespace slpt {

namespace {

constexpr double kOverflowFactor = 1e6;
constexpr double kMaxCondition = 1e12;
constexpr cplx I{0.0, 1.0};

struct State {
  cplx p;
  cplx m;
};

State axpy(const State& y, double h, const FieldDerivative& k) { return {y.p + h * k.plus, y.m + h * k.minus}; }

State rk4_step(double z, double h, const State& y, double eps, const EffectiveParams& ep) {
  const auto k1 = rhs(z, y.p, y.m, eps, ep);
  const State y2 = axpy(y, 0.5 * h, k1);
  const auto k2 = rhs(z + 0.5 * h, y2.p, y2.m, eps, ep);
  const State y3 = axpy(y, 0.5 * h, k2);
  const auto k3 = rhs(z + 0.5 * h, y3.p, y3.m, eps, ep);
  const State y4 = axpy(y, h, k3);
  const auto k4 = rhs(z + h, y4.p, y4.m, eps, ep);
  return {y.p + (h / 6.0) * (k1.plus + 2.0 * k2.plus + 2.0 * k3.plus + k4.plus),
          y.m + (h / 6.0) * (k1.minus + 2.0 * k2.minus + 2.0 * k3.minus + k4.minus)};
}

// Integrates the full grid. `bound` <= 0 disables the overflow check.
template <typename Sink>
bool sweep(State y, double eps, const EffectiveParams& ep, const Grid& grid, double bound, Sink&& sink) {
  const double h = grid.h();
  sink(0, y);
  for (int k = 0; k < grid.n_steps; ++k) {
    y = rk4_step(grid.z(k), h, y, eps, ep);
    if (bound > 0.0 && !(std::max(std::abs(y.p), std::abs(y.m)) <= bound)) return false;
    sink(k + 1, y);
  }
  return true;
}

void fill_observables(FieldSolution& sol) {
  const double a2 = std::norm(sol.alpha);
  sol.R = a2 > 0.0 ? std::norm(sol.psi_minus.front()) / a2 : 0.0;
  sol.T = a2 > 0.0 ? std::norm(sol.psi_plus.back()) / a2 : std::numeric_limits<double>::quiet_NaN();
  sol.residual = std::abs(sol.psi_minus.back());
}

double condition_number(cplx a, cplx b, cplx c, cplx d) {
  // Singular values of [[a, b], [c, d]] from the eigenvalues of M^H M.
  const double fro2 = std::norm(a) + std::norm(b) + std::norm(c) + std::norm(d);
  const double det = std::abs(a * d - b * c);
  const double disc = std::sqrt(std::max(0.0, fro2 * fro2 - 4.0 * det * det));
  const double smax2 = 0.5 * (fro2 + disc);
  const double smin2 = 0.5 * (fro2 - disc);
  if (smin2 <= 0.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(smax2 / smin2);
}

}  // namespace

Grid::Grid(double d_, int n_steps_) : d(d_), n_steps(n_steps_) {
  if (!(d > 0.0) || !std::isfinite(d)) throw InvalidArgument("grid length d must be positive");
  if (n_steps < min_steps(d))
    throw InvalidArgument(fmt::format("n_steps = {} below the minimum {} (64 d / pi)",
                                      n_steps, min_steps(d)));
}

int Grid::min_steps(double d) { return static_cast<int>(std::ceil(64.0 * d / M_PI - 1e-9)); }

double SolverSettings::tolerance_for(cplx alpha) const {
  if (newton_tol > 0.0) return newton_tol;
  return std::max(1e-10 * std::abs(alpha), 1e-12);
}

FieldDerivative rhs(double z, cplx psi_plus, cplx psi_minus, double eps, const EffectiveParams& ep) {
  const cplx sum = psi_plus + psi_minus;
  const cplx diff = psi_plus - psi_minus;
  const cplx detuning = eps - ep.Vbar - ep.Vbar * std::cos(2.0 * z) - 0.5 * ep.chibar * std::norm(sum);
  const cplx coupling = 0.5 * I * (ep.massRatio / ep.lcoh) * diff;
  const cplx drive = 0.5 * I * ep.lcoh * detuning * sum;
  return {coupling + drive, coupling - drive};
}

FieldSolution integrate_ivp(cplx psi_plus0, cplx psi_minus0, double eps, const EffectiveParams& ep,
                            const Grid& grid) {
  FieldSolution sol;
  sol.epsilon = eps;
  sol.alpha = psi_plus0;
  sol.d = grid.d;
  sol.psi_plus.resize(grid.samples());
  sol.psi_minus.resize(grid.samples());
  const double scale = std::max(std::abs(psi_plus0), std::abs(psi_minus0));
  if (scale == 0.0) {
    fill_observables(sol);
    return sol;
  }
  const bool ok = sweep({psi_plus0, psi_minus0}, eps, ep, grid, kOverflowFactor * scale, [&](int k, const State& y) {
    sol.psi_plus[k] = y.p;
    sol.psi_minus[k] = y.m;
  });
  if (!ok) throw Overflow(fmt::format("field exceeded {:g} x initial amplitude at eps = {}", kOverflowFactor, eps));
  fill_observables(sol);
  return sol;
}

cplx shooting_residual(double eps, cplx alpha, cplx s, const EffectiveParams& ep, const Grid& grid) {
  const double scale = std::abs(alpha) > 0.0 ? std::abs(alpha) : std::abs(s);
  if (scale == 0.0) return {0.0, 0.0};
  State last{};
  const bool ok = sweep({alpha, s}, eps, ep, grid, kOverflowFactor * scale, [&](int, const State& y) { last = y; });
  if (!ok) throw DivergedGuess(fmt::format("shooting guess diverged at eps = {}", eps));
  return last.m;
}

FieldSolution solve_linear(double eps, cplx alpha, const EffectiveParams& ep, const Grid& grid) {
  EffectiveParams lin = ep;
  lin.chibar = 0.0;
  const int n = grid.samples();
  std::vector<State> first(n), second(n);
  sweep({1.0, 0.0}, eps, lin, grid, 0.0, [&](int k, const State& y) { first[k] = y; });
  sweep({0.0, 1.0}, eps, lin, grid, 0.0, [&](int k, const State& y) { second[k] = y; });

  // Unknown weights (c1, c2): psi_+(0) = c1 = alpha, psi_-(d) = c1 a + c2 b = 0.
  const cplx a = first.back().m;
  const cplx b = second.back().m;
  const double cond = condition_number(1.0, 0.0, a, b);
  if (!(cond <= kMaxCondition))
    throw SingularSystem(fmt::format("boundary system condition number {:g} at eps = {}", cond, eps));
  const cplx c1 = alpha;
  const cplx c2 = -alpha * a / b;

  FieldSolution sol;
  sol.epsilon = eps;
  sol.alpha = alpha;
  sol.d = grid.d;
  sol.psi_plus.resize(n);
  sol.psi_minus.resize(n);
  for (int k = 0; k < n; ++k) {
    sol.psi_plus[k] = c1 * first[k].p + c2 * second[k].p;
    sol.psi_minus[k] = c1 * first[k].m + c2 * second[k].m;
  }
  sol.psi_plus.front() = alpha;
  sol.converged = true;
  fill_observables(sol);
  return sol;
}

FieldSolution solve_nonlinear(double eps, cplx alpha, const EffectiveParams& ep, const Grid& grid, cplx guess,
                              const SolverSettings& settings) {
  const double tol = settings.tolerance_for(alpha);
  const auto residual = [&](cplx s) { return shooting_residual(eps, alpha, s, ep, grid); };

  cplx s = guess;
  cplx f = residual(s);
  int iters = 0;
  while (std::abs(f) > tol) {
    if (iters >= settings.max_newton_iters)
      throw NoConvergence(fmt::format("Newton did not converge in {} iterations at eps = {} (|F| = {:g})",
                                      settings.max_newton_iters, eps, std::abs(f)));
    // Forward-difference 2x2 real Jacobian in (Re s, Im s).
    const double h = settings.fd_step * std::max({std::abs(s), std::abs(alpha), 1e-12});
    const cplx f_re = (residual(s + cplx(h, 0.0)) - f) / h;
    const cplx f_im = (residual(s + cplx(0.0, h)) - f) / h;
    const double det = f_re.real() * f_im.imag() - f_im.real() * f_re.imag();
    if (det == 0.0 || !std::isfinite(det))
      throw NoConvergence(fmt::format("singular Newton Jacobian at eps = {}", eps));
    const double dx = (f_im.imag() * f.real() - f_im.real() * f.imag()) / det;
    const double dy = (-f_re.imag() * f.real() + f_re.real() * f.imag()) / det;
    const cplx step(-dx, -dy);

    double lambda = 1.0;
    cplx trial_s = s + step;
    cplx trial_f;
    bool have_trial = false;
    for (int halving = 0; halving <= settings.max_damping_halvings; ++halving) {
      trial_s = s + lambda * step;
      try {
        trial_f = residual(trial_s);
        have_trial = true;
        if (std::abs(trial_f) < std::abs(f)) break;
      } catch (const DivergedGuess&) {
        have_trial = false;
      }
      lambda *= 0.5;
    }
    if (!have_trial) throw DivergedGuess(fmt::format("every damped Newton step diverged at eps = {}", eps));
    s = trial_s;
    f = trial_f;
    ++iters;
  }

  FieldSolution sol = integrate_ivp(alpha, s, eps, ep, grid);
  sol.alpha = alpha;
  sol.psi_plus.front() = alpha;
  sol.newton_iters = iters;
  sol.converged = true;
  fill_observables(sol);
  return sol;
}

}  // namespace slpt
