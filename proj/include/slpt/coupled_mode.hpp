#pragma once

#include <complex>
#include <limits>
#include <vector>

#include "slpt/param_map.hpp"

namespace slpt {

/// Uniform grid on [0, d] with n_steps intervals (n_steps + 1 samples).
struct Grid {
  double d = 0.0;
  int n_steps = 0;

  /// Validates d > 0 and n_steps >= 64 d / pi.
  Grid(double d, int n_steps);

  double h() const noexcept { return d / n_steps; }
  double z(int i) const noexcept { return d * static_cast<double>(i) / n_steps; }
  int samples() const noexcept { return n_steps + 1; }

  static int min_steps(double d);
};

struct FieldSolution {
  std::vector<cplx> psi_plus;
  std::vector<cplx> psi_minus;
  double epsilon = 0.0;
  cplx alpha{0.0, 0.0};
  double T = std::numeric_limits<double>::quiet_NaN();
  double R = std::numeric_limits<double>::quiet_NaN();
  double residual = 0.0;  // |psi_-(d)|
  int newton_iters = 0;
  bool converged = false;
  double d = 0.0;

  cplx shooting_value() const { return psi_minus.front(); }
};

struct SolverSettings {
  /// Absolute tolerance on |psi_-(d)|. Non-positive selects the default,
  /// 1e-10 |alpha| with a floor of 1e-12.
  double newton_tol = 0.0;
  int max_newton_iters = 50;
  /// Relative finite-difference step for the Newton Jacobian.
  double fd_step = 1e-7;
  int max_damping_halvings = 8;

  double tolerance_for(cplx alpha) const;
};

struct FieldDerivative {
  cplx plus;
  cplx minus;
};

/// Right-hand side of the stationary coupled-mode equations at position z.
FieldDerivative rhs(double z, cplx psi_plus, cplx psi_minus, double eps, const EffectiveParams& ep);

/// Classical RK4 from z = 0 to z = d. Throws Overflow if max|psi| exceeds
/// 1e6 times the initial amplitude scale.
FieldSolution integrate_ivp(cplx psi_plus0, cplx psi_minus0, double eps, const EffectiveParams& ep,
                            const Grid& grid);

/// psi_-(d) for the initial data (alpha, s); only the endpoint is kept.
/// Throws DivergedGuess on runaway growth.
cplx shooting_residual(double eps, cplx alpha, cplx s, const EffectiveParams& ep, const Grid& grid);

/// Linear (chibar = 0) transmission problem by superposition of two basis
/// solutions. Throws SingularSystem when the 2x2 boundary system has
/// condition number above 1e12.
FieldSolution solve_linear(double eps, cplx alpha, const EffectiveParams& ep, const Grid& grid);

/// Nonlinear boundary-value problem by complex shooting on s = psi_-(0)
/// with damped Newton iteration. Throws NoConvergence or DivergedGuess.
FieldSolution solve_nonlinear(double eps, cplx alpha, const EffectiveParams& ep, const Grid& grid,
                              cplx guess, const SolverSettings& settings = {});

}  // namespace slpt
