#pragma once

#include <array>
#include <map>
#include <vector>

#include "slpt/coupled_mode.hpp"
#include "slpt/spectrum.hpp"

namespace slpt {

/// Norm whose logarithmic derivative defines the growth-rate estimator.
enum class XiNorm {
  MaxAbs,     // max_z |delta psi|
  ProbeReal,  // |Re delta psi(z_probe)|
};

enum class Verdict { Stable, Unstable, Inconclusive };

const char* to_string(Verdict v);

/// Global phase of the base state. The printed (non-conjugate) operator
/// couples delta psi to psi_I0^2 and so depends on it.
enum class BasePhase {
  Transmitted,  // psi_+(d) real and positive
  Drive,        // as solved: psi_+(0) = alpha
};

struct GaussianSeed {
  double center = -1.0;     // negative: middle of the waveguide
  double width = 1.0;
  double amplitude = -1.0;  // negative: 1e-4 max|psi_I0| (1e-4 for a zero base)
};

struct StabilityOptions {
  int n_points = 512;  // stability grid samples including both ends
  double dt = 0.01;
  double t_end = 50.0;
  double snapshot_every = 0.5;
  XiNorm norm = XiNorm::MaxAbs;
  double probe_z = -1.0;  // negative: middle of the waveguide
  bool conjugate_coupling = false;
  BasePhase base_phase = BasePhase::Transmitted;
  double rate_tol = 1e-3;
  bool keep_snapshots = false;
  GaussianSeed seed;
};

struct PerturbationState {
  std::vector<cplx> delta_psi;
  double t = 0.0;
};

struct XiSample {
  double t = 0.0;
  double max_abs = 0.0;
  double xi = 0.0;
};

struct StabilityReport {
  std::vector<XiSample> xi_series;
  double asymptotic_rate = std::numeric_limits<double>::quiet_NaN();
  Verdict verdict = Verdict::Inconclusive;
  BranchLabel branch = BranchLabel::Unique;
  bool halted_early = false;
  double t_reached = 0.0;
};

struct EvolutionResult {
  /// First and last states always; every snapshot when keep_snapshots is set.
  std::vector<PerturbationState> snapshots;
  StabilityReport report;
};

/// Discretised linearised operator around a stationary solution on a
/// uniform grid of n_points samples. Interior nodes are unknowns; the end
/// values follow from one-sided second-order Robin closures
///   u(0) - i (lcoh/massRatio) u'(0) = 0,  u(d) + i (lcoh/massRatio) u'(d) = 0.
class PerturbationOperator {
 public:
  PerturbationOperator(const FieldSolution& base, const EffectiveParams& ep, int n_points, bool conjugate_coupling,
                       BasePhase phase = BasePhase::Transmitted);

  int n_points() const noexcept { return n_; }
  double h() const noexcept { return h_; }
  double z(int j) const noexcept { return h_ * j; }
  bool conjugate_coupling() const noexcept { return conjugate_; }
  /// u_0 = c (4 u_1 - u_2), and mirrored at z = d.
  cplx closure() const noexcept { return c0_; }
  const std::vector<cplx>& base_field() const noexcept { return psi0_; }
  /// Diagonal potential 2 V cos^2 z - eps + 4 chibar |psi_I0|^2.
  const std::vector<cplx>& potential() const noexcept { return pot_; }
  /// Coupling 2 chibar psi_I0^2 multiplying delta psi (or its conjugate).
  const std::vector<cplx>& coupling() const noexcept { return coup_; }
  cplx kinetic() const noexcept { return kin_; }

  /// Overwrites the two end values with the Robin closure.
  void close(std::vector<cplx>& u) const;
  /// d(delta psi)/dt on the full grid (end values follow the closure).
  std::vector<cplx> apply(std::vector<cplx> u) const;
  /// Robin residuals |u(0) - i l/mu u'(0)|, |u(d) + i l/mu u'(d)| from
  /// one-sided differences.
  std::array<double, 2> boundary_residuals(const std::vector<cplx>& u) const;

 private:
  int n_;
  double h_;
  bool conjugate_;
  cplx kin_;
  cplx robin_;  // i lcoh / massRatio
  cplx c0_;
  std::vector<cplx> psi0_;
  std::vector<cplx> pot_;
  std::vector<cplx> coup_;
};

/// psi_I0 = (psi_+ + psi_-)/sqrt(2) resampled onto n_points samples by cubic
/// interpolation, in the requested phase gauge.
std::vector<cplx> symmetric_base(const FieldSolution& base, int n_points, BasePhase phase = BasePhase::Drive);

/// Time derivative of delta psi; delta_psi.size() sets the grid. Throws
/// GridMismatch when the base does not match the parameters.
std::vector<cplx> linearized_rhs(const std::vector<cplx>& delta_psi, const FieldSolution& base,
                                 const EffectiveParams& ep, bool conjugate_coupling = false,
                                 BasePhase phase = BasePhase::Transmitted);

/// Xi = [ln N(b) - ln N(a)] / (t_b - t_a). Throws ZeroNorm.
double growth_rate_xi(const PerturbationState& a, const PerturbationState& b, XiNorm norm = XiNorm::MaxAbs,
                      int probe_index = 0);

/// Trapezoidal (Crank-Nicolson) evolution of a Gaussian perturbation.
/// Throws LinearSolveFailure.
EvolutionResult evolve_perturbation(const FieldSolution& base, const EffectiveParams& ep,
                                    const StabilityOptions& options = {});

std::map<BranchLabel, StabilityReport> classify_branches(const std::map<BranchLabel, FieldSolution>& branches,
                                                         const EffectiveParams& ep,
                                                         const StabilityOptions& options = {});

}  // namespace slpt
