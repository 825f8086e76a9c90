#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace slpt {

using cplx = std::complex<double>;

/// Bare optical inputs. Frequencies are in units of the total spontaneous
/// emission rate Gamma; densities and wave numbers are in SI (1/m).
struct OpticalParams {
  double Gamma = 1.0;
  double Gamma1D = 0.2;
  double Delta0 = -50.0;
  double DeltaP = 10.0;
  double delta = -0.01;
  double Omega = 1.0;
  double n0 = 1e7;
  double n1 = 1e6;
  double k0 = 1e4;
};

/// Dimensionless solver inputs. Lengths are in units of 1/k0, energies in
/// recoil units.
struct EffectiveParams {
  double Vbar = 0.0;
  cplx chibar{0.0, 0.0};
  double lcoh = 0.25;
  /// m / m_R = 1 - i Gamma / (2 Delta0)
  cplx massRatio{1.0, 0.0};
  double beta = 0.0;
  double d = 0.0;
  double Lambda = 1.0;
};

/// Throws InvalidArgument / DivisionByZero for hard violations; returns
/// human-readable warnings for soft ones (n1/n0 above 0.1).
std::vector<std::string> validate(const OpticalParams& p);

/// Throws InvalidArgument if lcoh <= 0, d <= 0, or a field is non-finite.
void validate(const EffectiveParams& ep);

/// Lambda = Omega^2 / (Omega^2 - delta Delta0 / 2). Throws DivisionByZero
/// within 1e-12 of the pole.
double control_factor(const OpticalParams& p);

/// Coherence length in metres.
double coherence_length_m(const OpticalParams& p);

EffectiveParams derive_effective(const OpticalParams& p, double d);

/// Effective parameters entered directly in the paper's reduced form:
/// gamma_over_abs_delta0 = Gamma/|Delta0| and the sign of Delta0 fix the
/// complex mass ratio and the loss parameter beta.
EffectiveParams make_effective(double Vbar, cplx chibar, double lcoh, double d,
                               double gamma_over_abs_delta0,
                               double delta0_sign = -1.0);

// ---------------------------------------------------------------------------
// Parameter sweeps

struct SweepAxis {
  std::string name;  // one of the OpticalParams field names
  double min = 0.0;
  double max = 0.0;
  int n = 1;

  double value(int i) const;
};

struct SweepPoint {
  double x1 = 0.0;
  double x2 = 0.0;
  std::optional<EffectiveParams> eff;  // empty when the point is poisoned
  std::string error;
};

/// Sets the named OpticalParams field. Throws InvalidArgument for unknown names.
void set_optical_field(OpticalParams& p, const std::string& name, double value);

/// Row-major grid (axis1 outer). Per-point failures are recorded in the point,
/// never thrown.
std::vector<SweepPoint> sweep_effective(const OpticalParams& p, double d,
                                        const SweepAxis& axis1,
                                        const std::optional<SweepAxis>& axis2 = std::nullopt);

}  // namespace slpt
