#include "slpt/param_map.hpp"

#include <cmath>
#include <fmt/format.h>

#include "slpt/errors.hpp"

namespace slpt {

namespace {

constexpr double kPoleTolerance = 1e-12;

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidArgument(what);
}

}  // namespace

std::vector<std::string> validate(const OpticalParams& p) {
  for (double v : {p.Gamma, p.Gamma1D, p.Delta0, p.DeltaP, p.delta, p.Omega, p.n0, p.n1, p.k0})
    require(std::isfinite(v), "optical parameters must be finite");
  require(p.Gamma > 0.0, "Gamma must be positive");
  require(p.Gamma1D > 0.0, "Gamma1D must be positive");
  require(p.n0 > 0.0, "n0 must be positive");
  require(p.k0 > 0.0, "k0 must be positive");
  require(p.n1 >= 0.0, "n1 must be non-negative");
  require(p.n1 / p.n0 <= 0.5, fmt::format("n1/n0 = {} exceeds 0.5", p.n1 / p.n0));
  if (p.Delta0 == 0.0) throw DivisionByZero("Delta0 must be non-zero");
  if (p.DeltaP == 0.0) throw DivisionByZero("DeltaP must be non-zero");
  if (p.Omega == 0.0) throw DivisionByZero("Omega must be non-zero");

  std::vector<std::string> warnings;
  if (p.n1 / p.n0 > 0.1)
    warnings.push_back(fmt::format("n1/n0 = {} is not small; lattice model assumes n1 << n0", p.n1 / p.n0));
  return warnings;
}

void validate(const EffectiveParams& ep) {
  require(std::isfinite(ep.Vbar) && std::isfinite(ep.chibar.real()) && std::isfinite(ep.chibar.imag()),
          "Vbar and chibar must be finite");
  require(std::isfinite(ep.massRatio.real()) && std::isfinite(ep.massRatio.imag()),
          "massRatio must be finite");
  require(ep.lcoh > 0.0 && std::isfinite(ep.lcoh), "lcoh must be positive");
  require(ep.d > 0.0 && std::isfinite(ep.d), "d must be positive");
  require(ep.massRatio != cplx(0.0, 0.0), "massRatio must be non-zero");
}

double control_factor(const OpticalParams& p) {
  const double omega2 = p.Omega * p.Omega;
  const double denom = omega2 - 0.5 * p.delta * p.Delta0;
  if (std::abs(denom) < kPoleTolerance)
    throw DivisionByZero(fmt::format("Omega^2 = delta*Delta0/2 (Lambda pole) at Omega = {}", p.Omega));
  return omega2 / denom;
}

double coherence_length_m(const OpticalParams& p) {
  const double abs_d0 = std::abs(p.Delta0);
  return (abs_d0 * abs_d0 + 0.25 * p.Gamma * p.Gamma) / (p.Gamma1D * p.n0 * abs_d0);
}

EffectiveParams derive_effective(const OpticalParams& p, double d) {
  validate(p);
  require(d > 0.0 && std::isfinite(d), "d must be positive");

  const double G = p.Gamma;
  const double abs_d0 = std::abs(p.Delta0);
  const double lambda = control_factor(p);

  EffectiveParams ep;
  ep.Lambda = lambda;
  ep.d = d;
  ep.lcoh = p.k0 * coherence_length_m(p);

  // n0 n1 / k0^2 is dimensionless; every rate is already in units of Gamma.
  ep.Vbar = lambda * p.Gamma1D * p.Gamma1D * p.delta * p.n0 * p.n1 * abs_d0 /
            (8.0 * p.Omega * p.Omega * p.k0 * p.k0 * (p.Delta0 * p.Delta0 + 0.25 * G * G));

  const double chi_re = lambda * lambda * p.Gamma1D * p.DeltaP /
                        (4.0 * ep.lcoh * (p.DeltaP * p.DeltaP + 0.25 * G * G));
  ep.chibar = chi_re * cplx(1.0, -G / (2.0 * p.DeltaP));

  ep.massRatio = cplx(1.0, -G / (2.0 * p.Delta0));
  ep.beta = (d / ep.lcoh) * (G / abs_d0);
  return ep;
}

EffectiveParams make_effective(double Vbar, cplx chibar, double lcoh, double d,
                               double gamma_over_abs_delta0, double delta0_sign) {
  require(gamma_over_abs_delta0 >= 0.0, "gamma_over_abs_delta0 must be non-negative");
  require(delta0_sign == 1.0 || delta0_sign == -1.0, "delta0_sign must be +1 or -1");
  EffectiveParams ep;
  ep.Vbar = Vbar;
  ep.chibar = chibar;
  ep.lcoh = lcoh;
  ep.d = d;
  // Gamma/(2 Delta0) = delta0_sign * gamma_over_abs_delta0 / 2
  ep.massRatio = cplx(1.0, -0.5 * delta0_sign * gamma_over_abs_delta0);
  ep.beta = (d / lcoh) * gamma_over_abs_delta0;
  ep.Lambda = 1.0;
  validate(ep);
  return ep;
}

double SweepAxis::value(int i) const {
  if (n <= 1) return min;
  return min + (max - min) * static_cast<double>(i) / static_cast<double>(n - 1);
}

void set_optical_field(OpticalParams& p, const std::string& name, double value) {
  if (name == "Gamma") p.Gamma = value;
  else if (name == "Gamma1D") p.Gamma1D = value;
  else if (name == "Delta0") p.Delta0 = value;
  else if (name == "DeltaP") p.DeltaP = value;
  else if (name == "delta") p.delta = value;
  else if (name == "Omega") p.Omega = value;
  else if (name == "n0") p.n0 = value;
  else if (name == "n1") p.n1 = value;
  else if (name == "k0") p.k0 = value;
  else throw InvalidArgument("unknown optical parameter '" + name + "'");
}

std::vector<SweepPoint> sweep_effective(const OpticalParams& p, double d, const SweepAxis& axis1,
                                        const std::optional<SweepAxis>& axis2) {
  require(axis1.n >= 1, "sweep axis needs at least one point");
  if (axis2) require(axis2->n >= 1, "sweep axis needs at least one point");
  // Validate names up front so a typo is not reported once per grid point.
  OpticalParams probe = p;
  set_optical_field(probe, axis1.name, axis1.min);
  if (axis2) set_optical_field(probe, axis2->name, axis2->min);

  const int n2 = axis2 ? axis2->n : 1;
  std::vector<SweepPoint> grid;
  grid.reserve(static_cast<std::size_t>(axis1.n) * n2);
  for (int i = 0; i < axis1.n; ++i) {
    for (int j = 0; j < n2; ++j) {
      SweepPoint pt;
      OpticalParams q = p;
      pt.x1 = axis1.value(i);
      set_optical_field(q, axis1.name, pt.x1);
      if (axis2) {
        pt.x2 = axis2->value(j);
        set_optical_field(q, axis2->name, pt.x2);
      }
      try {
        pt.eff = derive_effective(q, d);
      } catch (const Error& e) {
        pt.error = e.what();
      }
      grid.push_back(std::move(pt));
    }
  }
  return grid;
}

}  // namespace slpt
