// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <map>

#include "oracles.hpp"
#include "slpt/errors.hpp"
#include "slpt/spectrum.hpp"
#include "slpt/stability.hpp"

using namespace slpt;

namespace {

const double kD = 3.0 * M_PI;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, fmt::format("threw: {}", e.what())};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!out.pass) ++failures;
  fmt::print("[{}] {}: {} ({}) [{:.1f} s]\n", id, name, out.pass ? "PASS" : "FAIL", out.detail, secs);
  std::fflush(stdout);
}

// Newton residual audit across every nonlinear scan below.
struct ResidualAudit {
  long checked = 0;
  long within = 0;
  double worst_ratio = 0.0;

  void add(double residual, double tol, long points = 1) {
    checked += points;
    if (residual <= tol) within += points;
    worst_ratio = std::max(worst_ratio, residual / tol);
  }
  void add(const NonlinearSpectrum& s, double tol) {
    for (const auto* pts : {&s.points, &s.curve})
      for (const auto& p : *pts)
        if (p.converged) add(p.residual, tol);
  }
};

ResidualAudit audit;

// Duck-head set on a field grid that nests the 512-point stability grid.
struct Duck {
  EffectiveParams ep = make_effective(1.0, 0.1, 0.1, kD, 0.01);
  Grid grid{kD, 1022};
  cplx alpha = 0.1;
  ScanRange range{0.9, 1.6, 141};
  NonlinearSpectrum spec;
  double eps_stab = 1.10;
  std::map<BranchLabel, FieldSolution> branches;
  std::map<BranchLabel, StabilityReport> reports;
  double dt_drift = std::numeric_limits<double>::quiet_NaN();
};

Duck duck;

std::string verdict_string(const std::map<BranchLabel, StabilityReport>& r) {
  std::string s;
  for (const auto& [label, rep] : r)
    s += fmt::format("{}{}={} ({:+.5f})", s.empty() ? "" : ", ", to_string(label), to_string(rep.verdict),
                     rep.asymptotic_rate);
  return s;
}

bool expected_verdicts(const std::map<BranchLabel, StabilityReport>& r) {
  return r.size() == 3 && r.at(BranchLabel::Upper).verdict == Verdict::Unstable &&
         r.at(BranchLabel::Middle).verdict == Verdict::Unstable && r.at(BranchLabel::Lower).verdict == Verdict::Stable;
}

}  // namespace

int main() {
  criterion(1, "loss parameter beta", [] {
    const auto ep = make_effective(1.0, 0.0, 0.25, kD, 1.0 / 50.0);
    const double want = 12.0 * M_PI / 50.0;
    const double err = std::abs(ep.beta - want);
    return Outcome{err <= 1e-12, fmt::format("beta = {:.17g}, 12 pi/50 = {:.17g}, |diff| = {:.2e}", ep.beta, want, err)};
  });

  criterion(2, "lossless linear unitarity", [] {
    const ScanRange r{0.05, 12.0, 400};
    double worst = 0.0;
    int bad = 0;
    for (double V : {0.0, 1.0}) {
      const auto ep = make_effective(V, 0.0, 0.25, kD, 0.0);
      for (const auto& p : scan_linear(r, ep, Grid(kD, 1024))) {
        if (!p.converged) {
          ++bad;
          continue;
        }
        worst = std::max(worst, std::abs(p.T + p.R - 1.0));
      }
    }
    return Outcome{bad == 0 && worst <= 1e-6,
                   fmt::format("V in {{0, 1}}, 2 x 400 points, max |T+R-1| = {:.2e}, failed points = {}", worst, bad)};
  });

  criterion(3, "free-slab resonances", [] {
    const ScanRange r{0.05, 12.0, 400};
    const auto ep = make_effective(0.0, 0.0, 0.25, kD, 0.0);
    const Grid g(kD, 1024);
    const auto rough = find_peaks(scan_linear(r, ep, g), 0.02);
    const auto fine = refine_linear_peaks(rough, r.spacing(), ep, g);
    if (rough.peak_positions.size() < 6) return Outcome{false, fmt::format("{} peaks found", rough.peak_positions.size())};
    double worst_pos = 0.0, worst_T = 0.0;
    for (int n = 1; n <= 6; ++n) {
      const double res = oracle::free_resonance(n, kD);
      worst_pos = std::max(worst_pos, std::abs(rough.peak_positions[n - 1] - res));
      worst_T = std::max(worst_T, std::abs(fine.peak_heights[n - 1] - 1.0));
    }
    const double half = 0.5 * r.spacing();
    return Outcome{worst_pos <= half && worst_T <= 1e-4,
                   fmt::format("n = 1..6: max |peak - (n pi/d)^2| = {:.2e} (half spacing {:.2e}), max |T - 1| = {:.2e}",
                               worst_pos, half, worst_T)};
  });

  criterion(4, "bound-state onset and band gap", [] {
    const auto ep = make_effective(1.0, 0.0, 0.25, kD, 0.02);
    const auto s = scan_linear({0.05, 4.0, 400}, ep, Grid(kD, 1024));
    const double onset = resonance_onset(s, 0.02, 0.01);
    const auto gap = find_band_gap(s, 0.02, 0.1);
    const double want = 1.0 - 1.0 / 8.0;
    const bool ok = std::abs(onset - want) <= 0.05 && gap.has_value() && gap->eps_hi > gap->eps_lo;
    return Outcome{ok, fmt::format("onset (1% of first peak) = {:.4f} vs V - V^2/8 = {:.4f}; gap {}", onset, want,
                                   gap ? fmt::format("[{:.4f}, {:.4f}] below T = {:.4f}", gap->eps_lo, gap->eps_hi,
                                                     gap->threshold)
                                       : std::string("none"))};
  });

  criterion(5, "nonlinear peak shift: sign, collapse, linearity", [] {
    const auto ep = make_effective(0.5, 0.0, 0.25, kD, 0.02);
    const Grid g(kD, 1024);
    ShiftStudyOptions opt;
    opt.range = {0.05, 2.0, 391};
    const SolverSettings settings;

    const auto signs = shift_study({0.5}, {0.02, -0.02}, ep, g, opt, settings);
    const std::vector<double> chis_half{0.002, 0.004, 0.008, 0.016, 0.02, 0.024, 0.028, 0.032};
    std::vector<double> chis_quarter;
    for (double c : chis_half) chis_quarter.push_back(4.0 * c);
    const auto rows = shift_study({0.5}, chis_half, ep, g, opt, settings);
    const auto quarter = shift_study({0.25}, chis_quarter, ep, g, opt, settings);
    for (const auto* set : {&signs, &rows, &quarter})
      for (const auto& r : *set)
        if (r.ok) audit.add(r.max_residual, r.tolerance, r.converged_points);
    for (const auto* set : {&signs, &rows, &quarter})
      for (const auto& r : *set)
        if (!r.ok) return Outcome{false, fmt::format("row alpha = {} chi = {} failed: {}", r.alpha, r.chibar, r.error)};

    const bool sign_ok = signs[0].shift > 0.0 && signs[1].shift < 0.0;
    double worst_collapse = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i)
      worst_collapse = std::max(worst_collapse, std::abs(rows[i].shift - quarter[i].shift) / std::abs(rows[i].shift));

    // upper half of the chi |alpha|^2 range
    const double lo = rows.front().effective_nonlinearity, hi = rows.back().effective_nonlinearity;
    std::vector<double> x, y;
    for (const auto* set : {&rows, &quarter})
      for (const auto& r : *set)
        if (r.effective_nonlinearity >= 0.5 * (lo + hi)) {
          x.push_back(r.effective_nonlinearity);
          y.push_back(r.shift);
        }
    const double fit = oracle::affine_fit_residual(x, y);
    std::string table;
    for (const auto& r : rows) table += fmt::format(" {:g}:{:.4f}", r.effective_nonlinearity, r.shift);
    return Outcome{sign_ok && worst_collapse <= 0.10 && fit <= 0.15 && x.size() >= 3,
                   fmt::format("shift(chi=+0.02) = {:+.4f}, shift(chi=-0.02) = {:+.4f}; max collapse mismatch {:.2e}; "
                               "affine fit residual {:.2f}% over {} points in [{:g}, {:g}]; chi|a|^2:shift{}",
                               signs[0].shift, signs[1].shift, worst_collapse, 100.0 * fit, x.size(), 0.5 * (lo + hi), hi,
                               table)};
  });

  criterion(6, "multi-valued window with three solutions", [] {
    duck.spec = scan_nonlinear(duck.range, duck.alpha, duck.ep, duck.grid);
    audit.add(duck.spec, SolverSettings{}.tolerance_for(duck.alpha));
    const auto& s = duck.spec;

    // converged solutions per grid point, run-length compressed
    std::vector<int> counts;
    std::map<double, int> per_eps;
    for (const auto& p : s.points)
      if (p.converged) ++per_eps[p.epsilon];
    for (int i = 0; i < duck.range.n_points; ++i) {
      const int c = per_eps.count(duck.range.value(i)) ? per_eps[duck.range.value(i)] : 0;
      if (counts.empty() || counts.back() != c) counts.push_back(c);
    }
    std::string seq;
    for (int c : counts) seq += (seq.empty() ? "" : "->") + std::to_string(c);

    if (s.multivalued.size() != 1) return Outcome{false, fmt::format("{} multi-valued intervals, counts {}", s.multivalued.size(), seq)};
    const auto iv = s.multivalued.front();

    // independent count at the middle of the window and outside it
    const oracle::Model m{1.0, 0.1, 0.1, duck.ep.massRatio, kD};
    const double mid = 0.5 * (iv.eps_lo + iv.eps_hi);
    const auto inside = oracle::backward_transmissions(m, mid, 0.1, duck.grid.n_steps, 2000);
    const auto outside = oracle::backward_transmissions(m, iv.eps_lo - 0.05, 0.1, duck.grid.n_steps, 2000);

    // the window is the lowest-band resonance bent over by the nonlinearity
    auto lin = duck.ep;
    lin.chibar = 0.0;
    const auto peaks = find_peaks(scan_linear({0.8, 2.5, 341}, lin, duck.grid), 0.02);
    const double first = peaks.peak_positions.empty() ? NAN : peaks.peak_positions.front();
    const bool from_first = first >= iv.eps_lo - 0.1 && first <= iv.eps_hi;

    const bool ok = iv.max_solutions == 3 && s.folds.size() == 2 && counts == std::vector<int>{1, 3, 1} &&
                    inside.size() == 3 && outside.size() == 1 && s.all_converged && from_first;
    return Outcome{ok, fmt::format("window [{:.5f}, {:.5f}], max solutions {}, folds {}, counts {}, oracle count {} "
                                   "inside / {} outside; first linear resonance at {:.4f}",
                                   iv.eps_lo, iv.eps_hi, iv.max_solutions, s.folds.size(), seq, inside.size(),
                                   outside.size(), first)};
  });

  criterion(7, "branch stability verdicts", [] {
    const auto sols = solutions_at(duck.spec, duck.eps_stab, duck.alpha, duck.ep, duck.grid);
    if (sols.size() != 3) return Outcome{false, fmt::format("{} solutions at eps = {}", sols.size(), duck.eps_stab)};
    for (const auto& s : sols) audit.add(s.residual, SolverSettings{}.tolerance_for(duck.alpha));
    duck.branches = {{BranchLabel::Upper, sols[0]}, {BranchLabel::Middle, sols[1]}, {BranchLabel::Lower, sols[2]}};

    StabilityOptions o;
    o.t_end = 400.0;
    duck.reports = classify_branches(duck.branches, duck.ep, o);
    StabilityOptions other_seed = o;
    other_seed.seed.center = 2.0;
    other_seed.seed.width = 0.5;
    const auto seeded = classify_branches(duck.branches, duck.ep, other_seed);
    StabilityOptions half_dt = o;
    half_dt.dt = 0.5 * o.dt;
    const auto halved = classify_branches(duck.branches, duck.ep, half_dt);

    duck.dt_drift = 0.0;
    for (const auto& [label, rep] : duck.reports)
      duck.dt_drift = std::max(duck.dt_drift, std::abs(rep.asymptotic_rate - halved.at(label).asymptotic_rate));

    const bool ok = expected_verdicts(duck.reports) && expected_verdicts(seeded) && expected_verdicts(halved);
    return Outcome{ok, fmt::format("eps = {}, T = {:.4f}/{:.4f}/{:.4f}; default: {}; seed at z = 2 width 0.5: {}; "
                                   "dt/2: {}",
                                   duck.eps_stab, sols[0].T, sols[1].T, sols[2].T, verdict_string(duck.reports),
                                   verdict_string(seeded), verdict_string(halved))};
  });

  criterion(8, "evolution rate equals the leading eigenvalue", [] {
    const oracle::Model m{1.0, 0.1, 0.1, duck.ep.massRatio, kD};
    const int stride = duck.grid.n_steps / 511;
    StabilityOptions o;
    o.t_end = 400.0;

    FieldSolution zero = solve_linear(duck.eps_stab, 0.0, duck.ep, duck.grid);
    std::vector<std::pair<std::string, FieldSolution>> bases{{"zero", zero}};
    std::vector<double> rates{evolve_perturbation(zero, duck.ep, o).report.asymptotic_rate};
    for (auto label : {BranchLabel::Lower, BranchLabel::Upper}) {
      bases.emplace_back(to_string(label), duck.branches.at(label));
      rates.push_back(duck.reports.at(label).asymptotic_rate);
    }
    double worst = 0.0;
    std::string detail;
    for (std::size_t k = 0; k < bases.size(); ++k) {
      const auto& b = bases[k].second;
      const auto psi = oracle::base_on_subgrid(b.psi_plus, b.psi_minus, stride);
      const double lam = oracle::max_real_eigenvalue(oracle::perturbation_matrix(m, duck.eps_stab, psi));
      worst = std::max(worst, std::abs(rates[k] - lam));
      detail += fmt::format("{}{}: rate {:+.6f} eig {:+.6f}", k ? "; " : "", bases[k].first, rates[k], lam);
    }
    return Outcome{worst <= 1e-3 && bases.size() >= 3, fmt::format("512 points, {}; max |diff| = {:.2e}", detail, worst)};
  });

  criterion(9, "convergence: integrator order, time-step drift, Newton residuals", [] {
    const auto ep = make_effective(1.0, 0.05, 0.25, kD, 0.02);
    const cplx s = solve_linear(1.2, 0.3, ep, Grid(kD, 2048)).psi_minus.front();
    std::vector<FieldSolution> sols;
    for (int n : {256, 512, 1024}) sols.push_back(integrate_ivp(0.3, s, 1.2, ep, Grid(kD, n)));
    const auto diff = [](const FieldSolution& fine, const FieldSolution& coarse) {
      double w = 0.0;
      for (std::size_t i = 0; i < coarse.psi_plus.size(); ++i)
        w = std::max({w, std::abs(fine.psi_plus[2 * i] - coarse.psi_plus[i]),
                      std::abs(fine.psi_minus[2 * i] - coarse.psi_minus[i])});
      return w;
    };
    const double order = std::log2(diff(sols[1], sols[0]) / diff(sols[2], sols[1]));
    const bool ok = order >= 3.7 && duck.dt_drift <= 1e-4 && audit.checked > 0 && audit.within == audit.checked;
    return Outcome{ok, fmt::format("order {:.3f}; dt-halving rate drift {:.2e}; Newton residual within tolerance at "
                                   "{}/{} converged points (worst residual/tol {:.3f})",
                                   order, duck.dt_drift, audit.within, audit.checked, audit.worst_ratio)};
  });

  fmt::print("{} of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
