#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "slpt/errors.hpp"
#include "slpt/spectrum.hpp"

using namespace slpt;

namespace {

const double kD = 3.0 * M_PI;

std::vector<SpectrumPoint> synthetic(const ScanRange& r, double (*f)(double)) {
  std::vector<SpectrumPoint> out;
  for (int i = 0; i < r.n_points; ++i) {
    SpectrumPoint p;
    p.epsilon = r.value(i);
    p.T = f(p.epsilon);
    p.converged = true;
    out.push_back(p);
  }
  return out;
}

double two_bumps(double e) { return 0.8 * std::exp(-std::pow((e - 1.0) / 0.05, 2)) + std::exp(-std::pow((e - 2.0) / 0.05, 2)); }

// Shared duck-head scan; it takes a few seconds.
struct Duck {
  EffectiveParams ep = make_effective(1.0, 0.1, 0.1, kD, 0.01);
  Grid grid{kD, 1024};
  NonlinearSpectrum spec = scan_nonlinear({0.9, 1.6, 141}, 0.1, ep, grid);
};

const Duck& duck() {
  static const Duck d;
  return d;
}

}  // namespace

TEST_CASE("labels and distinctness") {
  CHECK(std::string(to_string(BranchLabel::Upper)) == "U");
  CHECK(std::string(to_string(BranchLabel::Unique)) == "unique");
  CHECK(branch_label_from_string("M") == BranchLabel::Middle);
  CHECK(branch_label_from_string("L") == BranchLabel::Lower);
  CHECK_THROWS(branch_label_from_string("X"));
  CHECK(distinct_solutions(0.0, 2e-6, 1.0));
  CHECK_FALSE(distinct_solutions(0.0, 5e-7, 1.0));
  CHECK_FALSE(distinct_solutions(0.0, 2e-6, 10.0));
}

TEST_CASE("scan range") {
  const ScanRange r{0.05, 12.0, 400};
  CHECK(r.value(0) == 0.05);
  CHECK(r.value(399) == doctest::Approx(12.0).epsilon(1e-15));
  CHECK(r.spacing() == doctest::Approx(11.95 / 399));
}

TEST_CASE("peaks, onset and gap on a synthetic spectrum") {
  const ScanRange r{0.5, 2.5, 401};
  const auto s = synthetic(r, two_bumps);
  const auto peaks = find_peaks(s, 0.02);
  REQUIRE(peaks.peak_positions.size() == 2);
  CHECK(peaks.peak_positions[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(peaks.peak_positions[1] == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(peaks.peak_heights[0] == doctest::Approx(0.8).epsilon(1e-9));

  // 1% of a Gaussian's height is reached sqrt(ln 100) widths from its centre
  const double onset = resonance_onset(s, 0.02, 0.01);
  CHECK(onset == doctest::Approx(1.0 - 0.05 * std::sqrt(std::log(100.0))).epsilon(1e-3));

  const auto gap = find_band_gap(s, 0.02, 0.1);
  REQUIRE(gap.has_value());
  const double edge = 0.05 * std::sqrt(std::log(8.0));  // 0.8 e^{-x^2} = 0.1
  CHECK(gap->eps_lo == doctest::Approx(1.0 + edge).epsilon(1e-2));
  CHECK(gap->eps_hi == doctest::Approx(2.0 - 0.05 * std::sqrt(std::log(10.0))).epsilon(1e-2));

  const auto shifted = synthetic(r, [](double e) { return two_bumps(e - 0.1); });
  CHECK(find_peaks(shifted, 0.02, s).first_peak_shift == doctest::Approx(0.1).epsilon(1e-3));

  CHECK(find_peaks(s, 2.0).peak_positions.empty());
  CHECK(std::isnan(resonance_onset(s, 2.0, 0.01)));
}

TEST_CASE("empty spectra are rejected") {
  std::vector<SpectrumPoint> none(3);
  CHECK_THROWS_AS(find_peaks(none, 0.02), EmptySpectrum);
  CHECK_THROWS_AS(find_peaks(std::vector<SpectrumPoint>{}, 0.02), EmptySpectrum);
}

TEST_CASE("linear scan matches pointwise solves") {
  const auto ep = make_effective(1.0, 0.0, 0.25, kD, 0.02);
  const Grid g(kD, 1024);
  const auto s = scan_linear({0.5, 2.0, 7}, ep, g);
  REQUIRE(s.size() == 7);
  for (const auto& p : s) {
    CHECK(p.converged);
    CHECK(p.T == solve_linear(p.epsilon, 1.0, ep, g).T);
  }
}

TEST_CASE("refined linear peaks of the free slab sit on the resonances") {
  const auto ep = make_effective(0.0, 0.0, 0.25, kD, 0.0);
  const Grid g(kD, 2048);
  const ScanRange r{0.05, 4.5, 200};
  const auto rough = find_peaks(scan_linear(r, ep, g), 0.02);
  const auto fine = refine_linear_peaks(rough, r.spacing(), ep, g);
  REQUIRE(fine.peak_positions.size() >= 6);
  for (int n = 1; n <= 6; ++n) {
    CHECK(fine.peak_positions[n - 1] == doctest::Approx(oracle::free_resonance(n, kD)).epsilon(1e-6));
    CHECK(fine.peak_heights[n - 1] == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("duck-head spectrum: three solutions agree with the backward-shooting oracle") {
  const auto& d = duck();
  REQUIRE(d.spec.multivalued.size() >= 1);
  const auto& iv = d.spec.multivalued.front();
  CHECK(iv.max_solutions == 3);
  CHECK(iv.eps_lo < 1.07);
  CHECK(iv.eps_hi > 1.07);
  CHECK(d.spec.folds.size() == 2);

  const auto sols = solutions_at(d.spec, 1.07, 0.1, d.ep, d.grid);
  REQUIRE(sols.size() == 3);
  const oracle::Model m{1.0, 0.1, 0.1, d.ep.massRatio, kD};
  const auto ref = oracle::backward_transmissions(m, 1.07, 0.1, 1024, 2000);
  REQUIRE(ref.size() == 3);
  // sols descend in T, the oracle ascends
  for (int k = 0; k < 3; ++k) CHECK(sols[k].T == doctest::Approx(ref[2 - k]).epsilon(1e-6));

  const auto one = solutions_at(d.spec, 0.95, 0.1, d.ep, d.grid);
  CHECK(one.size() == 1);
}

TEST_CASE("duck-head spectrum: labels and residuals") {
  const auto& d = duck();
  const double tol = SolverSettings{}.tolerance_for(0.1);
  int triples = 0;
  for (std::size_t i = 0; i < d.spec.points.size(); ++i) {
    const auto& p = d.spec.points[i];
    if (!p.converged) continue;
    CHECK(p.residual <= tol);
    if (p.label == BranchLabel::Middle) ++triples;
  }
  CHECK(triples > 0);
  for (const auto& c : d.spec.curve)
    if (c.converged) CHECK(c.residual <= tol);
  CHECK(d.spec.all_converged);
}

TEST_CASE("weak nonlinearity: lower and upper peak coincide") {
  const auto ep = make_effective(0.5, 1e-4, 0.25, kD, 0.02);
  const Grid g(kD, 1024);
  const auto spec = scan_nonlinear({0.3, 0.9, 61}, 0.5, ep, g);
  CHECK(spec.multivalued.empty());
  const auto up = find_peaks(spec, 0.02, PeakBranch::Upper);
  const auto lo = find_peaks(spec, 0.02, PeakBranch::Lower);
  REQUIRE(up.peak_positions.size() == lo.peak_positions.size());
  CHECK(up.peak_positions.front() == lo.peak_positions.front());
}
