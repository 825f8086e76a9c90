#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slpt/coupled_mode.hpp"

namespace slpt {

enum class BranchLabel { Unique, Upper, Middle, Lower };

const char* to_string(BranchLabel label);
BranchLabel branch_label_from_string(const std::string& text);

struct ScanRange {
  double eps_min = 0.0;
  double eps_max = 0.0;
  int n_points = 2;

  double value(int i) const;
  double spacing() const;
};

struct SpectrumPoint {
  double epsilon = 0.0;
  double T = 0.0;
  double R = 0.0;
  cplx shooting_value{0.0, 0.0};
  double residual = 0.0;  // |psi_-(d)|
  int branch_id = 0;
  int arc_index = 0;
  bool converged = false;
  int newton_iters = 0;
  BranchLabel label = BranchLabel::Unique;
  std::string error;
};

struct MultiValuedInterval {
  double eps_lo = 0.0;
  double eps_hi = 0.0;
  int max_solutions = 1;
};

struct ContinuationSettings {
  /// Step bounds as fractions of the scanned epsilon range.
  double min_step = 1e-4;
  double max_step = 1e-1;
  double initial_step = 1e-2;
  int max_steps = 20000;
  int max_corrector_iters = 12;
};

struct NonlinearSpectrum {
  /// Every distinct converged solution on the scan grid, ordered by epsilon
  /// and then by descending T; unconverged grid points are kept with
  /// converged = false.
  std::vector<SpectrumPoint> points;
  /// Raw pseudo-arclength curve points (irregular epsilon) through every
  /// detected fold region, in traversal order.
  std::vector<SpectrumPoint> curve;
  std::vector<MultiValuedInterval> multivalued;
  /// Epsilon values at which the continuation curve turned.
  std::vector<double> folds;
  /// Number of fold regions where continuation failed to get through.
  int truncated_regions = 0;
  /// Every grid point has a solution and every fold region was traced through.
  bool all_converged = true;
};

struct PeakReport {
  std::vector<double> peak_positions;
  std::vector<double> peak_heights;
  double first_peak_shift = std::numeric_limits<double>::quiet_NaN();
};

/// Pointwise solve_linear over a uniform grid; SingularSystem is recorded
/// per point and the scan continues.
std::vector<SpectrumPoint> scan_linear(const ScanRange& range, const EffectiveParams& ep, const Grid& grid);

NonlinearSpectrum scan_nonlinear(const ScanRange& range, cplx alpha, const EffectiveParams& ep, const Grid& grid,
                                 const SolverSettings& settings = {}, const ContinuationSettings& cont = {},
                                 std::optional<cplx> initial_guess = std::nullopt);

/// Distinctness test used for deduplication: |s1 - s2| > 1e-6 |alpha|.
bool distinct_solutions(cplx s1, cplx s2, cplx alpha);

/// Every stationary solution at `eps` reachable on the traced spectrum,
/// ordered by descending T. Each is re-solved at exactly `eps`.
std::vector<FieldSolution> solutions_at(const NonlinearSpectrum& spectrum, double eps, cplx alpha,
                                        const EffectiveParams& ep, const Grid& grid,
                                        const SolverSettings& settings = {});

enum class PeakBranch { Lower, Upper };

/// Local maxima of T with prominence above `prominence`. Multi-valued
/// spectra are reduced to their lowest (or highest) branch first. Peak
/// positions are refined by a parabola through the three samples around
/// each maximum. Throws EmptySpectrum.
PeakReport find_peaks(const std::vector<SpectrumPoint>& spectrum, double prominence,
                      PeakBranch branch = PeakBranch::Lower);

/// Same, with first_peak_shift measured against `reference`'s first peak.
PeakReport find_peaks(const std::vector<SpectrumPoint>& spectrum, double prominence,
                      const std::vector<SpectrumPoint>& reference, PeakBranch branch = PeakBranch::Lower);

/// Peaks of a traced spectrum. With PeakBranch::Upper a peak whose grid
/// neighbourhood contains continuation-curve points is moved to the
/// highest-T curve point there, so a peak bent over a fold sits at its tip.
PeakReport find_peaks(const NonlinearSpectrum& spectrum, double prominence, PeakBranch branch = PeakBranch::Upper);

/// Replaces each peak by the golden-section maximum of the linear
/// transmission within +-half_width of it (positions and heights).
PeakReport refine_linear_peaks(const PeakReport& peaks, double half_width, const EffectiveParams& ep,
                               const Grid& grid, double tol = 1e-10);

/// First epsilon at which T reaches `fraction` of the first peak height,
/// linearly interpolated between samples. NaN if there is no peak.
double resonance_onset(const std::vector<SpectrumPoint>& spectrum, double prominence, double fraction);

struct BandGap {
  double eps_lo = 0.0;
  double eps_hi = 0.0;
  double threshold = 0.0;
};

/// Widest contiguous run of samples with T below `ratio` times the height of
/// the first peak above the run.
std::optional<BandGap> find_band_gap(const std::vector<SpectrumPoint>& spectrum, double prominence, double ratio);

struct ShiftRow {
  double alpha = 0.0;
  double chibar = 0.0;
  double effective_nonlinearity = 0.0;  // chibar |alpha|^2
  double first_peak = std::numeric_limits<double>::quiet_NaN();
  double shift = std::numeric_limits<double>::quiet_NaN();
  /// Largest Newton residual |psi_-(d)| over the scan's converged points.
  double max_residual = 0.0;
  double tolerance = 0.0;
  int converged_points = 0;
  bool ok = false;
  std::string error;
};

struct ShiftStudyOptions {
  ScanRange range;
  double prominence = 0.02;
  /// Upper: the transmission maximum, at the fold tip once the peak is
  /// bistable. Lower: the peak of the lowest branch.
  PeakBranch branch = PeakBranch::Upper;
};

/// First-peak shift relative to the chibar = 0 spectrum (peak refined by
/// refine_linear_peaks) for every (alpha, chibar) pair, alpha-major.
/// Failures are recorded per row.
std::vector<ShiftRow> shift_study(const std::vector<double>& alpha_values, const std::vector<double>& chi_values,
                                  const EffectiveParams& base, const Grid& grid, const ShiftStudyOptions& options,
                                  const SolverSettings& settings = {});

}  // namespace slpt
