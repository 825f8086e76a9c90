#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slpt/coupled_mode.hpp"
#include "slpt/param_map.hpp"
#include "slpt/spectrum.hpp"
#include "slpt/stability.hpp"

namespace slpt {

enum class Mode { Params, Linear, Spectrum, ShiftStudy, Stability };

const char* to_string(Mode m);
/// Throws InvalidArgument for anything but the five subcommand names.
Mode mode_from_string(const std::string& text);

struct ParamSweep {
  SweepAxis axis1;
  std::optional<SweepAxis> axis2;
};

struct StabilityRequest {
  double epsilon = 0.0;
  /// Empty: every branch found at epsilon.
  std::optional<BranchLabel> branch;
  StabilityOptions options;
};

struct RunConfig {
  std::optional<Mode> mode;
  std::optional<OpticalParams> optical;
  std::optional<EffectiveParams> effective;
  double d = 0.0;
  std::optional<ScanRange> scan;
  cplx alpha{1.0, 0.0};
  bool has_drive = false;
  int n_steps = 0;  // 0: max(Grid::min_steps(d), 1024)
  SolverSettings solver;
  ContinuationSettings continuation;
  std::optional<StabilityRequest> stability;
  std::optional<ParamSweep> sweep;
  std::vector<double> shift_alphas;
  std::vector<double> shift_chis;
  PeakBranch shift_branch = PeakBranch::Upper;
  double prominence = 0.02;
  std::string output_dir;
  std::vector<std::string> warnings;

  /// Effective parameters from whichever source the config names.
  EffectiveParams effective_params() const;
  Grid grid() const;
};

/// Parses the INI-like text format. Throws ParseError (with line number) for
/// syntax errors, unknown sections or keys and malformed values;
/// ValidationError when the assembled config breaks an invariant.
RunConfig parse_config(const std::string& text);

/// Mode-specific checks once the subcommand is known. Throws ValidationError.
void validate_for_mode(const RunConfig& cfg, Mode mode);

}  // namespace slpt
