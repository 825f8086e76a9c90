#pragma once

#include <optional>
#include <string>
#include <vector>

#include "slpt/config.hpp"
#include "slpt/table.hpp"

namespace slpt {

struct RunRequest {
  Mode mode = Mode::Linear;
  /// Exact config bytes; hashed into every table preamble.
  std::string config_text;
  /// Overrides [output] dir when non-empty.
  std::string out_dir;
  /// Prior spectrum table used to warm-start the nonlinear solver.
  std::optional<std::string> seed_from;
  /// Fixed timestamp for reproducible preambles; empty uses the clock.
  std::string timestamp;
};

struct RunResult {
  /// 0 on full success, 1 when any point failed (failures are in the tables).
  int exit_status = 0;
  std::vector<std::string> files;
  std::vector<std::string> messages;
};

/// Field dump rows (z, Re psi+, Im psi+, Re psi-, Im psi-).
OutputTable field_table(const FieldSolution& sol);

/// Dispatches to the module pipeline for `request.mode` and writes its
/// tables. Throws ValidationError for a config that lacks what the mode
/// needs and IoError for filesystem failures.
RunResult run(const RunConfig& config, const RunRequest& request);

}  // namespace slpt
