#include "slpt/run.hpp"

#include <cmath>
#include <filesystem>
#include <fmt/format.h>

#include "slpt/errors.hpp"

namespace slpt {

namespace fs = std::filesystem;

namespace {

class Writer {
 public:
  Writer(const RunRequest& req, const RunConfig& cfg, RunResult& result) : result_(result) {
    dir_ = !req.out_dir.empty() ? req.out_dir : (!cfg.output_dir.empty() ? cfg.output_dir : std::string("."));
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError(fmt::format("cannot create output directory '{}': {}", dir_, ec.message()));
    meta_.config_sha256 = sha256_hex(req.config_text);
    meta_.tool_version = tool_version();
    meta_.timestamp = req.timestamp.empty() ? utc_timestamp() : req.timestamp;
    meta_.extra.emplace_back("mode", to_string(req.mode));
  }

  void write(const std::string& name, const OutputTable& table) {
    const std::string path = (fs::path(dir_) / name).string();
    write_table(path, table, meta_);
    result_.files.push_back(path);
  }

 private:
  RunResult& result_;
  std::string dir_;
  TableMetadata meta_;
};

std::vector<std::string> spectrum_header() {
  return {"epsilon", "T", "R", "branch_id", "label", "converged", "newton_iters", "residual", "shoot_re", "shoot_im", "error"};
}

void add_spectrum_row(OutputTable& t, const SpectrumPoint& p) {
  t.add_row({p.epsilon, p.T, p.R, p.branch_id, std::string(to_string(p.label)), p.converged ? 1 : 0,
             p.newton_iters, p.residual, p.shooting_value.real(), p.shooting_value.imag(), p.error});
}

OutputTable peak_table(const PeakReport& rep) {
  OutputTable t({"index", "epsilon", "T"});
  for (std::size_t i = 0; i < rep.peak_positions.size(); ++i)
    t.add_row({static_cast<int>(i + 1), rep.peak_positions[i], rep.peak_heights[i]});
  return t;
}

int run_params(const RunConfig& cfg, Writer& out, RunResult& result) {
  const OpticalParams& p = *cfg.optical;
  std::vector<std::string> header;
  if (cfg.sweep) {
    header.push_back(cfg.sweep->axis1.name);
    if (cfg.sweep->axis2) header.push_back(cfg.sweep->axis2->name);
  }
  for (const char* c : {"Omega", "DeltaP", "Vbar", "chibar_re", "chibar_im", "lcoh", "beta", "Lambda",
                        "massRatio_re", "massRatio_im", "error"})
    header.emplace_back(c);
  OutputTable t(header);

  std::vector<SweepPoint> points;
  if (cfg.sweep) {
    points = sweep_effective(p, cfg.d, cfg.sweep->axis1, cfg.sweep->axis2);
  } else {
    SweepPoint pt;
    try {
      pt.eff = derive_effective(p, cfg.d);
    } catch (const Error& e) {
      pt.error = e.what();
    }
    points.push_back(pt);
  }

  int failures = 0;
  for (const auto& pt : points) {
    OpticalParams q = p;
    std::vector<Cell> row;
    if (cfg.sweep) {
      set_optical_field(q, cfg.sweep->axis1.name, pt.x1);
      row.emplace_back(pt.x1);
      if (cfg.sweep->axis2) {
        set_optical_field(q, cfg.sweep->axis2->name, pt.x2);
        row.emplace_back(pt.x2);
      }
    }
    row.emplace_back(q.Omega);
    row.emplace_back(q.DeltaP);
    if (pt.eff) {
      const auto& e = *pt.eff;
      for (double v : {e.Vbar, e.chibar.real(), e.chibar.imag(), e.lcoh, e.beta, e.Lambda, e.massRatio.real(),
                       e.massRatio.imag()})
        row.emplace_back(v);
      row.emplace_back(std::string());
    } else {
      ++failures;
      for (int k = 0; k < 8; ++k) row.emplace_back(std::numeric_limits<double>::quiet_NaN());
      row.emplace_back(pt.error);
    }
    t.add_row(row);
  }
  out.write("params.csv", t);
  if (failures) result.messages.push_back(fmt::format("{} parameter point(s) failed", failures));
  return failures ? 1 : 0;
}

int run_linear(const RunConfig& cfg, Writer& out, RunResult& result) {
  const auto ep = cfg.effective_params();
  const auto pts = scan_linear(*cfg.scan, ep, cfg.grid());
  OutputTable t(spectrum_header());
  int failures = 0;
  for (const auto& p : pts) {
    add_spectrum_row(t, p);
    if (!p.converged) ++failures;
  }
  out.write("spectrum.csv", t);
  try {
    const auto coarse = find_peaks(pts, cfg.prominence);
    out.write("peaks.csv", peak_table(refine_linear_peaks(coarse, cfg.scan->spacing(), ep, cfg.grid())));
  } catch (const EmptySpectrum& e) {
    result.messages.push_back(e.what());
  }
  if (failures) result.messages.push_back(fmt::format("{} scan point(s) failed", failures));
  return failures ? 1 : 0;
}

std::optional<cplx> warm_start(const RunRequest& req, double eps) {
  if (!req.seed_from) return std::nullopt;
  const auto guess = seed_from_table(read_table(*req.seed_from), eps);
  if (!guess) throw ValidationError(fmt::format("'{}' has no converged rows to seed from", *req.seed_from));
  return guess;
}

int run_spectrum(const RunConfig& cfg, const RunRequest& req, Writer& out, RunResult& result) {
  const auto ep = cfg.effective_params();
  const auto spec = scan_nonlinear(*cfg.scan, cfg.alpha, ep, cfg.grid(), cfg.solver, cfg.continuation,
                                   warm_start(req, cfg.scan->eps_min));
  OutputTable t(spectrum_header());
  int failures = 0;
  for (const auto& p : spec.points) {
    add_spectrum_row(t, p);
    if (!p.converged) ++failures;
  }
  out.write("spectrum.csv", t);

  OutputTable curve({"index", "epsilon", "T", "R", "branch_id", "residual", "shoot_re", "shoot_im"});
  for (std::size_t k = 0; k < spec.curve.size(); ++k) {
    const auto& p = spec.curve[k];
    curve.add_row({static_cast<int>(k), p.epsilon, p.T, p.R, p.branch_id, p.residual, p.shooting_value.real(),
                   p.shooting_value.imag()});
  }
  out.write("continuation.csv", curve);

  OutputTable mv({"eps_lo", "eps_hi", "max_solutions"});
  for (const auto& iv : spec.multivalued) mv.add_row({iv.eps_lo, iv.eps_hi, iv.max_solutions});
  for (double f : spec.folds) mv.add_trailer(fmt::format("fold: {}", format_number(f)));
  out.write("multivalued.csv", mv);

  if (failures) result.messages.push_back(fmt::format("{} scan point(s) failed", failures));
  if (spec.truncated_regions)
    result.messages.push_back(fmt::format("continuation stopped early in {} fold region(s)", spec.truncated_regions));
  return failures || spec.truncated_regions ? 1 : 0;
}

int run_shift(const RunConfig& cfg, Writer& out, RunResult& result) {
  const auto ep = cfg.effective_params();
  ShiftStudyOptions opt;
  opt.range = *cfg.scan;
  opt.prominence = cfg.prominence;
  opt.branch = cfg.shift_branch;
  const auto rows = shift_study(cfg.shift_alphas, cfg.shift_chis, ep, cfg.grid(), opt, cfg.solver);
  OutputTable t({"alpha", "chibar", "chibar_alpha2", "first_peak", "shift", "max_residual", "ok", "error"});
  int failures = 0;
  for (const auto& r : rows) {
    t.add_row({r.alpha, r.chibar, r.effective_nonlinearity, r.first_peak, r.shift, r.max_residual, r.ok ? 1 : 0,
               r.error});
    if (!r.ok) ++failures;
  }
  out.write("shift.csv", t);
  if (failures) result.messages.push_back(fmt::format("{} shift-study row(s) failed", failures));
  return failures ? 1 : 0;
}

std::map<BranchLabel, FieldSolution> stationary_branches(const RunConfig& cfg, const RunRequest& req,
                                                         const EffectiveParams& ep, const Grid& grid) {
  const double eps = cfg.stability->epsilon;
  std::vector<FieldSolution> sols;
  if (cfg.scan) {
    const auto spec = scan_nonlinear(*cfg.scan, cfg.alpha, ep, grid, cfg.solver, cfg.continuation,
                                     warm_start(req, cfg.scan->eps_min));
    sols = solutions_at(spec, eps, cfg.alpha, ep, grid, cfg.solver);
  } else {
    auto guess = warm_start(req, eps);
    if (!guess) guess = solve_linear(eps, cfg.alpha, ep, grid).shooting_value();
    sols.push_back(solve_nonlinear(eps, cfg.alpha, ep, grid, *guess, cfg.solver));
  }
  if (sols.empty()) throw NoConvergence(fmt::format("no stationary solution found at eps = {}", eps));

  std::map<BranchLabel, FieldSolution> out;
  if (sols.size() == 1) {
    out.emplace(BranchLabel::Unique, std::move(sols.front()));
  } else {
    out.emplace(BranchLabel::Upper, std::move(sols.front()));
    out.emplace(BranchLabel::Lower, std::move(sols.back()));
    if (sols.size() >= 3) out.emplace(BranchLabel::Middle, std::move(sols[1]));
  }
  return out;
}

int run_stability(const RunConfig& cfg, const RunRequest& req, Writer& out, RunResult& result) {
  const auto ep = cfg.effective_params();
  const auto grid = cfg.grid();
  auto branches = stationary_branches(cfg, req, ep, grid);
  const auto& want = cfg.stability->branch;
  if (want) {
    auto it = branches.find(*want);
    if (it == branches.end())
      throw ValidationError(fmt::format("branch {} does not exist at eps = {} ({} solution(s) found)",
                                        to_string(*want), cfg.stability->epsilon, branches.size()));
    auto only = std::move(it->second);
    branches.clear();
    branches.emplace(*want, std::move(only));
  }

  const StabilityOptions& opt = cfg.stability->options;

  OutputTable verdicts({"branch", "epsilon", "T", "asymptotic_rate", "verdict", "halted_early", "t_reached"});
  int failures = 0;
  for (const auto& [label, sol] : branches) {
    const std::string name = to_string(label);
    out.write(fmt::format("field_{}.csv", name), field_table(sol));
    EvolutionResult ev;
    try {
      ev = evolve_perturbation(sol, ep, opt);
    } catch (const Error& e) {
      ++failures;
      result.messages.push_back(fmt::format("branch {}: {}", name, e.what()));
      verdicts.add_row({name, sol.epsilon, sol.T, std::numeric_limits<double>::quiet_NaN(), std::string("failed"), 0,
                        0.0});
      continue;
    }
    const auto& rep = ev.report;
    OutputTable xi({"t", "max_abs_delta_psi", "Xi"});
    for (const auto& s : rep.xi_series) xi.add_row({s.t, s.max_abs, s.xi});
    xi.add_trailer(fmt::format("verdict: {} {} rate {}", name, to_string(rep.verdict), format_number(rep.asymptotic_rate)));
    out.write(fmt::format("stability_{}.csv", name), xi);
    if (opt.keep_snapshots) {
      const double h = ep.d / (opt.n_points - 1);
      OutputTable snaps({"t", "z", "Re_delta_psi", "Im_delta_psi"});
      for (const auto& s : ev.snapshots)
        for (std::size_t j = 0; j < s.delta_psi.size(); ++j)
          snaps.add_row({s.t, h * static_cast<double>(j), s.delta_psi[j].real(), s.delta_psi[j].imag()});
      out.write(fmt::format("snapshots_{}.csv", name), snaps);
    }
    verdicts.add_row({name, sol.epsilon, sol.T, rep.asymptotic_rate, std::string(to_string(rep.verdict)),
                      rep.halted_early ? 1 : 0, rep.t_reached});
    result.messages.push_back(fmt::format("branch {}: {} (rate {})", name, to_string(rep.verdict),
                                          format_number(rep.asymptotic_rate)));
  }
  out.write("verdicts.csv", verdicts);
  return failures ? 1 : 0;
}

}  // namespace

OutputTable field_table(const FieldSolution& sol) {
  OutputTable t({"z", "Re_psi_plus", "Im_psi_plus", "Re_psi_minus", "Im_psi_minus"});
  const std::size_t n = sol.psi_plus.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double z = n > 1 ? sol.d * static_cast<double>(k) / static_cast<double>(n - 1) : 0.0;
    t.add_row({z, sol.psi_plus[k].real(), sol.psi_plus[k].imag(), sol.psi_minus[k].real(), sol.psi_minus[k].imag()});
  }
  return t;
}

RunResult run(const RunConfig& config, const RunRequest& request) {
  validate_for_mode(config, request.mode);
  RunResult result;
  for (const auto& w : config.warnings) result.messages.push_back("warning: " + w);
  Writer out(request, config, result);
  switch (request.mode) {
    case Mode::Params: result.exit_status = run_params(config, out, result); break;
    case Mode::Linear: result.exit_status = run_linear(config, out, result); break;
    case Mode::Spectrum: result.exit_status = run_spectrum(config, request, out, result); break;
    case Mode::ShiftStudy: result.exit_status = run_shift(config, out, result); break;
    case Mode::Stability: result.exit_status = run_stability(config, request, out, result); break;
  }
  return result;
}

}  // namespace slpt
