#include "slpt/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <fmt/format.h>

#include "slpt/errors.hpp"

namespace slpt {

namespace {

struct Entry {
  std::string value;
  std::size_t line = 0;
};

using Section = std::map<std::string, Entry>;

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"", {"mode"}},
      {"optical", {"Gamma", "Gamma1D", "Delta0", "DeltaP", "delta", "Omega", "n0", "n1", "k0", "d", "d_in_pi"}},
      {"effective",
       {"Vbar", "chibar", "chibar_phase", "lcoh", "d", "d_in_pi", "gamma_over_abs_delta0", "delta0_sign"}},
      {"scan", {"eps_min", "eps_max", "n_points", "prominence"}},
      {"drive", {"alpha", "alpha_phase"}},
      {"grid", {"n_steps"}},
      {"solver",
       {"newton_tol", "max_newton_iters", "fd_step", "max_damping_halvings", "cont_min_step", "cont_max_step",
        "cont_initial_step", "cont_max_steps"}},
      {"stability",
       {"epsilon", "branch", "n_points", "dt", "t_end", "snapshot_every", "norm", "probe_z", "conjugate_coupling",
        "base_phase", "rate_tol", "seed_center", "seed_width", "seed_amplitude", "keep_snapshots"}},
      {"sweep", {"axis1", "axis1_min", "axis1_max", "axis1_n", "axis2", "axis2_min", "axis2_max", "axis2_n"}},
      {"shift", {"alphas", "chis", "peak_branch"}},
      {"output", {"dir"}},
  };
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const Entry& e, const std::string& key) {
  double v = 0.0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw ParseError(e.line, fmt::format("'{}' expects a finite number, got '{}'", key, e.value));
  return v;
}

int to_int(const Entry& e, const std::string& key) {
  int v = 0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ParseError(e.line, fmt::format("'{}' expects an integer, got '{}'", key, e.value));
  return v;
}

bool to_bool(const Entry& e, const std::string& key) {
  if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no") return false;
  throw ParseError(e.line, fmt::format("'{}' expects true or false, got '{}'", key, e.value));
}

std::vector<double> to_list(const Entry& e, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double({trim(item), e.line}, key));
  if (out.empty()) throw ParseError(e.line, fmt::format("'{}' expects a comma-separated list", key));
  return out;
}

class Reader {
 public:
  explicit Reader(const std::map<std::string, Section>& doc) : doc_(doc) {}

  bool has_section(const std::string& name) const { return doc_.count(name) > 0; }

  const Entry* find(const std::string& section, const std::string& key) const {
    const auto s = doc_.find(section);
    if (s == doc_.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  }

  void number(const std::string& sec, const std::string& key, double& out) const {
    if (const auto* e = find(sec, key)) out = to_double(*e, key);
  }
  void integer(const std::string& sec, const std::string& key, int& out) const {
    if (const auto* e = find(sec, key)) out = to_int(*e, key);
  }
  void boolean(const std::string& sec, const std::string& key, bool& out) const {
    if (const auto* e = find(sec, key)) out = to_bool(*e, key);
  }

  // Fails with the line of `key` when present, else without a line.
  [[noreturn]] void fail(const std::string& sec, const std::string& key, const std::string& what) const {
    if (const auto* e = find(sec, key)) throw ValidationError(fmt::format("line {}: {}", e->line, what));
    throw ValidationError(what);
  }

  void require(bool ok, const std::string& sec, const std::string& key, const std::string& what) const {
    if (!ok) fail(sec, key, what);
  }

 private:
  const std::map<std::string, Section>& doc_;
};

double read_length(const Reader& r, const std::string& sec) {
  const auto* d = r.find(sec, "d");
  const auto* dpi = r.find(sec, "d_in_pi");
  if (d && dpi) r.fail(sec, "d_in_pi", fmt::format("[{}] sets both d and d_in_pi", sec));
  if (!d && !dpi) throw ValidationError(fmt::format("[{}] needs d or d_in_pi", sec));
  const double value = d ? to_double(*d, "d") : M_PI * to_double(*dpi, "d_in_pi");
  r.require(value > 0.0, sec, d ? "d" : "d_in_pi", "waveguide length d must be positive");
  return value;
}

}  // namespace

const char* to_string(Mode m) {
  switch (m) {
    case Mode::Params: return "params";
    case Mode::Linear: return "linear";
    case Mode::Spectrum: return "spectrum";
    case Mode::ShiftStudy: return "shift-study";
    case Mode::Stability: break;
  }
  return "stability";
}

Mode mode_from_string(const std::string& text) {
  for (Mode m : {Mode::Params, Mode::Linear, Mode::Spectrum, Mode::ShiftStudy, Mode::Stability})
    if (text == to_string(m)) return m;
  throw InvalidArgument(fmt::format("unknown mode '{}'", text));
}

EffectiveParams RunConfig::effective_params() const {
  if (effective) return *effective;
  if (optical) return derive_effective(*optical, d);
  throw ValidationError("config has no parameter source");
}

Grid RunConfig::grid() const { return Grid(d, n_steps > 0 ? n_steps : std::max(Grid::min_steps(d), 1024)); }

RunConfig parse_config(const std::string& text) {
  std::map<std::string, Section> doc;
  std::map<std::string, std::size_t> header_line;
  std::string current;
  std::istringstream in(text);
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(lineno, fmt::format("malformed section header '{}'", line));
      current = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!schema().count(current) || current.empty())
        throw ParseError(lineno, fmt::format("unknown section [{}]", current));
      header_line.emplace(current, lineno);
      doc[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(lineno, fmt::format("expected 'key = value', got '{}'", line));
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ParseError(lineno, "missing key before '='");
    if (!schema().at(current).count(key)) {
      if (current.empty()) throw ParseError(lineno, fmt::format("unknown key '{}'", key));
      throw ParseError(lineno, fmt::format("unknown key '{}' in [{}]", key, current));
    }
    if (value.empty()) throw ParseError(lineno, fmt::format("key '{}' has no value", key));
    auto& sec = doc[current];
    if (sec.count(key))
      throw ParseError(lineno, fmt::format("duplicate key '{}' (first set on line {})", key, sec.at(key).line));
    sec.emplace(key, Entry{value, lineno});
  }

  const Reader r(doc);
  RunConfig cfg;

  if (const auto* e = r.find("", "mode")) {
    try {
      cfg.mode = mode_from_string(e->value);
    } catch (const InvalidArgument& err) {
      throw ParseError(e->line, err.what());
    }
  }

  const bool has_optical = r.has_section("optical");
  const bool has_effective = r.has_section("effective");
  if (has_optical && has_effective) {
    const std::size_t later = std::max(header_line.at("optical"), header_line.at("effective"));
    throw ValidationError(fmt::format("line {}: exactly one of [optical] and [effective] may be given", later));
  }
  if (!has_optical && !has_effective) throw ValidationError("one of [optical] or [effective] is required");

  if (has_optical) {
    OpticalParams p;
    r.number("optical", "Gamma", p.Gamma);
    r.number("optical", "Gamma1D", p.Gamma1D);
    r.number("optical", "Delta0", p.Delta0);
    r.number("optical", "DeltaP", p.DeltaP);
    r.number("optical", "delta", p.delta);
    r.number("optical", "Omega", p.Omega);
    r.number("optical", "n0", p.n0);
    r.number("optical", "n1", p.n1);
    r.number("optical", "k0", p.k0);
    cfg.d = read_length(r, "optical");
    try {
      cfg.warnings = validate(p);
      control_factor(p);
    } catch (const Error& err) {
      throw ValidationError(fmt::format("line {}: [optical] {}", header_line.at("optical"), err.what()));
    }
    cfg.optical = p;
  } else {
    double vbar = 0.0, chi = 0.0, chi_phase = 0.0, lcoh = 0.0, gamma = 0.0, sign = -1.0;
    r.number("effective", "Vbar", vbar);
    r.number("effective", "chibar", chi);
    r.number("effective", "chibar_phase", chi_phase);
    r.number("effective", "gamma_over_abs_delta0", gamma);
    r.number("effective", "delta0_sign", sign);
    if (!r.find("effective", "lcoh")) throw ValidationError("[effective] needs lcoh");
    r.number("effective", "lcoh", lcoh);
    r.require(lcoh > 0.0, "effective", "lcoh", "lcoh must be positive");
    r.require(gamma >= 0.0, "effective", "gamma_over_abs_delta0", "gamma_over_abs_delta0 must be non-negative");
    r.require(sign == 1.0 || sign == -1.0, "effective", "delta0_sign", "delta0_sign must be +1 or -1");
    r.require(chi >= 0.0, "effective", "chibar", "chibar is a modulus and must be non-negative (use chibar_phase)");
    cfg.d = read_length(r, "effective");
    cfg.effective = make_effective(vbar, std::polar(chi, chi_phase), lcoh, cfg.d, gamma, sign);
  }

  if (r.has_section("scan")) {
    ScanRange s;
    r.number("scan", "eps_min", s.eps_min);
    r.number("scan", "eps_max", s.eps_max);
    r.integer("scan", "n_points", s.n_points);
    r.number("scan", "prominence", cfg.prominence);
    r.require(r.find("scan", "eps_min") && r.find("scan", "eps_max"), "scan", "eps_min",
              "[scan] needs eps_min and eps_max");
    r.require(s.eps_max > s.eps_min, "scan", "eps_max", "eps_max must exceed eps_min");
    r.require(s.n_points >= 2, "scan", "n_points", "n_points must be at least 2");
    r.require(cfg.prominence > 0.0, "scan", "prominence", "prominence must be positive");
    cfg.scan = s;
  }

  if (r.has_section("drive")) {
    double mod = 1.0, phase = 0.0;
    r.number("drive", "alpha", mod);
    r.number("drive", "alpha_phase", phase);
    r.require(mod >= 0.0, "drive", "alpha", "alpha is a modulus and must be non-negative");
    cfg.alpha = std::polar(mod, phase);
    cfg.has_drive = true;
  }

  r.integer("grid", "n_steps", cfg.n_steps);
  if (r.find("grid", "n_steps")) {
    const int minimum = Grid::min_steps(cfg.d);
    r.require(cfg.n_steps >= minimum, "grid", "n_steps",
              fmt::format("n_steps must be at least {} (64 d / pi)", minimum));
  }

  r.number("solver", "newton_tol", cfg.solver.newton_tol);
  r.integer("solver", "max_newton_iters", cfg.solver.max_newton_iters);
  r.number("solver", "fd_step", cfg.solver.fd_step);
  r.integer("solver", "max_damping_halvings", cfg.solver.max_damping_halvings);
  r.number("solver", "cont_min_step", cfg.continuation.min_step);
  r.number("solver", "cont_max_step", cfg.continuation.max_step);
  r.number("solver", "cont_initial_step", cfg.continuation.initial_step);
  r.integer("solver", "cont_max_steps", cfg.continuation.max_steps);
  r.require(cfg.solver.max_newton_iters > 0, "solver", "max_newton_iters", "max_newton_iters must be positive");
  r.require(cfg.solver.fd_step > 0.0, "solver", "fd_step", "fd_step must be positive");
  r.require(cfg.solver.max_damping_halvings >= 0, "solver", "max_damping_halvings",
            "max_damping_halvings must be non-negative");
  r.require(cfg.continuation.min_step > 0.0 && cfg.continuation.min_step <= cfg.continuation.max_step, "solver",
            "cont_min_step", "continuation steps need 0 < cont_min_step <= cont_max_step");
  r.require(cfg.continuation.max_steps > 0, "solver", "cont_max_steps", "cont_max_steps must be positive");

  if (r.has_section("stability")) {
    StabilityRequest req;
    auto& o = req.options;
    r.require(r.find("stability", "epsilon") != nullptr, "stability", "epsilon", "[stability] needs epsilon");
    r.number("stability", "epsilon", req.epsilon);
    if (const auto* e = r.find("stability", "branch")) {
      if (e->value != "all") {
        try {
          req.branch = branch_label_from_string(e->value);
        } catch (const Error& err) {
          throw ParseError(e->line, err.what());
        }
      }
    }
    r.integer("stability", "n_points", o.n_points);
    r.number("stability", "dt", o.dt);
    r.number("stability", "t_end", o.t_end);
    r.number("stability", "snapshot_every", o.snapshot_every);
    if (const auto* e = r.find("stability", "norm")) {
      if (e->value == "max_abs") o.norm = XiNorm::MaxAbs;
      else if (e->value == "probe_real") o.norm = XiNorm::ProbeReal;
      else throw ParseError(e->line, fmt::format("norm must be max_abs or probe_real, got '{}'", e->value));
    }
    r.number("stability", "probe_z", o.probe_z);
    r.boolean("stability", "conjugate_coupling", o.conjugate_coupling);
    if (const auto* e = r.find("stability", "base_phase")) {
      if (e->value == "transmitted") o.base_phase = BasePhase::Transmitted;
      else if (e->value == "drive") o.base_phase = BasePhase::Drive;
      else throw ParseError(e->line, fmt::format("base_phase must be transmitted or drive, got '{}'", e->value));
    }
    r.number("stability", "rate_tol", o.rate_tol);
    r.number("stability", "seed_center", o.seed.center);
    r.number("stability", "seed_width", o.seed.width);
    r.number("stability", "seed_amplitude", o.seed.amplitude);
    r.boolean("stability", "keep_snapshots", o.keep_snapshots);
    r.require(o.n_points >= 8, "stability", "n_points", "n_points must be at least 8");
    r.require(o.dt > 0.0, "stability", "dt", "dt must be positive");
    r.require(o.t_end > o.dt, "stability", "t_end", "t_end must exceed dt");
    r.require(o.snapshot_every >= o.dt, "stability", "snapshot_every", "snapshot_every must be at least dt");
    r.require(o.rate_tol > 0.0, "stability", "rate_tol", "rate_tol must be positive");
    r.require(o.seed.width > 0.0, "stability", "seed_width", "seed_width must be positive");
    r.require(!r.find("stability", "seed_amplitude") || o.seed.amplitude >= 0.0, "stability", "seed_amplitude",
              "seed_amplitude must be non-negative");
    r.require(!r.find("stability", "probe_z") || (o.probe_z >= 0.0 && o.probe_z <= cfg.d), "stability", "probe_z",
              "probe_z must lie in [0, d]");
    cfg.stability = req;
  }

  if (r.has_section("sweep")) {
    ParamSweep sw;
    const auto axis = [&](const std::string& prefix) {
      SweepAxis a;
      a.name = r.find("sweep", prefix)->value;
      r.number("sweep", prefix + "_min", a.min);
      r.number("sweep", prefix + "_max", a.max);
      r.integer("sweep", prefix + "_n", a.n);
      try {
        OpticalParams probe;
        set_optical_field(probe, a.name, 1.0);
      } catch (const InvalidArgument& err) {
        throw ParseError(r.find("sweep", prefix)->line, err.what());
      }
      r.require(a.n >= 1, "sweep", prefix + "_n", fmt::format("{}_n must be at least 1", prefix));
      return a;
    };
    r.require(r.find("sweep", "axis1") != nullptr, "sweep", "axis1", "[sweep] needs axis1");
    sw.axis1 = axis("axis1");
    if (r.find("sweep", "axis2")) sw.axis2 = axis("axis2");
    cfg.sweep = sw;
  }

  if (const auto* e = r.find("shift", "alphas")) cfg.shift_alphas = to_list(*e, "alphas");
  if (const auto* e = r.find("shift", "chis")) cfg.shift_chis = to_list(*e, "chis");
  if (const auto* e = r.find("shift", "peak_branch")) {
    if (e->value == "upper") cfg.shift_branch = PeakBranch::Upper;
    else if (e->value == "lower") cfg.shift_branch = PeakBranch::Lower;
    else throw ParseError(e->line, fmt::format("peak_branch must be upper or lower, got '{}'", e->value));
  }
  for (double a : cfg.shift_alphas) r.require(a > 0.0, "shift", "alphas", "shift alphas must be positive");

  if (const auto* e = r.find("output", "dir")) cfg.output_dir = e->value;
  return cfg;
}

void validate_for_mode(const RunConfig& cfg, Mode mode) {
  switch (mode) {
    case Mode::Params:
      if (!cfg.optical) throw ValidationError("params mode needs an [optical] block");
      break;
    case Mode::Linear:
    case Mode::Spectrum:
      if (!cfg.scan) throw ValidationError(fmt::format("{} mode needs a [scan] block", to_string(mode)));
      if (mode == Mode::Spectrum && !cfg.has_drive) throw ValidationError("spectrum mode needs a [drive] block");
      break;
    case Mode::ShiftStudy:
      if (!cfg.scan) throw ValidationError("shift-study mode needs a [scan] block");
      if (cfg.shift_alphas.empty() || cfg.shift_chis.empty())
        throw ValidationError("shift-study mode needs [shift] alphas and chis");
      break;
    case Mode::Stability:
      if (!cfg.stability) throw ValidationError("stability mode needs a [stability] block");
      if (!cfg.has_drive) throw ValidationError("stability mode needs a [drive] block");
      break;
  }
}

}  // namespace slpt
