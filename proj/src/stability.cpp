#include "slpt/stability.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <fmt/format.h>

#include "slpt/errors.hpp"

namespace slpt {

namespace {

constexpr cplx I{0.0, 1.0};
constexpr double kBlowupFactor = 1e3;
constexpr double kRobinTolerance = 1e-8;
constexpr double kMaxSeedRatio = 1e-3;

// 2x2 complex blocks for the conjugate-coupled (delta psi, conj delta psi) system.
struct Vec2 {
  cplx a{}, b{};
};

struct Mat2 {
  cplx m00{}, m01{}, m10{}, m11{};
};

Vec2 operator+(const Vec2& x, const Vec2& y) { return {x.a + y.a, x.b + y.b}; }
Vec2 operator-(const Vec2& x, const Vec2& y) { return {x.a - y.a, x.b - y.b}; }
Vec2 operator*(const Mat2& m, const Vec2& v) { return {m.m00 * v.a + m.m01 * v.b, m.m10 * v.a + m.m11 * v.b}; }
Mat2 operator*(const Mat2& x, const Mat2& y) {
  return {x.m00 * y.m00 + x.m01 * y.m10, x.m00 * y.m01 + x.m01 * y.m11, x.m10 * y.m00 + x.m11 * y.m10,
          x.m10 * y.m01 + x.m11 * y.m11};
}
Mat2 operator-(const Mat2& x, const Mat2& y) { return {x.m00 - y.m00, x.m01 - y.m01, x.m10 - y.m10, x.m11 - y.m11}; }
Mat2 operator*(cplx s, const Mat2& x) { return {s * x.m00, s * x.m01, s * x.m10, s * x.m11}; }

Mat2 identity_like(const Mat2&) { return {1.0, 0.0, 0.0, 1.0}; }
cplx identity_like(const cplx&) { return 1.0; }

cplx inverse(cplx x) {
  if (x == cplx(0.0, 0.0) || !std::isfinite(std::abs(x))) throw LinearSolveFailure("zero pivot in tridiagonal solve");
  return 1.0 / x;
}

Mat2 inverse(const Mat2& x) {
  const cplx det = x.m00 * x.m11 - x.m01 * x.m10;
  if (det == cplx(0.0, 0.0) || !std::isfinite(std::abs(det)))
    throw LinearSolveFailure("singular block pivot in block-tridiagonal solve");
  return {x.m11 / det, -x.m01 / det, -x.m10 / det, x.m00 / det};
}


// Block tridiagonal matrix with a Thomas factorisation.
template <typename Block, typename Vector>
struct Tridiagonal {
  std::vector<Block> lower, diag, upper;  // lower[0] and upper[n-1] unused

  std::size_t size() const { return diag.size(); }

  std::vector<Vector> multiply(const std::vector<Vector>& x) const {
    const std::size_t n = size();
    std::vector<Vector> y(n);
    for (std::size_t k = 0; k < n; ++k) {
      Vector acc = diag[k] * x[k];
      if (k > 0) acc = acc + lower[k] * x[k - 1];
      if (k + 1 < n) acc = acc + upper[k] * x[k + 1];
      y[k] = acc;
    }
    return y;
  }

  // identity + s * this
  Tridiagonal shifted(cplx s) const {
    Tridiagonal t = *this;
    for (std::size_t k = 0; k < size(); ++k) {
      t.lower[k] = s * lower[k];
      t.upper[k] = s * upper[k];
      t.diag[k] = identity_like(diag[k]) - (-s) * diag[k];
    }
    return t;
  }
};

template <typename Block, typename Vector>
class ThomasSolver {
 public:
  explicit ThomasSolver(const Tridiagonal<Block, Vector>& a) : lower_(a.lower) {
    const std::size_t n = a.size();
    inv_.resize(n);
    cprime_.resize(n);
    inv_[0] = inverse(a.diag[0]);
    cprime_[0] = inv_[0] * a.upper[0];
    for (std::size_t k = 1; k < n; ++k) {
      inv_[k] = inverse(a.diag[k] - a.lower[k] * cprime_[k - 1]);
      cprime_[k] = inv_[k] * a.upper[k];
    }
  }

  void solve(std::vector<Vector>& r) const {
    const std::size_t n = r.size();
    r[0] = inv_[0] * r[0];
    for (std::size_t k = 1; k < n; ++k) r[k] = inv_[k] * (r[k] - lower_[k] * r[k - 1]);
    for (std::size_t k = n - 1; k-- > 0;) r[k] = r[k] - cprime_[k] * r[k + 1];
  }

 private:
  std::vector<Block> lower_;
  std::vector<Block> inv_;
  std::vector<Block> cprime_;
};

double interp_cubic(const std::vector<cplx>& f, double x, bool real_part) {
  // Four-point Lagrange interpolation at fractional index x.
  const int n = static_cast<int>(f.size());
  int i = static_cast<int>(std::floor(x)) - 1;
  i = std::clamp(i, 0, n - 4);
  double acc = 0.0;
  for (int a = 0; a < 4; ++a) {
    double w = 1.0;
    for (int b = 0; b < 4; ++b)
      if (b != a) w *= (x - (i + b)) / static_cast<double>(a - b);
    acc += w * (real_part ? f[i + a].real() : f[i + a].imag());
  }
  return acc;
}

double norm_of(const std::vector<cplx>& u, XiNorm norm, int probe) {
  if (norm == XiNorm::ProbeReal) return std::abs(u[probe].real());
  double m = 0.0;
  for (const auto& v : u) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Stable: return "stable";
    case Verdict::Unstable: return "unstable";
    case Verdict::Inconclusive: break;
  }
  return "inconclusive";
}

std::vector<cplx> symmetric_base(const FieldSolution& base, int n_points, BasePhase phase) {
  const int m = static_cast<int>(base.psi_plus.size());
  if (m < 4 || static_cast<int>(base.psi_minus.size()) != m) throw GridMismatch("base solution has too few samples");
  cplx gauge = 1.0 / std::sqrt(2.0);
  if (phase == BasePhase::Transmitted && std::abs(base.psi_plus.back()) > 0.0)
    gauge *= std::abs(base.psi_plus.back()) / base.psi_plus.back();
  std::vector<cplx> sym(m);
  for (int k = 0; k < m; ++k) sym[k] = gauge * (base.psi_plus[k] + base.psi_minus[k]);
  if (m == n_points) return sym;
  std::vector<cplx> out(n_points);
  for (int j = 0; j < n_points; ++j) {
    const double x = static_cast<double>(j) * (m - 1) / (n_points - 1);
    out[j] = cplx(interp_cubic(sym, x, true), interp_cubic(sym, x, false));
  }
  return out;
}

PerturbationOperator::PerturbationOperator(const FieldSolution& base, const EffectiveParams& ep, int n_points,
                                           bool conjugate_coupling, BasePhase phase)
    : n_(n_points), h_(0.0), conjugate_(conjugate_coupling) {
  if (n_points < 8) throw GridMismatch("stability grid needs at least 8 samples");
  if (std::abs(base.d - ep.d) > 1e-9 * ep.d)
    throw GridMismatch(fmt::format("base solution length {} does not match d = {}", base.d, ep.d));
  h_ = ep.d / (n_ - 1);
  kin_ = 1.0 / ep.massRatio;
  robin_ = I * ep.lcoh / ep.massRatio;
  const cplx g = robin_ / (2.0 * h_);
  c0_ = g / (1.0 + 3.0 * g);
  psi0_ = symmetric_base(base, n_, phase);
  pot_.resize(n_);
  coup_.resize(n_);
  for (int j = 0; j < n_; ++j) {
    const double c = std::cos(z(j));
    pot_[j] = 2.0 * ep.Vbar * c * c - base.epsilon + 4.0 * ep.chibar * std::norm(psi0_[j]);
    coup_[j] = 2.0 * ep.chibar * psi0_[j] * psi0_[j];
  }
}

void PerturbationOperator::close(std::vector<cplx>& u) const {
  u[0] = c0_ * (4.0 * u[1] - u[2]);
  u[n_ - 1] = c0_ * (4.0 * u[n_ - 2] - u[n_ - 3]);
}

std::vector<cplx> PerturbationOperator::apply(std::vector<cplx> u) const {
  if (static_cast<int>(u.size()) != n_) throw GridMismatch("perturbation size does not match the operator grid");
  close(u);
  std::vector<cplx> du(n_);
  for (int j = 1; j < n_ - 1; ++j) {
    const cplx lap = (u[j - 1] - 2.0 * u[j] + u[j + 1]) / (h_ * h_);
    const cplx coupled = conjugate_ ? std::conj(u[j]) : u[j];
    du[j] = -I * (-kin_ * lap + pot_[j] * u[j] + coup_[j] * coupled);
  }
  close(du);
  return du;
}

std::array<double, 2> PerturbationOperator::boundary_residuals(const std::vector<cplx>& u) const {
  const int n = n_;
  const cplx d0 = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h_);
  const cplx dn = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h_);
  return {std::abs(u[0] - robin_ * d0), std::abs(u[n - 1] + robin_ * dn)};
}

std::vector<cplx> linearized_rhs(const std::vector<cplx>& delta_psi, const FieldSolution& base,
                                 const EffectiveParams& ep, bool conjugate_coupling, BasePhase phase) {
  const PerturbationOperator op(base, ep, static_cast<int>(delta_psi.size()), conjugate_coupling, phase);
  return op.apply(delta_psi);
}

double growth_rate_xi(const PerturbationState& a, const PerturbationState& b, XiNorm norm, int probe_index) {
  if (a.delta_psi.size() != b.delta_psi.size()) throw GridMismatch("snapshots live on different grids");
  if (!(b.t > a.t)) throw InvalidArgument("snapshots must be ordered in time");
  const double na = norm_of(a.delta_psi, norm, probe_index);
  const double nb = norm_of(b.delta_psi, norm, probe_index);
  if (!(na > 0.0) || !(nb > 0.0)) throw ZeroNorm("perturbation norm vanished");
  return (std::log(nb) - std::log(na)) / (b.t - a.t);
}

namespace {

Tridiagonal<cplx, cplx> scalar_generator(const PerturbationOperator& op) {
  const int n = op.n_points() - 2;
  const double h2 = op.h() * op.h();
  const cplx c0 = op.closure();
  const cplx k = I * op.kinetic() / h2;
  Tridiagonal<cplx, cplx> m;
  m.lower.assign(n, 0.0);
  m.diag.assign(n, 0.0);
  m.upper.assign(n, 0.0);
  for (int r = 0; r < n; ++r) {
    const int j = r + 1;
    double lap_lo = 1.0, lap_up = 1.0;
    cplx lap_d = -2.0;
    cplx lo = lap_lo, up = lap_up;
    if (r == 0) {
      lap_d += 4.0 * c0;
      up = 1.0 - c0;
    }
    if (r == n - 1) {
      lap_d += 4.0 * c0;
      lo = 1.0 - c0;
    }
    m.lower[r] = k * lo;
    m.upper[r] = k * up;
    m.diag[r] = k * lap_d - I * (op.potential()[j] + op.coupling()[j]);
  }
  return m;
}

Tridiagonal<Mat2, Vec2> block_generator(const PerturbationOperator& op) {
  const int n = op.n_points() - 2;
  const double h2 = op.h() * op.h();
  const cplx c0 = op.closure();
  const cplx k = I * op.kinetic() / h2;
  Tridiagonal<Mat2, Vec2> m;
  m.lower.assign(n, Mat2{});
  m.diag.assign(n, Mat2{});
  m.upper.assign(n, Mat2{});
  for (int r = 0; r < n; ++r) {
    const int j = r + 1;
    cplx lo = 1.0, up = 1.0, lap_d = -2.0;
    if (r == 0) {
      lap_d += 4.0 * c0;
      up = 1.0 - c0;
    }
    if (r == n - 1) {
      lap_d += 4.0 * c0;
      lo = 1.0 - c0;
    }
    const cplx p = op.potential()[j];
    const cplx q = op.coupling()[j];
    // Second row is the complex conjugate of the first equation.
    m.lower[r] = {k * lo, 0.0, 0.0, std::conj(k * lo)};
    m.upper[r] = {k * up, 0.0, 0.0, std::conj(k * up)};
    m.diag[r] = {k * lap_d - I * p, -I * q, std::conj(-I * q), std::conj(k * lap_d - I * p)};
  }
  return m;
}

template <typename Block, typename Vector, typename Pack, typename Unpack>
void crank_nicolson(const PerturbationOperator& op, const Tridiagonal<Block, Vector>& gen, const StabilityOptions& opt,
                    std::vector<cplx> u, double seed_amp, int probe, EvolutionResult& out, Pack pack, Unpack unpack) {
  const cplx half = 0.5 * opt.dt;
  const auto explicit_part = gen.shifted(half);
  const ThomasSolver<Block, Vector> implicit_part(gen.shifted(-half));

  const int steps = static_cast<int>(std::llround(opt.t_end / opt.dt));
  const int per_snap = std::max(1, static_cast<int>(std::llround(opt.snapshot_every / opt.dt)));
  auto& rep = out.report;
  PerturbationState prev{u, 0.0};
  rep.xi_series.push_back({0.0, norm_of(u, XiNorm::MaxAbs, 0), std::numeric_limits<double>::quiet_NaN()});
  out.snapshots.push_back(prev);

  std::vector<Vector> x = pack(u);
  for (int s = 1; s <= steps; ++s) {
    x = explicit_part.multiply(x);
    implicit_part.solve(x);
    unpack(x, u);
    op.close(u);
    const double umax = norm_of(u, XiNorm::MaxAbs, 0);
    if (!std::isfinite(umax)) throw LinearSolveFailure("non-finite perturbation after time step");
    const auto res = op.boundary_residuals(u);
    if (std::max(res[0], res[1]) > kRobinTolerance * umax)
      throw LinearSolveFailure(fmt::format("Robin boundary residual {:g} at t = {}", std::max(res[0], res[1]), s * opt.dt));
    const bool blowup = umax > kBlowupFactor * seed_amp;
    if (s % per_snap == 0 || s == steps || blowup) {
      PerturbationState cur{u, s * opt.dt};
      double xi = std::numeric_limits<double>::quiet_NaN();
      try {
        xi = growth_rate_xi(prev, cur, opt.norm, probe);
      } catch (const ZeroNorm&) {
      }
      rep.xi_series.push_back({cur.t, umax, xi});
      if (opt.keep_snapshots) out.snapshots.push_back(cur);
      prev = std::move(cur);
    }
    if (blowup) {
      rep.halted_early = true;
      break;
    }
  }
  rep.t_reached = prev.t;
  if (!opt.keep_snapshots) out.snapshots.push_back(prev);
}

}  // namespace

EvolutionResult evolve_perturbation(const FieldSolution& base, const EffectiveParams& ep, const StabilityOptions& opt) {
  if (!(opt.dt > 0.0) || !(opt.t_end > 0.0) || !(opt.snapshot_every > 0.0))
    throw InvalidArgument("dt, t_end and snapshot_every must be positive");
  const PerturbationOperator op(base, ep, opt.n_points, opt.conjugate_coupling, opt.base_phase);
  const int n = op.n_points();

  double base_max = 0.0;
  for (const auto& v : op.base_field()) base_max = std::max(base_max, std::abs(v));
  double amp = opt.seed.amplitude;
  if (amp < 0.0) amp = base_max > 0.0 ? 1e-4 * base_max : 1e-4;
  if (base_max > 0.0 && amp > kMaxSeedRatio * base_max * (1.0 + 1e-12))
    throw InvalidArgument(fmt::format("seed amplitude {:g} exceeds 1e-3 max|psi_I0| = {:g}", amp, kMaxSeedRatio * base_max));

  const double center = opt.seed.center < 0.0 ? 0.5 * ep.d : opt.seed.center;
  const double width = opt.seed.width;
  if (!(width > 0.0)) throw InvalidArgument("seed width must be positive");
  const double probe_z = opt.probe_z < 0.0 ? 0.5 * ep.d : opt.probe_z;
  const int probe = std::clamp(static_cast<int>(std::lround(probe_z / op.h())), 0, n - 1);

  EvolutionResult out;
  std::vector<cplx> u(n);
  for (int j = 0; j < n; ++j) {
    const double x = (op.z(j) - center) / width;
    u[j] = amp * std::exp(-0.5 * x * x);
  }
  op.close(u);

  if (amp == 0.0) {
    out.snapshots.push_back({u, 0.0});
    out.snapshots.push_back({u, opt.t_end});
    out.report.t_reached = opt.t_end;
    out.report.verdict = Verdict::Inconclusive;
    return out;
  }

  if (opt.conjugate_coupling) {
    const auto gen = block_generator(op);
    crank_nicolson(op, gen, opt, u, amp, probe, out,
                   [n](const std::vector<cplx>& v) {
                     std::vector<Vec2> x(n - 2);
                     for (int j = 1; j < n - 1; ++j) x[j - 1] = {v[j], std::conj(v[j])};
                     return x;
                   },
                   [n](const std::vector<Vec2>& x, std::vector<cplx>& v) {
                     for (int j = 1; j < n - 1; ++j) v[j] = x[j - 1].a;
                   });
  } else {
    const auto gen = scalar_generator(op);
    crank_nicolson(op, gen, opt, u, amp, probe, out,
                   [n](const std::vector<cplx>& v) { return std::vector<cplx>(v.begin() + 1, v.end() - 1); },
                   [n](const std::vector<cplx>& x, std::vector<cplx>& v) { std::copy(x.begin(), x.end(), v.begin() + 1); });
  }

  auto& rep = out.report;
  const double window_start = 0.75 * rep.t_reached;
  double sum = 0.0;
  int count = 0;
  for (const auto& s : rep.xi_series)
    if (s.t > window_start && std::isfinite(s.xi)) {
      sum += s.xi;
      ++count;
    }
  rep.asymptotic_rate = count > 0 ? sum / count : std::numeric_limits<double>::quiet_NaN();
  if (rep.halted_early) rep.verdict = Verdict::Unstable;
  else if (rep.asymptotic_rate > opt.rate_tol) rep.verdict = Verdict::Unstable;
  else if (rep.asymptotic_rate < -opt.rate_tol) rep.verdict = Verdict::Stable;
  else rep.verdict = Verdict::Inconclusive;
  return out;
}

std::map<BranchLabel, StabilityReport> classify_branches(const std::map<BranchLabel, FieldSolution>& branches,
                                                         const EffectiveParams& ep, const StabilityOptions& options) {
  std::map<BranchLabel, std::future<StabilityReport>> jobs;
  for (const auto& [label, sol] : branches) {
    jobs.emplace(label, std::async(std::launch::async, [&, label = label] {
                   StabilityReport rep = evolve_perturbation(sol, ep, options).report;
                   rep.branch = label;
                   return rep;
                 }));
  }
  std::map<BranchLabel, StabilityReport> out;
  for (auto& [label, job] : jobs) out.emplace(label, job.get());
  return out;
}

}  // namespace slpt
