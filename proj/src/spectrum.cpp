#include "slpt/spectrum.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <future>
#include <map>
#include <fmt/format.h>

#include "slpt/errors.hpp"

namespace slpt {

namespace {

constexpr double kDedupeFactor = 1e-6;

SpectrumPoint to_point(const FieldSolution& sol) {
  SpectrumPoint pt;
  pt.epsilon = sol.epsilon;
  pt.T = sol.T;
  pt.R = sol.R;
  pt.shooting_value = sol.shooting_value();
  pt.residual = sol.residual;
  pt.converged = sol.converged;
  pt.newton_iters = sol.newton_iters;
  return pt;
}

SpectrumPoint failed_point(double eps, const std::string& why) {
  SpectrumPoint pt;
  pt.epsilon = eps;
  pt.T = std::numeric_limits<double>::quiet_NaN();
  pt.R = std::numeric_limits<double>::quiet_NaN();
  pt.converged = false;
  pt.error = why;
  return pt;
}

std::optional<cplx> linear_guess(double eps, cplx alpha, const EffectiveParams& ep, const Grid& grid) {
  try {
    return solve_linear(eps, alpha, ep, grid).shooting_value();
  } catch (const Error&) {
    return std::nullopt;
  }
}

// Natural continuation: each solve is seeded with the previous converged
// shooting value; a failed solve is retried once from the linear solution.
std::vector<SpectrumPoint> natural_pass(const ScanRange& range, cplx alpha, const EffectiveParams& ep,
                                        const Grid& grid, const SolverSettings& settings, bool upward,
                                        std::optional<cplx> start) {
  const int n = range.n_points;
  std::vector<SpectrumPoint> out(n);
  std::optional<cplx> guess = start;
  for (int step = 0; step < n; ++step) {
    const int i = upward ? step : n - 1 - step;
    const double eps = range.value(i);
    std::string why;
    bool done = false;
    std::array<std::optional<cplx>, 2> attempts{guess, std::nullopt};
    for (int a = 0; a < 2 && !done; ++a) {
      std::optional<cplx> g = a == 0 ? attempts[0] : linear_guess(eps, alpha, ep, grid);
      if (!g) continue;
      if (a == 1 && attempts[0] && *attempts[0] == *g) continue;
      try {
        const FieldSolution sol = solve_nonlinear(eps, alpha, ep, grid, *g, settings);
        out[i] = to_point(sol);
        guess = sol.shooting_value();
        done = true;
      } catch (const Error& e) {
        why = e.what();
      }
    }
    if (!done) out[i] = failed_point(eps, why.empty() ? "no initial guess" : why);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pseudo-arclength continuation in scaled coordinates
// x = (Re s / |alpha|, Im s / |alpha|, eps / width).

using Vec3 = std::array<double, 3>;

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 normalized(Vec3 v) {
  const double n = std::sqrt(dot(v, v));
  for (double& c : v) c /= n;
  return v;
}

struct CurveNode {
  double eps;
  cplx s;
  Vec3 tangent;
  int iters;
  int segment;  // number of folds passed before this node
};

struct CurveResult {
  std::vector<CurveNode> nodes;
  bool completed = false;
};

class ArclengthTracer {
 public:
  ArclengthTracer(cplx alpha, const EffectiveParams& ep, const Grid& grid, const SolverSettings& settings,
                  const ContinuationSettings& cont, double width)
      : alpha_(alpha), ep_(ep), grid_(grid), settings_(settings), cont_(cont),
        sig_(std::abs(alpha) > 0.0 ? std::abs(alpha) : 1.0), width_(width > 0.0 ? width : 1.0),
        tol_(settings.tolerance_for(alpha)) {}

  // Traces from a converged solution (eps0, s0) in the +eps direction until
  // eps exceeds stop_hi, drops below stop_lo, or the step budget runs out.
  CurveResult trace(double eps0, cplx s0, double stop_lo, double stop_hi) const {
    CurveResult res;
    Vec3 x = to_x(eps0, s0);
    std::array<Vec3, 2> jac{};
    Vec3 fx{};
    if (!jacobian(x, jac, fx)) return res;
    Vec3 t = normalized(cross(jac[0], jac[1]));
    if (t[2] < 0.0)
      for (double& c : t) c = -c;

    int segment = 0;
    res.nodes.push_back({eps0, s0, t, 0, 0});
    double ds = cont_.initial_step;
    for (int step = 0; step < cont_.max_steps; ++step) {
      Vec3 xn{};
      Vec3 tn{};
      int iters = 0;
      bool ok = false;
      while (!ok) {
        ok = correct(x, t, ds, xn, tn, iters);
        if (ok && dot(tn, t) < 0.9) ok = false;  // turned too sharply: likely jumped branches
        if (!ok) {
          ds *= 0.5;
          if (ds < cont_.min_step) return res;
        }
      }
      if (tn[2] * t[2] < 0.0) ++segment;
      x = xn;
      t = tn;
      const double eps = x[2] * width_;
      res.nodes.push_back({eps, cplx(x[0], x[1]) * sig_, t, iters, segment});
      if (eps > stop_hi) {
        res.completed = true;
        return res;
      }
      if (eps < stop_lo) return res;
      if (iters <= 3) ds = std::min(ds * 1.5, cont_.max_step);
      else if (iters > 6) ds = std::max(ds * 0.7, cont_.min_step);
    }
    return res;
  }

 private:
  static Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
  }

  Vec3 to_x(double eps, cplx s) const { return {s.real() / sig_, s.imag() / sig_, eps / width_}; }

  // Scaled residual (Re, Im, unused). Throws DivergedGuess.
  std::array<double, 2> residual(const Vec3& x) const {
    const cplx f = shooting_residual(x[2] * width_, alpha_, cplx(x[0], x[1]) * sig_, ep_, grid_) / sig_;
    return {f.real(), f.imag()};
  }

  bool jacobian(const Vec3& x, std::array<Vec3, 2>& jac, Vec3& f0) const {
    try {
      const auto f = residual(x);
      f0 = {f[0], f[1], 0.0};
      for (int j = 0; j < 3; ++j) {
        Vec3 xp = x;
        const double h = settings_.fd_step * std::max(1.0, std::abs(x[j]));
        xp[j] += h;
        const auto fp = residual(xp);
        jac[0][j] = (fp[0] - f[0]) / h;
        jac[1][j] = (fp[1] - f[1]) / h;
      }
      return true;
    } catch (const Error&) {
      return false;
    }
  }

  // Newton corrector on [F(x) = 0, t . (x - x_pred) = 0].
  bool correct(const Vec3& x0, const Vec3& t0, double ds, Vec3& x, Vec3& t_out, int& iters) const {
    const Vec3 pred{x0[0] + ds * t0[0], x0[1] + ds * t0[1], x0[2] + ds * t0[2]};
    x = pred;
    std::array<Vec3, 2> jac{};
    Vec3 f{};
    for (iters = 1; iters <= cont_.max_corrector_iters; ++iters) {
      if (!jacobian(x, jac, f)) return false;
      const double g = dot(t0, {x[0] - pred[0], x[1] - pred[1], x[2] - pred[2]});
      // Solve [jac; t0] dx = -[f0, f1, g] by Cramer's rule.
      const std::array<Vec3, 3> m{jac[0], jac[1], t0};
      const Vec3 rhs{-f[0], -f[1], -g};
      const double det = det3(m);
      if (det == 0.0 || !std::isfinite(det)) return false;
      Vec3 dx{};
      for (int c = 0; c < 3; ++c) {
        auto mc = m;
        for (int r = 0; r < 3; ++r) mc[r][c] = rhs[r];
        dx[c] = det3(mc) / det;
      }
      for (int c = 0; c < 3; ++c) x[c] += dx[c];
      if (std::sqrt(dot(dx, dx)) > 10.0 * std::max(ds, cont_.min_step)) return false;
      try {
        const auto fr = residual(x);
        if (std::hypot(fr[0], fr[1]) * sig_ <= tol_) {
          if (!jacobian(x, jac, f)) return false;
          Vec3 t = normalized(cross(jac[0], jac[1]));
          if (dot(t, t0) < 0.0)
            for (double& c : t) c = -c;
          t_out = t;
          return true;
        }
      } catch (const Error&) {
        return false;
      }
    }
    return false;
  }

  static double det3(const std::array<Vec3, 3>& m) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  }

  cplx alpha_;
  const EffectiveParams& ep_;
  const Grid& grid_;
  const SolverSettings& settings_;
  const ContinuationSettings& cont_;
  double sig_;
  double width_;
  double tol_;
};

// Parabolic vertex of eps over cumulative arclength at an extremal node.
double fold_position(const std::vector<CurveNode>& nodes, std::size_t k) {
  if (k == 0 || k + 1 >= nodes.size()) return nodes[k].eps;
  auto dist = [&](std::size_t a, std::size_t b) {
    return std::hypot(std::abs(nodes[a].s - nodes[b].s), nodes[a].eps - nodes[b].eps);
  };
  const double x0 = -dist(k - 1, k);
  const double x2 = dist(k, k + 1);
  const double y0 = nodes[k - 1].eps, y1 = nodes[k].eps, y2 = nodes[k + 1].eps;
  // Quadratic through (x0, y0), (0, y1), (x2, y2).
  const double a = ((y2 - y1) / x2 - (y0 - y1) / x0) / (x2 - x0);
  const double b = (y2 - y1) / x2 - a * x2;
  if (a == 0.0) return y1;
  const double xv = -b / (2.0 * a);
  if (xv < x0 || xv > x2) return y1;
  return y1 + b * xv + a * xv * xv;
}

struct Region {
  int lo;
  int hi;
};

std::vector<Region> suspect_regions(const std::vector<SpectrumPoint>& up, const std::vector<SpectrumPoint>& down,
                                    cplx alpha) {
  const int n = static_cast<int>(up.size());
  std::vector<bool> flag(n, false);
  for (int i = 0; i < n; ++i)
    if (up[i].converged && down[i].converged && distinct_solutions(up[i].shooting_value, down[i].shooting_value, alpha))
      flag[i] = true;

  // Isolated jumps within a pass flag multi-valued windows narrower than the grid.
  const double floor = 1e-4 * std::max(std::abs(alpha), 1e-300);
  for (const auto* pass : {&up, &down}) {
    std::vector<double> inc(n > 1 ? n - 1 : 0, -1.0);
    for (int i = 0; i + 1 < n; ++i)
      if ((*pass)[i].converged && (*pass)[i + 1].converged)
        inc[i] = std::abs((*pass)[i + 1].shooting_value - (*pass)[i].shooting_value);
    for (int i = 0; i + 1 < n; ++i) {
      if (inc[i] < 0.0 || inc[i] < floor) continue;
      std::vector<double> window;
      for (int j = std::max(0, i - 3); j <= std::min(n - 2, i + 3); ++j)
        if (j != i && inc[j] >= 0.0) window.push_back(inc[j]);
      if (window.empty()) continue;
      std::nth_element(window.begin(), window.begin() + window.size() / 2, window.end());
      if (inc[i] > 10.0 * window[window.size() / 2]) flag[i] = flag[i + 1] = true;
    }
  }

  std::vector<Region> regions;
  for (int i = 0; i < n; ++i) {
    if (!flag[i]) continue;
    if (!regions.empty() && i <= regions.back().hi + 2) regions.back().hi = i;
    else regions.push_back({i, i});
  }
  return regions;
}

struct Candidate {
  FieldSolution sol;
  int branch_id;
};

void add_candidate(std::vector<Candidate>& list, FieldSolution sol, int branch_id, cplx alpha) {
  for (auto& c : list)
    if (!distinct_solutions(c.sol.shooting_value(), sol.shooting_value(), alpha)) {
      if (c.branch_id < 0) c.branch_id = branch_id;
      return;
    }
  list.push_back({std::move(sol), branch_id});
}

void label_by_transmission(std::vector<SpectrumPoint>& pts) {
  std::sort(pts.begin(), pts.end(), [](const SpectrumPoint& a, const SpectrumPoint& b) { return a.T > b.T; });
  if (pts.size() == 1) {
    pts[0].label = BranchLabel::Unique;
    return;
  }
  for (std::size_t k = 0; k < pts.size(); ++k)
    pts[k].label = k == 0 ? BranchLabel::Upper : (k + 1 == pts.size() ? BranchLabel::Lower : BranchLabel::Middle);
}

// Crossings of the traced curve with eps, re-solved at exactly eps.
void curve_solutions(const std::vector<CurveNode>& nodes, int base_id, double eps, cplx alpha,
                     const EffectiveParams& ep, const Grid& grid, const SolverSettings& settings,
                     std::vector<Candidate>& out) {
  for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
    const double e0 = nodes[k].eps, e1 = nodes[k + 1].eps;
    if ((e0 - eps) * (e1 - eps) > 0.0 || e0 == e1) continue;
    const double w = (eps - e0) / (e1 - e0);
    const cplx guess = nodes[k].s + w * (nodes[k + 1].s - nodes[k].s);
    const int seg = (w < 0.5 ? nodes[k] : nodes[k + 1]).segment;
    try {
      add_candidate(out, solve_nonlinear(eps, alpha, ep, grid, guess, settings), base_id + seg, alpha);
    } catch (const Error&) {
    }
  }
}

}  // namespace

const char* to_string(BranchLabel label) {
  switch (label) {
    case BranchLabel::Upper: return "U";
    case BranchLabel::Middle: return "M";
    case BranchLabel::Lower: return "L";
    case BranchLabel::Unique: break;
  }
  return "unique";
}

BranchLabel branch_label_from_string(const std::string& text) {
  if (text == "U") return BranchLabel::Upper;
  if (text == "M") return BranchLabel::Middle;
  if (text == "L") return BranchLabel::Lower;
  if (text == "unique") return BranchLabel::Unique;
  throw InvalidArgument("unknown branch label '" + text + "'");
}

double ScanRange::value(int i) const {
  if (n_points <= 1) return eps_min;
  return eps_min + (eps_max - eps_min) * static_cast<double>(i) / static_cast<double>(n_points - 1);
}

double ScanRange::spacing() const { return n_points > 1 ? (eps_max - eps_min) / (n_points - 1) : 0.0; }

bool distinct_solutions(cplx s1, cplx s2, cplx alpha) {
  return std::abs(s1 - s2) > kDedupeFactor * std::abs(alpha);
}

std::vector<SpectrumPoint> scan_linear(const ScanRange& range, const EffectiveParams& ep, const Grid& grid) {
  if (range.n_points < 2) throw InvalidArgument("scan needs at least two points");
  std::vector<SpectrumPoint> out;
  out.reserve(range.n_points);
  for (int i = 0; i < range.n_points; ++i) {
    const double eps = range.value(i);
    try {
      SpectrumPoint pt = to_point(solve_linear(eps, 1.0, ep, grid));
      pt.arc_index = i;
      out.push_back(pt);
    } catch (const Error& e) {
      out.push_back(failed_point(eps, e.what()));
      out.back().arc_index = i;
    }
  }
  return out;
}

NonlinearSpectrum scan_nonlinear(const ScanRange& range, cplx alpha, const EffectiveParams& ep, const Grid& grid,
                                 const SolverSettings& settings, const ContinuationSettings& cont,
                                 std::optional<cplx> initial_guess) {
  if (range.n_points < 2) throw InvalidArgument("scan needs at least two points");
  const int n = range.n_points;

  // Both directional passes are independent; run them side by side.
  auto first = range.value(0);
  auto last = range.value(n - 1);
  const std::optional<cplx> up_start = initial_guess ? initial_guess : linear_guess(first, alpha, ep, grid);
  const std::optional<cplx> down_start = initial_guess ? initial_guess : linear_guess(last, alpha, ep, grid);
  auto down_future = std::async(std::launch::async, [&] {
    return natural_pass(range, alpha, ep, grid, settings, false, down_start);
  });
  const std::vector<SpectrumPoint> up = natural_pass(range, alpha, ep, grid, settings, true, up_start);
  const std::vector<SpectrumPoint> down = down_future.get();

  NonlinearSpectrum result;
  const double width = std::abs(range.eps_max - range.eps_min);
  const ArclengthTracer tracer(alpha, ep, grid, settings, cont, width > 0.0 ? width : 1.0);

  struct TracedRegion {
    Region region;
    CurveResult curve;
    int base_id = 0;
    int folds = 0;
  };
  std::vector<TracedRegion> traced;
  for (const Region& r : suspect_regions(up, down, alpha)) {
    int start = r.lo - 1;
    while (start >= 0 && !up[start].converged) --start;
    if (start < 0) {
      ++result.truncated_regions;
      result.all_converged = false;
      continue;
    }
    const double stop_hi = r.hi + 1 < n ? range.value(r.hi + 1) : range.eps_max + 0.5 * range.spacing();
    const double stop_lo = range.eps_min - 0.5 * range.spacing();
    TracedRegion tr{r, tracer.trace(up[start].epsilon, up[start].shooting_value, stop_lo, stop_hi)};
    if (!tr.curve.completed) {
      ++result.truncated_regions;
      result.all_converged = false;
    }
    traced.push_back(std::move(tr));
  }

  // Global branch ids: each monotone-in-eps piece of the solution curve gets
  // its own id, counted from the low-eps end.
  int next_id = 0;
  std::map<int, int> direction;  // branch id -> +1 / -1 traversal direction in eps
  direction[0] = +1;
  for (auto& tr : traced) {
    tr.base_id = next_id;
    const auto& nodes = tr.curve.nodes;
    for (std::size_t k = 1; k < nodes.size(); ++k) {
      if (nodes[k].segment != nodes[k - 1].segment) {
        // Extremal node is whichever of the pair sits further along the old direction.
        const bool upper = nodes[k - 1].tangent[2] > 0.0;
        const std::size_t ext = (upper ? nodes[k].eps > nodes[k - 1].eps : nodes[k].eps < nodes[k - 1].eps) ? k : k - 1;
        result.folds.push_back(fold_position(nodes, ext));
        ++tr.folds;
      }
    }
    for (int j = 0; j <= tr.folds; ++j) direction[tr.base_id + j] = (j % 2 == 0) ? direction[tr.base_id] : -direction[tr.base_id];
    next_id = tr.base_id + tr.folds;
    for (const auto& node : nodes) {
      SpectrumPoint pt;
      pt.epsilon = node.eps;
      pt.shooting_value = node.s;
      pt.converged = true;
      pt.newton_iters = node.iters;
      pt.branch_id = tr.base_id + node.segment;
      try {
        const FieldSolution sol = integrate_ivp(alpha, node.s, node.eps, ep, grid);
        pt.T = sol.T;
        pt.R = sol.R;
        pt.residual = sol.residual;
      } catch (const Error& e) {
        pt.converged = false;
        pt.error = e.what();
      }
      pt.arc_index = static_cast<int>(result.curve.size());
      result.curve.push_back(pt);
    }
  }

  // Assemble every distinct solution per grid point.
  for (int i = 0; i < n; ++i) {
    const double eps = range.value(i);
    int outside_id = 0;
    std::vector<Candidate> cands;
    for (const auto& tr : traced) {
      if (i > tr.region.hi) outside_id = tr.base_id + tr.folds;
      if (i >= tr.region.lo - 1 && i <= tr.region.hi + 1)
        curve_solutions(tr.curve.nodes, tr.base_id, eps, alpha, ep, grid, settings, cands);
    }
    const bool in_region = !cands.empty();
    for (const auto* pass : {&up, &down}) {
      const SpectrumPoint& p = (*pass)[i];
      if (!p.converged) continue;
      try {
        FieldSolution sol = integrate_ivp(alpha, p.shooting_value, eps, ep, grid);
        sol.converged = true;
        sol.newton_iters = p.newton_iters;
        add_candidate(cands, std::move(sol), in_region ? -1 : outside_id, alpha);
      } catch (const Error&) {
      }
    }
    if (cands.empty()) {
      result.all_converged = false;
      SpectrumPoint failed = up[i].converged ? down[i] : up[i];
      if (failed.error.empty()) failed.error = "no converged solution";
      result.points.push_back(failed);
      continue;
    }
    std::vector<SpectrumPoint> pts;
    for (auto& c : cands) {
      SpectrumPoint pt = to_point(c.sol);
      pt.branch_id = c.branch_id;
      pts.push_back(pt);
    }
    label_by_transmission(pts);
    result.points.insert(result.points.end(), pts.begin(), pts.end());
  }

  // Position along the solution curve: order by branch id, then by eps in
  // that branch's traversal direction.
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < result.points.size(); ++k)
    if (result.points[k].converged && result.points[k].branch_id >= 0) order.push_back(k);
    else result.points[k].arc_index = -1;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = result.points[a];
    const auto& pb = result.points[b];
    if (pa.branch_id != pb.branch_id) return pa.branch_id < pb.branch_id;
    const int dir = direction.count(pa.branch_id) ? direction[pa.branch_id] : 1;
    return dir * pa.epsilon < dir * pb.epsilon;
  });
  for (std::size_t r = 0; r < order.size(); ++r) result.points[order[r]].arc_index = static_cast<int>(r);

  // Multi-valued intervals between consecutive folds of each traced region.
  for (const auto& tr : traced) {
    if (tr.folds < 2) continue;
    std::vector<double> fold_eps;
    const auto& nodes = tr.curve.nodes;
    for (std::size_t k = 1; k < nodes.size(); ++k)
      if (nodes[k].segment != nodes[k - 1].segment) {
        const bool upper = nodes[k - 1].tangent[2] > 0.0;
        const std::size_t ext = (upper ? nodes[k].eps > nodes[k - 1].eps : nodes[k].eps < nodes[k - 1].eps) ? k : k - 1;
        fold_eps.push_back(fold_position(nodes, ext));
      }
    MultiValuedInterval iv;
    iv.eps_lo = *std::min_element(fold_eps.begin(), fold_eps.end());
    iv.eps_hi = *std::max_element(fold_eps.begin(), fold_eps.end());
    std::vector<Candidate> mid;
    curve_solutions(nodes, tr.base_id, 0.5 * (iv.eps_lo + iv.eps_hi), alpha, ep, grid, settings, mid);
    iv.max_solutions = static_cast<int>(mid.size());
    for (const auto& pt : result.points)
      if (pt.converged && pt.epsilon > iv.eps_lo && pt.epsilon < iv.eps_hi) {
        const int count = static_cast<int>(std::count_if(result.points.begin(), result.points.end(), [&](const SpectrumPoint& q) {
          return q.converged && q.epsilon == pt.epsilon;
        }));
        iv.max_solutions = std::max(iv.max_solutions, count);
      }
    result.multivalued.push_back(iv);
  }
  return result;
}

std::vector<FieldSolution> solutions_at(const NonlinearSpectrum& spectrum, double eps, cplx alpha,
                                        const EffectiveParams& ep, const Grid& grid, const SolverSettings& settings) {
  std::vector<Candidate> cands;
  // Curve crossings first, then the nearest grid solutions as extra seeds.
  for (std::size_t k = 0; k + 1 < spectrum.curve.size(); ++k) {
    const auto& a = spectrum.curve[k];
    const auto& b = spectrum.curve[k + 1];
    if (!a.converged || !b.converged || std::abs(a.branch_id - b.branch_id) > 1) continue;
    if ((a.epsilon - eps) * (b.epsilon - eps) > 0.0 || a.epsilon == b.epsilon) continue;
    const double w = (eps - a.epsilon) / (b.epsilon - a.epsilon);
    try {
      add_candidate(cands, solve_nonlinear(eps, alpha, ep, grid, a.shooting_value + w * (b.shooting_value - a.shooting_value), settings),
                    a.branch_id, alpha);
    } catch (const Error&) {
    }
  }
  double nearest = std::numeric_limits<double>::infinity();
  for (const auto& p : spectrum.points)
    if (p.converged) nearest = std::min(nearest, std::abs(p.epsilon - eps));
  for (const auto& p : spectrum.points) {
    if (!p.converged || std::abs(p.epsilon - eps) > nearest) continue;
    try {
      add_candidate(cands, solve_nonlinear(eps, alpha, ep, grid, p.shooting_value, settings), p.branch_id, alpha);
    } catch (const Error&) {
    }
  }
  std::vector<FieldSolution> out;
  for (auto& c : cands) out.push_back(std::move(c.sol));
  std::sort(out.begin(), out.end(), [](const FieldSolution& a, const FieldSolution& b) { return a.T > b.T; });
  return out;
}

namespace {

// One sample per epsilon: the lowest (or highest) converged transmission.
std::vector<SpectrumPoint> single_valued(const std::vector<SpectrumPoint>& spectrum, PeakBranch branch) {
  std::map<double, SpectrumPoint> pick;
  for (const auto& p : spectrum) {
    if (!p.converged || !std::isfinite(p.T)) continue;
    auto it = pick.find(p.epsilon);
    if (it == pick.end()) pick.emplace(p.epsilon, p);
    else if (branch == PeakBranch::Lower ? p.T < it->second.T : p.T > it->second.T) it->second = p;
  }
  std::vector<SpectrumPoint> out;
  out.reserve(pick.size());
  for (auto& [eps, p] : pick) out.push_back(p);
  return out;
}

struct PeakIndex {
  std::size_t index;
  double position;
  double height;
};

std::vector<PeakIndex> peaks_of(const std::vector<SpectrumPoint>& s, double prominence) {
  std::vector<PeakIndex> out;
  const std::size_t n = s.size();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(s[i].T > s[i - 1].T && s[i].T >= s[i + 1].T)) continue;
    double left_min = s[i].T;
    for (std::size_t j = i; j-- > 0;) {
      if (s[j].T > s[i].T) break;
      left_min = std::min(left_min, s[j].T);
    }
    double right_min = s[i].T;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (s[j].T > s[i].T) break;
      right_min = std::min(right_min, s[j].T);
    }
    if (s[i].T - std::max(left_min, right_min) < prominence) continue;

    double pos = s[i].epsilon;
    const double x0 = s[i - 1].epsilon - s[i].epsilon, x2 = s[i + 1].epsilon - s[i].epsilon;
    const double y0 = s[i - 1].T - s[i].T, y2 = s[i + 1].T - s[i].T;
    // Vertex of the parabola through (x0, y0), (0, 0), (x2, y2).
    const double a = (y2 / x2 - y0 / x0) / (x2 - x0);
    const double b = y2 / x2 - a * x2;
    if (a < 0.0) {
      const double xv = -b / (2.0 * a);
      if (xv > x0 && xv < x2) pos += xv;
    }
    out.push_back({i, pos, s[i].T});
  }
  return out;
}

}  // namespace

PeakReport find_peaks(const std::vector<SpectrumPoint>& spectrum, double prominence, PeakBranch branch) {
  const auto s = single_valued(spectrum, branch);
  if (s.empty()) throw EmptySpectrum("spectrum has no converged points");
  PeakReport report;
  for (const auto& p : peaks_of(s, prominence)) {
    report.peak_positions.push_back(p.position);
    report.peak_heights.push_back(p.height);
  }
  return report;
}

PeakReport find_peaks(const std::vector<SpectrumPoint>& spectrum, double prominence,
                      const std::vector<SpectrumPoint>& reference, PeakBranch branch) {
  PeakReport report = find_peaks(spectrum, prominence, branch);
  const PeakReport ref = find_peaks(reference, prominence, branch);
  if (!report.peak_positions.empty() && !ref.peak_positions.empty())
    report.first_peak_shift = report.peak_positions.front() - ref.peak_positions.front();
  return report;
}

PeakReport find_peaks(const NonlinearSpectrum& spectrum, double prominence, PeakBranch branch) {
  const auto s = single_valued(spectrum.points, branch);
  if (s.empty()) throw EmptySpectrum("spectrum has no converged points");
  PeakReport report;
  for (const auto& p : peaks_of(s, prominence)) {
    double pos = p.position, height = p.height;
    if (branch == PeakBranch::Upper) {
      const double lo = s[p.index - 1].epsilon, hi = s[p.index + 1].epsilon;
      for (const auto& c : spectrum.curve)
        if (c.converged && c.epsilon > lo && c.epsilon < hi && c.T > height) {
          pos = c.epsilon;
          height = c.T;
        }
    }
    report.peak_positions.push_back(pos);
    report.peak_heights.push_back(height);
  }
  return report;
}

PeakReport refine_linear_peaks(const PeakReport& peaks, double half_width, const EffectiveParams& ep,
                               const Grid& grid, double tol) {
  const auto T = [&](double eps) { return solve_linear(eps, 1.0, ep, grid).T; };
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  PeakReport out = peaks;
  for (std::size_t k = 0; k < peaks.peak_positions.size(); ++k) {
    double a = peaks.peak_positions[k] - half_width, b = peaks.peak_positions[k] + half_width;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = T(c), fd = T(d);
    while (b - a > tol * std::max(1.0, std::abs(a))) {
      if (fc > fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - g * (b - a);
        fc = T(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + g * (b - a);
        fd = T(d);
      }
    }
    out.peak_positions[k] = 0.5 * (a + b);
    out.peak_heights[k] = T(out.peak_positions[k]);
  }
  return out;
}

double resonance_onset(const std::vector<SpectrumPoint>& spectrum, double prominence, double fraction) {
  const auto s = single_valued(spectrum, PeakBranch::Lower);
  const auto peaks = peaks_of(s, prominence);
  if (peaks.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double level = fraction * peaks.front().height;
  for (std::size_t i = peaks.front().index; i-- > 0;) {
    if (s[i].T < level) {
      const double w = (level - s[i].T) / (s[i + 1].T - s[i].T);
      return s[i].epsilon + w * (s[i + 1].epsilon - s[i].epsilon);
    }
  }
  return s.front().epsilon;
}

std::optional<BandGap> find_band_gap(const std::vector<SpectrumPoint>& spectrum, double prominence, double ratio) {
  const auto s = single_valued(spectrum, PeakBranch::Lower);
  const auto peaks = peaks_of(s, prominence);
  std::optional<BandGap> best;
  for (std::size_t k = 1; k < peaks.size(); ++k) {
    const double threshold = ratio * peaks[k].height;
    std::size_t run_start = 0;
    bool in_run = false;
    for (std::size_t i = peaks[k - 1].index + 1; i <= peaks[k].index; ++i) {
      const bool below = s[i].T < threshold;
      if (below && !in_run) {
        run_start = i;
        in_run = true;
      }
      if (in_run && (!below || i == peaks[k].index)) {
        const std::size_t run_end = below ? i : i - 1;
        const double lo = s[run_start].epsilon, hi = s[run_end].epsilon;
        if (!best || hi - lo > best->eps_hi - best->eps_lo) best = BandGap{lo, hi, threshold};
        in_run = false;
      }
    }
  }
  return best;
}

std::vector<ShiftRow> shift_study(const std::vector<double>& alpha_values, const std::vector<double>& chi_values,
                                  const EffectiveParams& base, const Grid& grid, const ShiftStudyOptions& options,
                                  const SolverSettings& settings) {
  EffectiveParams linear = base;
  linear.chibar = 0.0;
  const auto reference = scan_linear(options.range, linear, grid);
  const PeakReport ref =
      refine_linear_peaks(find_peaks(reference, options.prominence), options.range.spacing(), linear, grid);
  if (ref.peak_positions.empty()) throw EmptySpectrum("reference spectrum has no peak in the scan range");
  const double ref_peak = ref.peak_positions.front();

  std::vector<ShiftRow> rows;
  for (double a : alpha_values) {
    for (double chi : chi_values) {
      ShiftRow row;
      row.alpha = a;
      row.chibar = chi;
      row.effective_nonlinearity = chi * a * a;
      row.tolerance = settings.tolerance_for(a);
      try {
        EffectiveParams ep = base;
        ep.chibar = chi;
        const auto spec = scan_nonlinear(options.range, a, ep, grid, settings);
        for (const auto* pts : {&spec.points, &spec.curve})
          for (const auto& p : *pts)
            if (p.converged) {
              row.max_residual = std::max(row.max_residual, p.residual);
              ++row.converged_points;
            }
        const PeakReport rep = find_peaks(spec, options.prominence, options.branch);
        if (rep.peak_positions.empty()) throw EmptySpectrum("no peak in scan range");
        row.first_peak = rep.peak_positions.front();
        row.shift = row.first_peak - ref_peak;
        row.ok = true;
      } catch (const Error& e) {
        row.error = e.what();
      }
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace slpt
