#pragma once

// Localized energy functionals, smoothing and trace integrals, the weighted
// energy identities for levels 1 and 2, and the interpolation check.
//
// RunDiagnostics is a streaming accumulator fed once per solver step (as a
// StepObserver or by replaying a trajectory); finalize() assembles an
// immutable DiagnosticsReport. The free functions evaluate single functionals
// on an existing trajectory.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kdvhl/error.hpp"
#include "kdvhl/grid.hpp"
#include "kdvhl/solver.hpp"
#include "kdvhl/weights.hpp"

namespace kdvhl {

/// T* = T for j <= 1 or v = 0, otherwise min(T, (x0 + eps) / v).
inline double stopping_time(int j, double T, double x0, double epsilon, double v) {
  require(T > 0.0, "stopping_time: T must be > 0");
  require(v >= 0.0, "stopping_time: v must be >= 0");
  if (j <= 1 || v == 0.0) return T;
  return std::min(T, (x0 + epsilon) / v);
}

inline double stopping_time(int j, double T, const WeightSpec& w) {
  return stopping_time(j, T, w.x0, w.cutoff.epsilon(), w.v);
}

struct TimeWindow {
  double start = 0.0;
  double end = 0.0;
  bool empty() const noexcept { return !(end > start); }
};

namespace detail {

/// Trapezoid integral of samples (times, y) over [a, b], interpolating
/// linearly at the window ends. Times must increase.
inline QuadratureResult time_integral(std::span<const double> times, std::span<const double> y,
                                      double a, double b) {
  require(times.size() == y.size(), "time_integral: length mismatch");
  if (times.size() < 2) return {0.0, true};
  a = std::max(a, times.front());
  b = std::min(b, times.back());
  if (!(b > a)) return {0.0, true};
  double s = 0.0;
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double lo = std::max(a, times[i - 1]);
    const double hi = std::min(b, times[i]);
    if (!(hi > lo)) continue;
    const double span = times[i] - times[i - 1];
    const auto at = [&](double t) { return y[i - 1] + (y[i] - y[i - 1]) * (t - times[i - 1]) / span; };
    s += 0.5 * (hi - lo) * (at(lo) + at(hi));
  }
  return {s, false};
}

/// Running trapezoid integral restricted to [a, b]; entry k covers [a, min(t_k, b)].
inline std::vector<double> running_integral(std::span<const double> times,
                                            std::span<const double> y, double a, double b) {
  std::vector<double> out(times.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double lo = std::max(a, times[i - 1]);
    const double hi = std::min(b, times[i]);
    if (hi > lo) {
      const double span = times[i] - times[i - 1];
      const auto at = [&](double t) { return y[i - 1] + (y[i] - y[i - 1]) * (t - times[i - 1]) / span; };
      acc += 0.5 * (hi - lo) * (at(lo) + at(hi));
    }
    out[i] = acc;
  }
  return out;
}

inline double sup_until(std::span<const double> times, std::span<const double> y, double t_end) {
  double s = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] > t_end * (1.0 + 1e-12) + 1e-14) break;
    s = std::max(s, y[i]);
  }
  return s;
}

/// Trapezoid integral of nodal samples over the physical interval [a, b],
/// with linear interpolation in the partial end cells.
inline QuadratureResult integrate_interval(std::span<const double> g, double h, double a, double b) {
  const double L = h * static_cast<double>(g.size() - 1);
  a = std::max(a, 0.0);
  b = std::min(b, L);
  if (!(b > a)) return {0.0, true};
  const auto at = [&](double x) {
    auto i = static_cast<std::size_t>(x / h);
    if (i + 1 >= g.size()) i = g.size() - 2;
    const double s = x / h - static_cast<double>(i);
    return g[i] * (1.0 - s) + g[i + 1] * s;
  };
  const auto ia = static_cast<std::size_t>(std::ceil(a / h));
  const auto ib = static_cast<std::size_t>(std::floor(b / h));
  if (ia > ib) return {0.5 * (b - a) * (at(a) + at(b)), false};
  double s = 0.5 * (h * static_cast<double>(ia) - a) * (at(a) + g[ia]);
  for (std::size_t i = ia; i < ib; ++i) s += 0.5 * h * (g[i] + g[i + 1]);
  s += 0.5 * (b - h * static_cast<double>(ib)) * (g[ib] + at(b));
  return {s, false};
}

inline double weighted_sum(std::span<const double> a, std::span<const double> b,
                           std::span<const double> w, double h) {
  const std::size_t n = a.size();
  double s = 0.5 * (a[0] * b[0] * w[0] + a[n - 1] * b[n - 1] * w[n - 1]);
  for (std::size_t i = 1; i + 1 < n; ++i) s += a[i] * b[i] * w[i];
  return s * h;
}

/// Centered difference of equispaced samples, second-order one-sided at the ends.
inline std::vector<double> time_derivative(std::span<const double> y, double dt) {
  const std::size_t m = y.size();
  std::vector<double> d(m, 0.0);
  if (m < 3) {
    if (m == 2) d[0] = d[1] = (y[1] - y[0]) / dt;
    return d;
  }
  for (std::size_t k = 1; k + 1 < m; ++k) d[k] = (y[k + 1] - y[k - 1]) / (2.0 * dt);
  d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dt);
  d[m - 1] = (3.0 * y[m - 1] - 4.0 * y[m - 2] + y[m - 3]) / (2.0 * dt);
  return d;
}

inline double rms(std::span<const double> y) {
  if (y.empty()) return 0.0;
  double s = 0.0;
  for (double v : y) s += v * v;
  return std::sqrt(s / static_cast<double>(y.size()));
}

inline double max_abs(std::span<const double> y) {
  double s = 0.0;
  for (double v : y) s = std::max(s, std::abs(v));
  return s;
}

/// Node derivatives d^0..d^3 of a field.
inline std::array<std::vector<double>, 4> derivative_stack(std::span<const double> u, double h) {
  std::array<std::vector<double>, 4> d;
  d[0].assign(u.begin(), u.end());
  for (int k = 1; k <= 3; ++k) d[static_cast<std::size_t>(k)] = deriv(u, h, k);
  return d;
}

}  // namespace detail

struct DiagnosticsConfig {
  WeightSpec wspec;
  int l = 1;
  /// Young parameter; <= 0 selects 0.05 / (sup chi')^2.
  double delta = 0.0;
  std::vector<int> identity_levels{1};
  /// Hard-window width; <= 0 selects b.
  double R = 0.0;
  /// Trace-integral window; unset selects [(b + x0)/v, T*].
  std::optional<TimeWindow> trace_window;
  /// Interpolation check every k steps (0 disables).
  std::size_t interpolation_every = 1;
  ForcingFunction forcing;

  explicit DiagnosticsConfig(WeightSpec w) : wspec(std::move(w)) {}

  void validate() const {
    require(l >= 1, "DiagnosticsConfig: l must be >= 1");
    require(l <= 3, "DiagnosticsConfig: l > 3 needs fourth-order stencils (unsupported)");
    require(delta >= 0.0 && std::isfinite(delta), "DiagnosticsConfig: delta must be > 0");
    for (int lv : identity_levels) {
      require(lv == 1 || lv == 2, "DiagnosticsConfig: identity levels must be 1 or 2");
    }
    if (R > 0.0) {
      require(R > wspec.cutoff.epsilon(), "DiagnosticsConfig: R must exceed epsilon");
    }
  }

  double effective_delta() const {
    if (delta > 0.0) return delta;
    const double m = wspec.cutoff.max_derivative();
    return 0.05 / (m * m);
  }
  double effective_R() const { return R > 0.0 ? R : wspec.cutoff.b(); }

  TimeWindow effective_trace_window(double T) const {
    if (trace_window) return *trace_window;
    const double ts = stopping_time(l, T, wspec);
    const double start = wspec.v > 0.0 ? (wspec.cutoff.b() + wspec.x0) / wspec.v
                                       : std::numeric_limits<double>::infinity();
    return {start, ts};
  }
};

struct InterpolationResult {
  double lhs = 0.0;
  std::array<double, 3> rhs{};  // int u_xx^2 chi', int u_xxx^2 chi', int u_xx^2 chi'_widened
  double ratio = 0.0;
  bool flag = false;  // rhs all zero while lhs is not
};

namespace detail {

inline InterpolationResult interpolation_from(const std::array<std::vector<double>, 4>& d,
                                              std::span<const double> w1, const WeightSpec& widened,
                                              double h, double t) {
  const std::size_t n = w1.size();
  std::vector<double> wide(n);
  moving_weight_nodes(widened, h, t, 1, wide);
  InterpolationResult r;
  for (std::size_t i = 0; i < n; ++i) r.lhs = std::max(r.lhs, d[2][i] * d[2][i] * w1[i]);
  r.rhs[0] = weighted_sum(d[2], d[2], w1, h);
  r.rhs[1] = weighted_sum(d[3], d[3], w1, h);
  r.rhs[2] = weighted_sum(d[2], d[2], wide, h);
  const double total = r.rhs[0] + r.rhs[1] + r.rhs[2];
  if (total > 0.0) {
    r.ratio = r.lhs / total;
  } else {
    r.ratio = 0.0;
    r.flag = r.lhs > 0.0;
  }
  return r;
}

}  // namespace detail

/// sup_x (u_xx)^2 chi' against the three weighted integrals that bound it.
inline InterpolationResult interpolation_check(const Field& field, const WeightSpec& ws) {
  const double h = field.grid.spacing();
  const auto d = detail::derivative_stack(field.values, h);
  std::vector<double> w1(field.values.size());
  moving_weight_nodes(ws, h, field.t, 1, w1);
  const WeightSpec widened(widened_cutoff(ws.cutoff), ws.v, ws.x0);
  return detail::interpolation_from(d, w1, widened, h, field.t);
}

struct IdentityTerm {
  std::string name;
  double sign = 1.0;
  std::vector<double> values;
  double integral_abs = 0.0;  // int_0^{T*} |value| dt
};

/// Every term of the level-l weighted energy identity per step; the residual
/// is the signed sum of the terms, in the order listed.
struct IdentityBreakdown {
  int level = 1;
  double t_star = 0.0;
  std::vector<double> times;
  std::vector<IdentityTerm> terms;
  std::vector<double> residual;
  /// Same sum with the stencil third-derivative trace in place of the substituted one.
  std::vector<double> residual_raw;
  double residual_integral = 0.0;
  double residual_raw_integral = 0.0;
  double largest_term_integral = 0.0;
  double normalized_residual = 0.0;
  double normalized_residual_raw = 0.0;
  bool trace_terms_vanish = true;
  double delta = 0.0;
  /// 1/2 - delta (sup chi')^2.
  double young_coefficient = 0.0;
  /// max over steps of |mixed trace term| / (delta chi'^2 p_x^2 + p^2 / (4 delta)).
  double young_max_ratio = 0.0;

  const IdentityTerm* find(const std::string& name) const {
    for (const auto& t : terms)
      if (t.name == name) return &t;
    return nullptr;
  }
};

struct KatoResult {
  double value = 0.0;
  std::size_t node = 0;
  double x = 0.0;
};

struct TraceIdentityResult {
  std::vector<double> times;
  std::vector<double> residual;
  double rms = 0.0;
  double max = 0.0;
};

/// Stepwise check of d/dt (1/2) int u^2 = f u_xx(0) - u_x(0)^2 / 2 + (2/3) f^3 + int u F.
struct EnergyBalance {
  /// sum_k |dE_k - predicted_k| / sum_k |predicted_k|; the boundary flux uses midpoint traces.
  double stepwise = 0.0;
  /// |E(T) - E(0) - int rate dt| / int |rate| dt.
  double net = 0.0;
  double dissipated = 0.0;  // int |rate| dt
};

struct DiagnosticsReport {
  double T = 0.0;
  int l = 1;
  double delta = 0.0;
  double R = 0.0;
  std::array<double, 4> t_star{};  // indexed by j
  std::vector<double> times;

  std::array<std::vector<double>, 4> J;       // J_j(t), j = 0..3
  std::array<double, 4> J_sup{};              // sup over [0, T*_j]
  std::array<std::vector<double>, 3> K_chi;   // running K_j, derivative order j + 1
  std::array<std::vector<double>, 3> K_window;
  std::array<double, 3> K_chi_total{};        // over [0, T*_j]
  std::array<double, 3> K_window_total{};
  bool hard_window_empty = false;             // window empty at every step

  TimeWindow trace_window;
  bool trace_window_empty = false;
  double trace2 = 0.0;
  double trace3 = 0.0;      // substituted third-derivative trace
  double trace3_raw = 0.0;  // stencil third-derivative trace
  std::vector<double> trace2_acc, trace3_acc;

  TraceIdentityResult trace_identity;  // r - F(0, t)

  std::array<KatoResult, 4> kato{};
  double strichartz = 0.0;
  double maximal = 0.0;
  EnergyBalance energy;
  std::vector<double> energy_curve;

  std::vector<IdentityBreakdown> identities;

  std::vector<double> interpolation_times;
  std::vector<double> interpolation_ratio;
  double interpolation_max_ratio = 0.0;
  bool interpolation_flag = false;

  std::vector<std::pair<std::string, double>> constants;
  std::vector<std::string> flags;

  const IdentityBreakdown* identity(int level) const {
    for (const auto& b : identities)
      if (b.level == level) return &b;
    return nullptr;
  }
};

class RunDiagnostics {
 public:
  RunDiagnostics(DiagnosticsConfig cfg, double T)
      : cfg_(std::move(cfg)),
        widened_(widened_cutoff(cfg_.wspec.cutoff), cfg_.wspec.v, cfg_.wspec.x0),
        T_(T) {
    cfg_.validate();
    require(T > 0.0, "RunDiagnostics: T must be > 0");
  }

  const DiagnosticsConfig& config() const noexcept { return cfg_; }
  std::size_t steps_observed() const noexcept { return rec_.size(); }

  /// Observer adapter; the accumulator must outlive the solve call.
  StepObserver observer() {
    return [this](const StepView& v) { observe(v.field, v.traces, v.f, v.fprime); };
  }

  void observe(const Field& u, const std::array<double, 4>& tr, double f, double fp) {
    const std::size_t n = u.values.size();
    const double h = u.grid.spacing();
    const double t = u.t;
    const WeightSpec& ws = cfg_.wspec;
    if (!rec_.empty()) {
      require(t > rec_.back().t, "RunDiagnostics: times must increase");
    } else {
      h_ = h;
      n_ = n;
      kato_.assign(4, std::vector<double>(n, 0.0));
      prev_sq_.assign(4, std::vector<double>(n, 0.0));
      max_u2_.assign(n, 0.0);
    }
    require(n == n_ && h == h_, "RunDiagnostics: grid changed between steps");

    const auto d = detail::derivative_stack(u.values, h);
    std::array<std::vector<double>, 4> w;
    for (int k = 0; k < 4; ++k) {
      w[static_cast<std::size_t>(k)].resize(n);
      moving_weight_nodes(ws, h, t, k, w[static_cast<std::size_t>(k)]);
    }

    Record r;
    r.t = t;
    r.f = f;
    r.fp = fp;
    r.d = tr;
    for (int k = 0; k < 4; ++k) r.chi0[static_cast<std::size_t>(k)] = ws.cutoff.chi(ws.argument(0.0, t), k);

    std::array<std::vector<double>, 3> dF;  // F, F_x, F_xx at nodes
    if (cfg_.forcing) {
      dF[0].resize(n);
      for (std::size_t i = 0; i < n; ++i) dF[0][i] = cfg_.forcing(h * static_cast<double>(i), t);
      dF[1] = deriv(dF[0], h, 1);
      dF[2] = deriv(dF[0], h, 2);
      r.F0 = dF[0][0];
      r.Fx0 = dF[1][0];
    }

    std::vector<double> sq(n);
    const double R = cfg_.effective_R();
    const double lo = ws.x0 + ws.cutoff.epsilon() - ws.v * t;
    const double hi = ws.x0 + R - ws.v * t;
    for (std::size_t j = 0; j < 4; ++j) {
      for (std::size_t i = 0; i < n; ++i) sq[i] = d[j][i] * d[j][i];
      r.J[j] = detail::weighted_sum(d[j], d[j], w[0], h);
      r.Kc[j] = detail::weighted_sum(d[j], d[j], w[1], h);
      const auto win = detail::integrate_interval(sq, h, lo, hi);
      r.Kw[j] = win.value;
      r.window_empty = win.empty_window;
      for (std::size_t i = 0; i < n; ++i) {
        if (rec_.empty()) prev_sq_[j][i] = sq[i];
        else kato_[j][i] += 0.5 * (t - rec_.back().t) * (prev_sq_[j][i] + sq[i]);
        prev_sq_[j][i] = sq[i];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      max_u2_[i] = std::max(max_u2_[i], d[0][i] * d[0][i]);
      r.sup_ux = std::max(r.sup_ux, std::abs(d[1][i]));
    }
    for (std::size_t i = 0; i < n; ++i) sq[i] = d[0][i] * d[0][i];
    r.energy = 0.5 * integrate(sq, h).value;
    r.energy_rate = f * tr[2] - 0.5 * tr[1] * tr[1] + (2.0 / 3.0) * f * f * f;
    if (cfg_.forcing) {
      for (std::size_t i = 0; i < n; ++i) sq[i] = d[0][i] * dF[0][i];
      r.source = integrate(sq, h).value;
      r.energy_rate += r.source;
    }

    for (int lv = 1; lv <= 2; ++lv) {
      auto& L = r.level[static_cast<std::size_t>(lv - 1)];
      const auto& p = d[static_cast<std::size_t>(lv)];
      L.p2_chi3 = detail::weighted_sum(p, p, w[3], h);
      std::vector<double> cube(n), vel(n);
      if (lv == 1) {
        for (std::size_t i = 0; i < n; ++i) cube[i] = d[1][i] * d[1][i] * d[1][i];
        L.cubic_interior = detail::weighted_sum(cube, w[0], std::vector<double>(n, 1.0), h);
      } else {
        for (std::size_t i = 0; i < n; ++i) cube[i] = 5.0 * d[1][i] * d[2][i] * d[2][i];
        L.cubic_interior = detail::weighted_sum(cube, w[0], std::vector<double>(n, 1.0), h);
      }
      for (std::size_t i = 0; i < n; ++i) vel[i] = d[0][i] * p[i] * p[i];
      L.cubic_weight = detail::weighted_sum(vel, w[1], std::vector<double>(n, 1.0), h);
      if (cfg_.forcing) {
        L.forcing = detail::weighted_sum(p, dF[static_cast<std::size_t>(lv)], w[0], h);
      }
    }

    if (cfg_.interpolation_every > 0 && rec_.size() % cfg_.interpolation_every == 0) {
      r.interp = detail::interpolation_from(d, w[1], widened_, h, t);
    }
    rec_.push_back(std::move(r));
  }

  /// Feeds every snapshot of a trajectory stored at every step.
  void replay(const Trajectory& traj) {
    require(traj.snapshots.size() == traj.traces.size(),
            "RunDiagnostics::replay: trajectory must keep a snapshot at every step");
    for (std::size_t k = 0; k < traj.snapshots.size(); ++k) {
      const auto& s = traj.snapshots[k];
      const std::array<double, 4> tr{traj.traces.d0[k], traj.traces.d1[k], traj.traces.d2[k],
                                     traj.traces.d3[k]};
      observe(s, tr, traj.traces.f[k], traj.traces.fprime[k]);
    }
  }

  DiagnosticsReport finalize() const {
    require(rec_.size() >= 2, "RunDiagnostics: need at least two observed steps");
    const WeightSpec& ws = cfg_.wspec;
    DiagnosticsReport rep;
    rep.T = T_;
    rep.l = cfg_.l;
    rep.delta = cfg_.effective_delta();
    rep.R = cfg_.effective_R();
    for (int j = 0; j < 4; ++j) rep.t_star[static_cast<std::size_t>(j)] = stopping_time(j, T_, ws);

    const std::size_t m = rec_.size();
    rep.times.resize(m);
    for (std::size_t k = 0; k < m; ++k) rep.times[k] = rec_[k].t;
    const auto& ts = rep.times;
    auto column = [&](auto&& get) {
      std::vector<double> out(m);
      for (std::size_t k = 0; k < m; ++k) out[k] = get(rec_[k]);
      return out;
    };

    for (std::size_t j = 0; j < 4; ++j) {
      rep.J[j] = column([&](const Record& r) { return r.J[j]; });
      rep.J_sup[j] = detail::sup_until(ts, rep.J[j], rep.t_star[j]);
    }
    bool any_window = false;
    for (const auto& r : rec_) any_window = any_window || !r.window_empty;
    rep.hard_window_empty = !any_window;
    for (std::size_t j = 0; j < 3; ++j) {
      const auto kc = column([&](const Record& r) { return r.Kc[j + 1]; });
      const auto kw = column([&](const Record& r) { return r.Kw[j + 1]; });
      rep.K_chi[j] = detail::running_integral(ts, kc, 0.0, T_);
      rep.K_window[j] = detail::running_integral(ts, kw, 0.0, T_);
      rep.K_chi_total[j] = detail::time_integral(ts, kc, 0.0, rep.t_star[j]).value;
      rep.K_window_total[j] = detail::time_integral(ts, kw, 0.0, rep.t_star[j]).value;
    }

    // Traces.
    const auto d2sq = column([](const Record& r) { return r.d[2] * r.d[2]; });
    const auto d3s = column([](const Record& r) { return r.F0 - r.fp - 2.0 * r.f * r.d[1]; });
    std::vector<double> d3sq(m), d3rawsq(m);
    for (std::size_t k = 0; k < m; ++k) {
      d3sq[k] = d3s[k] * d3s[k];
      d3rawsq[k] = rec_[k].d[3] * rec_[k].d[3];
    }
    rep.trace_window = cfg_.effective_trace_window(T_);
    const auto tw = rep.trace_window;
    const auto q2 = detail::time_integral(ts, d2sq, tw.start, tw.end);
    rep.trace_window_empty = tw.empty() || q2.empty_window;
    rep.trace2 = q2.value;
    rep.trace3 = detail::time_integral(ts, d3sq, tw.start, tw.end).value;
    rep.trace3_raw = detail::time_integral(ts, d3rawsq, tw.start, tw.end).value;
    rep.trace2_acc = detail::running_integral(ts, d2sq, tw.start, tw.end);
    rep.trace3_acc = detail::running_integral(ts, d3sq, tw.start, tw.end);
    if (rep.trace_window_empty) rep.flags.push_back("trace window empty");

    rep.trace_identity.times = ts;
    rep.trace_identity.residual =
        column([](const Record& r) { return r.d[3] + r.fp + 2.0 * r.f * r.d[1] - r.F0; });
    rep.trace_identity.rms = detail::rms(rep.trace_identity.residual);
    rep.trace_identity.max = detail::max_abs(rep.trace_identity.residual);

    for (std::size_t j = 0; j < 4; ++j) {
      KatoResult kr;
      for (std::size_t i = 0; i < n_; ++i) {
        if (kato_[j][i] > kr.value) {
          kr.value = kato_[j][i];
          kr.node = i;
        }
      }
      kr.x = h_ * static_cast<double>(kr.node);
      rep.kato[j] = kr;
    }
    const auto s4 = column([](const Record& r) { return std::pow(r.sup_ux, 4); });
    rep.strichartz = std::pow(detail::time_integral(ts, s4, 0.0, T_).value, 0.25);
    rep.maximal = std::sqrt(integrate(max_u2_, h_).value);

    rep.energy_curve = column([](const Record& r) { return r.energy; });
    {
      double mismatch = 0.0, total = 0.0, predicted_sum = 0.0;
      for (std::size_t k = 1; k < m; ++k) {
        // Boundary flux from midpoint traces, the form the Crank-Nicolson
        // step conserves; the source term is averaged.
        const Record& a = rec_[k - 1];
        const Record& b = rec_[k];
        const double fm = 0.5 * (a.f + b.f), d1 = 0.5 * (a.d[1] + b.d[1]), d2 = 0.5 * (a.d[2] + b.d[2]);
        const double flux = fm * d2 - 0.5 * d1 * d1 + (2.0 / 3.0) * fm * fm * fm;
        const double predicted = (ts[k] - ts[k - 1]) * (flux + 0.5 * (a.source + b.source));
        mismatch += std::abs(rec_[k].energy - rec_[k - 1].energy - predicted);
        total += std::abs(predicted);
        predicted_sum += predicted;
      }
      rep.energy.dissipated = total;
      if (total > 0.0) {
        rep.energy.stepwise = mismatch / total;
        rep.energy.net = std::abs(rec_.back().energy - rec_.front().energy - predicted_sum) / total;
      }
    }

    for (int lv : cfg_.identity_levels) rep.identities.push_back(identity(lv));

    for (const auto& r : rec_) {
      if (!r.interp) continue;
      rep.interpolation_times.push_back(r.t);
      rep.interpolation_ratio.push_back(r.interp->ratio);
      rep.interpolation_max_ratio = std::max(rep.interpolation_max_ratio, r.interp->ratio);
      rep.interpolation_flag = rep.interpolation_flag || r.interp->flag;
    }
    if (rep.interpolation_flag) rep.flags.push_back("interpolation rhs vanished with nonzero lhs");
    if (rep.hard_window_empty) rep.flags.push_back("hard smoothing window empty");

    auto& c = rep.constants;
    for (int j = 1; j <= 3; ++j) c.emplace_back("sup_J" + std::to_string(j), rep.J_sup[static_cast<std::size_t>(j)]);
    for (int j = 0; j < 3; ++j) {
      c.emplace_back("K" + std::to_string(j) + "_chiprime", rep.K_chi_total[static_cast<std::size_t>(j)]);
      c.emplace_back("K" + std::to_string(j) + "_window", rep.K_window_total[static_cast<std::size_t>(j)]);
    }
    c.emplace_back("trace2", rep.trace2);
    c.emplace_back("trace3", rep.trace3);
    for (int j = 0; j < 4; ++j) c.emplace_back("kato_S" + std::to_string(j), rep.kato[static_cast<std::size_t>(j)].value);
    c.emplace_back("strichartz", rep.strichartz);
    c.emplace_back("maximal", rep.maximal);
    c.emplace_back("interpolation_ratio", rep.interpolation_max_ratio);
    return rep;
  }

 private:
  struct LevelTerms {
    double p2_chi3 = 0.0;         // int p^2 chi'''
    double cubic_interior = 0.0;  // I31
    double cubic_weight = 0.0;    // int u p^2 chi'
    double forcing = 0.0;         // int p d^l F chi
  };
  struct Record {
    double t = 0.0, f = 0.0, fp = 0.0, F0 = 0.0, Fx0 = 0.0;
    std::array<double, 4> d{};
    std::array<double, 4> chi0{};
    std::array<double, 4> J{}, Kc{}, Kw{};
    bool window_empty = true;
    double sup_ux = 0.0;
    double energy = 0.0;       // (1/2) int u^2
    double energy_rate = 0.0;  // f u_xx(0) - u_x(0)^2 / 2 + (2/3) f^3 + int u F
    double source = 0.0;       // int u F
    std::array<LevelTerms, 2> level{};
    std::optional<InterpolationResult> interp;
  };

  IdentityBreakdown identity(int lv) const {
    const std::size_t m = rec_.size();
    const WeightSpec& ws = cfg_.wspec;
    const auto li = static_cast<std::size_t>(lv);
    IdentityBreakdown b;
    b.level = lv;
    b.t_star = stopping_time(lv, T_, ws);
    b.delta = cfg_.effective_delta();
    const double cmax = ws.cutoff.max_derivative();
    b.young_coefficient = 0.5 - b.delta * cmax * cmax;
    b.times.resize(m);
    for (std::size_t k = 0; k < m; ++k) b.times[k] = rec_[k].t;
    const double dt = m > 1 ? (b.times.back() - b.times.front()) / static_cast<double>(m - 1) : 1.0;

    std::vector<double> energy(m), d1(m);
    for (std::size_t k = 0; k < m; ++k) {
      energy[k] = 0.5 * rec_[k].J[li];
      d1[k] = rec_[k].d[1];
    }
    const auto dE = detail::time_derivative(energy, dt);
    const auto dd1 = detail::time_derivative(d1, dt);

    auto add = [&](std::string name, double sign) -> std::vector<double>& {
      b.terms.push_back({std::move(name), sign, std::vector<double>(m, 0.0), 0.0});
      return b.terms.back().values;
    };
    auto& t_dE = add("dE_dt", 1.0);
    auto& t_i1 = add("I1_transport", 1.0);
    auto& t_sm = add("smoothing", 1.0);
    auto& t_i2 = add("I2_weight3", 1.0);
    auto& t_i31 = add("I31_cubic", 1.0);
    auto& t_i32 = add("I32_cubic_weight", 1.0);
    auto& t_ib = add("cubic_boundary", 1.0);
    auto& t_fo = add("forcing", -1.0);
    auto& t_ta = add("tau_pp2", -1.0);
    auto& t_tb = add("tau_p1sq", -1.0);
    auto& t_tc = add("tau_mixed", -1.0);
    auto& t_td = add("tau_psq", -1.0);
    std::vector<double> tb_raw(m), ta_raw(m);

    b.residual.assign(m, 0.0);
    b.residual_raw.assign(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      const Record& r = rec_[k];
      const LevelTerms& L = r.level[li - 1];
      const double d3s = r.F0 - r.fp - 2.0 * r.f * r.d[1];
      // p = d^l u at x = 0 and its first two x-derivatives.
      double p0, p1, p2, p1_raw, p2_raw;
      if (lv == 1) {
        p0 = r.d[1];
        p1 = r.d[2];
        p2 = d3s;
        p1_raw = p1;
        p2_raw = r.d[3];
      } else {
        p0 = r.d[2];
        p1 = d3s;
        p1_raw = r.d[3];
        p2 = r.Fx0 - dd1[k] - 2.0 * (r.d[1] * r.d[1] + r.f * r.d[2]);
        p2_raw = p2;
      }
      t_dE[k] = dE[k];
      t_i1[k] = -0.5 * ws.v * r.Kc[li];
      t_sm[k] = 1.5 * r.Kc[li + 1];
      t_i2[k] = -0.5 * L.p2_chi3;
      t_i31[k] = L.cubic_interior;
      t_i32[k] = -L.cubic_weight;
      t_ib[k] = -r.f * r.d[li] * r.d[li] * r.chi0[0];
      t_fo[k] = L.forcing;
      t_ta[k] = p0 * p2 * r.chi0[0];
      t_tb[k] = -0.5 * p1 * p1 * r.chi0[0];
      t_tc[k] = -p0 * p1 * r.chi0[1];
      t_td[k] = 0.5 * p0 * p0 * r.chi0[2];
      ta_raw[k] = p0 * p2_raw * r.chi0[0];
      tb_raw[k] = -0.5 * p1_raw * p1_raw * r.chi0[0];

      const double young = b.delta * r.chi0[1] * r.chi0[1] * p1 * p1 + p0 * p0 / (4.0 * b.delta);
      if (young > 0.0) b.young_max_ratio = std::max(b.young_max_ratio, std::abs(t_tc[k]) / young);
      if (r.t <= b.t_star * (1.0 + 1e-12)) {
        b.trace_terms_vanish = b.trace_terms_vanish && t_ib[k] == 0.0 && t_ta[k] == 0.0 &&
                               t_tb[k] == 0.0 && t_tc[k] == 0.0 && t_td[k] == 0.0;
      }
    }
    for (std::size_t k = 0; k < m; ++k) {
      double s = 0.0;
      for (const auto& term : b.terms) s += term.sign * term.values[k];
      b.residual[k] = s;
      b.residual_raw[k] = s + (-1.0) * (ta_raw[k] - t_ta[k]) + (-1.0) * (tb_raw[k] - t_tb[k]);
    }

    std::vector<double> a(m);
    for (auto& term : b.terms) {
      for (std::size_t k = 0; k < m; ++k) a[k] = std::abs(term.values[k]);
      term.integral_abs = detail::time_integral(b.times, a, 0.0, b.t_star).value;
      b.largest_term_integral = std::max(b.largest_term_integral, term.integral_abs);
    }
    for (std::size_t k = 0; k < m; ++k) a[k] = std::abs(b.residual[k]);
    b.residual_integral = detail::time_integral(b.times, a, 0.0, b.t_star).value;
    for (std::size_t k = 0; k < m; ++k) a[k] = std::abs(b.residual_raw[k]);
    b.residual_raw_integral = detail::time_integral(b.times, a, 0.0, b.t_star).value;
    if (b.largest_term_integral > 0.0) {
      b.normalized_residual = b.residual_integral / b.largest_term_integral;
      b.normalized_residual_raw = b.residual_raw_integral / b.largest_term_integral;
    }
    return b;
  }

  DiagnosticsConfig cfg_;
  WeightSpec widened_;
  double T_;
  double h_ = 0.0;
  std::size_t n_ = 0;
  std::vector<Record> rec_;
  std::vector<std::vector<double>> kato_, prev_sq_;
  std::vector<double> max_u2_;
};

// Functionals on stored trajectories. These use whatever snapshots the
// trajectory kept; time integrals are trapezoidal over the snapshot times.

struct FunctionalCurve {
  std::vector<double> times;
  std::vector<double> values;
  double sup = 0.0;  // over [0, T*]
  double t_star = 0.0;
};

/// J_j(t) = int (d^j u)^2 chi(x + v t - x0) dx, j in 0..3.
inline FunctionalCurve propagation_functional(const Trajectory& traj, int j, const WeightSpec& ws) {
  if (j < 0 || j > 3) throw DomainError("propagation_functional: j must be 0..3");
  FunctionalCurve c;
  c.t_star = stopping_time(j, traj.config.T, ws);
  for (const auto& s : traj.snapshots) {
    c.times.push_back(s.t);
    c.values.push_back(weighted_l2(s, j, ws, 0));
  }
  c.sup = detail::sup_until(c.times, c.values, c.t_star);
  return c;
}

enum class SmoothingMode { ChiPrime, HardWindow };

/// K_j = int_0^{T*} int (d^{j+1} u)^2 chi'(x + v t - x0) dx dt (chi-prime mode) or the
/// same over [max(x0 + eps - v t, 0), x0 + R - v t] (hard-window mode).
inline double smoothing_functional(const Trajectory& traj, int j, const WeightSpec& ws,
                                   SmoothingMode mode, double R = 0.0) {
  if (j < 0 || j + 1 > 3) throw DomainError("smoothing_functional: need j + 1 <= 3");
  if (mode == SmoothingMode::HardWindow) {
    require(R > ws.cutoff.epsilon(), "smoothing_functional: R must exceed epsilon (empty window)");
  }
  std::vector<double> times, vals;
  for (const auto& s : traj.snapshots) {
    times.push_back(s.t);
    if (mode == SmoothingMode::ChiPrime) {
      vals.push_back(weighted_l2(s, j + 1, ws, 1));
    } else {
      const double h = s.grid.spacing();
      auto d = deriv(s.values, h, j + 1);
      for (double& x : d) x *= x;
      vals.push_back(detail::integrate_interval(d, h, ws.x0 + ws.cutoff.epsilon() - ws.v * s.t,
                                                ws.x0 + R - ws.v * s.t)
                         .value);
    }
  }
  return detail::time_integral(times, vals, 0.0, stopping_time(j, traj.config.T, ws)).value;
}

/// int (d^k u(0, t))^2 dt over the window, k in {2, 3}. For k = 3 the
/// unforced substitution -f' - 2 f u_x(0, t) is used unless raw is set.
inline QuadratureResult trace_integral(const TraceSeries& tr, int k, TimeWindow window,
                                       bool raw = false) {
  if (k != 2 && k != 3) throw DomainError("trace_integral: k must be 2 or 3");
  if (window.empty()) return {0.0, true};
  std::vector<double> y(tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double v = k == 2 ? tr.d2[i] : (raw ? tr.d3[i] : -tr.fprime[i] - 2.0 * tr.f[i] * tr.d1[i]);
    y[i] = v * v;
  }
  return detail::time_integral(tr.times, y, window.start, window.end);
}

/// r(t) = u_xxx(0, t) + f'(t) + 2 f(t) u_x(0, t).
inline TraceIdentityResult trace_identity_residual(const TraceSeries& tr) {
  TraceIdentityResult r;
  r.times = tr.times;
  r.residual.resize(tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) {
    r.residual[i] = tr.d3[i] + tr.fprime[i] + 2.0 * tr.f[i] * tr.d1[i];
  }
  r.rms = detail::rms(r.residual);
  r.max = detail::max_abs(r.residual);
  return r;
}

/// Level-l identity breakdown from a trajectory with a snapshot at every step.
inline IdentityBreakdown identity_residual(const Trajectory& traj, int level, DiagnosticsConfig cfg) {
  if (level != 1 && level != 2) throw DomainError("identity_residual: level must be 1 or 2");
  cfg.identity_levels = {level};
  cfg.interpolation_every = 0;
  if (!cfg.forcing && traj.config.forcing) cfg.forcing = traj.config.forcing;
  RunDiagnostics acc(std::move(cfg), traj.config.T);
  acc.replay(traj);
  return acc.finalize().identities.front();
}

/// S_j = max over nodes of int_0^T (d^j u)^2 dt.
inline KatoResult kato_functional(const Trajectory& traj, int j) {
  if (j < 0 || j > 3) throw DomainError("kato_functional: j must be 0..3");
  const auto& snaps = traj.snapshots;
  require(!snaps.empty(), "kato_functional: empty trajectory");
  const std::size_t n = snaps.front().values.size();
  std::vector<double> acc(n, 0.0), prev;
  for (std::size_t k = 0; k < snaps.size(); ++k) {
    auto d = j == 0 ? snaps[k].values : deriv(snaps[k].values, snaps[k].grid.spacing(), j);
    for (double& x : d) x *= x;
    if (k > 0) {
      const double dt = snaps[k].t - snaps[k - 1].t;
      for (std::size_t i = 0; i < n; ++i) acc[i] += 0.5 * dt * (prev[i] + d[i]);
    }
    prev = std::move(d);
  }
  KatoResult r;
  for (std::size_t i = 0; i < n; ++i) {
    if (acc[i] > r.value) {
      r.value = acc[i];
      r.node = i;
    }
  }
  r.x = snaps.front().grid.node(r.node);
  return r;
}

/// (int_0^T sup_x |u_x|^4 dt)^(1/4).
inline double strichartz_functional(const Trajectory& traj) {
  std::vector<double> times, vals;
  for (const auto& s : traj.snapshots) {
    const auto d = deriv(s.values, s.grid.spacing(), 1);
    times.push_back(s.t);
    vals.push_back(std::pow(detail::max_abs(d), 4));
  }
  return std::pow(integrate_samples(times, vals), 0.25);
}

/// (int_0^L sup_t |u|^2 dx)^(1/2).
inline double maximal_functional(const Trajectory& traj) {
  require(!traj.snapshots.empty(), "maximal_functional: empty trajectory");
  std::vector<double> m(traj.snapshots.front().values.size(), 0.0);
  for (const auto& s : traj.snapshots)
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::max(m[i], s.values[i] * s.values[i]);
  return std::sqrt(integrate(m, traj.snapshots.front().grid.spacing()).value);
}

}  // namespace kdvhl
