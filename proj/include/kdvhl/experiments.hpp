#pragma once

// Config-driven experiments: single simulations, refinement studies
// (convergence, propagation, traces, identities) and oracle comparisons.
// Each produces a JSON report, CSV tables and summary lines; refinement
// levels run concurrently and are assembled in level order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <future>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "kdvhl/config.hpp"
#include "kdvhl/datagen.hpp"
#include "kdvhl/diagnostics.hpp"
#include "kdvhl/oracle.hpp"
#include "kdvhl/report.hpp"
#include "kdvhl/solver.hpp"

namespace kdvhl {

struct Problem {
  Field u0;
  BoundaryData boundary;
  ForcingFunction forcing;
  std::function<double(double, double)> exact;  // set for soliton and mms data
  std::shared_ptr<const WholeLineTrajectory> wholeline;
  std::vector<std::string> warnings;
};

inline Problem build_problem(const ExperimentConfig& c, int level) {
  const Grid1D g = c.grid(level);
  Problem p{Field(g), BoundaryData::zero(), {}, {}, {}, {}};
  switch (c.data) {
    case DataKind::Zero:
      break;
    case DataKind::Kink: {
      auto gen = kink_data(c.kink(), g);
      p.u0 = std::move(gen.field);
      if (gen.warning) p.warnings.push_back(gen.note);
      break;
    }
    case DataKind::Soliton: {
      auto gen = soliton_data(c.soliton_c, c.soliton_center, g);
      p.u0 = std::move(gen.field);
      if (gen.warning) p.warnings.push_back(gen.note);
      const Soliton s{c.soliton_c, c.soliton_center};
      p.boundary = s.boundary();
      p.exact = [s](double x, double t) { return s(x, t); };
      break;
    }
    case DataKind::Mms: {
      const auto ms = c.manufactured();
      p.u0 = Field::sample(g, [&](double x) { return ms.u(x, 0.0); });
      p.boundary = ms.boundary();
      p.forcing = mms_forcing(ms);
      p.exact = ms.u;
      break;
    }
    case DataKind::Oracle: {
      const PeriodicGrid pg(c.oracle_period, c.oracle_points);
      std::vector<double> w0(pg.size());
      const Soliton s{c.soliton_c, c.soliton_center};
      for (std::size_t j = 0; j < pg.size(); ++j) w0[j] = s(pg.node(j));
      const double dt = c.step(level);
      std::size_t sub = c.oracle_substeps;
      if (sub == 0) sub = static_cast<std::size_t>(std::ceil(dt / wholeline_suggested_dt(pg, w0) - 1e-9));
      sub = std::max<std::size_t>(sub, 1);
      p.wholeline = std::make_shared<const WholeLineTrajectory>(
          wholeline_solve(pg, w0, c.T, dt / static_cast<double>(sub), sub));
      auto data = extract_halfline_data(*p.wholeline, c.oracle_x_star, g);
      p.u0 = std::move(data.u0);
      p.boundary = std::move(data.boundary);
      break;
    }
  }
  if (c.boundary_kind != "auto") p.boundary = boundary_pulse(parse_pulse_kind(c.boundary_kind), c.pulse);
  return p;
}

struct LevelRun {
  int level = 0;
  std::size_t n = 0;
  double h = 0.0;
  double dt = 0.0;
  std::size_t steps_taken = 0;
  int picard_max = 0;
  std::optional<std::string> failure;
  std::optional<DiagnosticsReport> diag;
  std::vector<std::string> warnings;
  double compatibility_mismatch = 0.0;

  double err_max = std::numeric_limits<double>::quiet_NaN();
  double err_l2 = std::numeric_limits<double>::quiet_NaN();  // relative

  double global_d2 = 0.0;  // int (u0_xx)^2 over the whole grid

  std::vector<double> sample_times, discrepancy;
  double worst_discrepancy = 0.0;
};

namespace detail {

inline double rel_l2(std::span<const double> a, std::span<const double> ref, double h) {
  std::vector<double> e(a.size()), r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    e[i] = (a[i] - ref[i]) * (a[i] - ref[i]);
    r[i] = ref[i] * ref[i];
  }
  const double den = integrate(r, h).value;
  const double num = integrate(e, h).value;
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

}  // namespace detail

inline LevelRun run_level(const ExperimentConfig& c, int level, bool with_diagnostics = true) {
  LevelRun out;
  out.level = level;
  const Grid1D g = c.grid(level);
  out.n = g.size();
  out.h = g.spacing();
  out.dt = c.step(level);

  Problem p = build_problem(c, level);
  out.warnings = p.warnings;
  {
    const auto d2 = deriv(p.u0.values, out.h, 2);
    std::vector<double> sq(d2.size());
    for (std::size_t i = 0; i < d2.size(); ++i) sq[i] = d2[i] * d2[i];
    out.global_d2 = integrate(sq, out.h).value;
  }

  SolverConfig sc = c.solver(level);
  sc.forcing = p.forcing;
  SolveOptions opts;
  opts.allow_incompatible = c.allow_incompatible;
  const Compatibility compat = check_compatibility(p.u0, p.boundary, opts.compatibility_tol);
  out.compatibility_mismatch = compat.mismatch;
  if (!compat.ok && !c.allow_incompatible) {
    throw ConfigError("solver.allow_incompatible",
                      "initial and boundary data violate u0(0) = f(0) (mismatch " +
                          format_number(compat.mismatch) + "); set to true to override");
  }
  if (!compat.ok) out.warnings.push_back("incompatible corner data (override enabled)");
  if (c.data == DataKind::Oracle) {
    opts.snapshot_every = std::max<std::size_t>(1, sc.steps() / c.oracle_samples);
  }

  std::unique_ptr<RunDiagnostics> acc;
  std::vector<StepObserver> observers;
  if (with_diagnostics) {
    DiagnosticsConfig dc = c.diagnostics();
    dc.forcing = p.forcing;
    acc = std::make_unique<RunDiagnostics>(std::move(dc), c.T);
    observers.push_back(acc->observer());
  }
  const Trajectory traj = solve(p.u0, sc, p.boundary, observers, opts);
  out.steps_taken = traj.steps_taken;
  out.picard_max = traj.max_picard_iterations;
  out.failure = traj.failure;
  if (acc && acc->steps_observed() >= 2) out.diag = acc->finalize();

  const Field& last = traj.final_field();
  if (p.exact && traj.ok()) {
    std::vector<double> ref(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) ref[i] = p.exact(g.node(i), last.t);
    double m = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) m = std::max(m, std::abs(last.values[i] - ref[i]));
    out.err_max = m;
    out.err_l2 = detail::rel_l2(last.values, ref, out.h);
  }
  if (p.wholeline) {
    const auto& wl = *p.wholeline;
    for (const auto& snap : traj.snapshots) {
      if (snap.t == 0.0) continue;
      // Whole-line records share the half-line time grid.
      std::size_t k = 0;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < wl.times.size(); ++j) {
        if (std::abs(wl.times[j] - snap.t) < best) {
          best = std::abs(wl.times[j] - snap.t);
          k = j;
        }
      }
      const Field ref = restrict_to_halfline(wl.grid, wl.fields[k], c.oracle_x_star, g, snap.t);
      const double d = detail::rel_l2(snap.values, ref.values, out.h);
      out.sample_times.push_back(snap.t);
      out.discrepancy.push_back(d);
      out.worst_discrepancy = std::max(out.worst_discrepancy, d);
    }
  }
  return out;
}

/// Runs levels 0..k-1 concurrently and returns them in level order.
inline std::vector<LevelRun> run_levels(const ExperimentConfig& c, int k, bool with_diagnostics = true) {
  std::vector<std::future<LevelRun>> jobs;
  for (int lv = 0; lv < k; ++lv) {
    jobs.push_back(std::async(std::launch::async, [&c, lv, with_diagnostics] {
      return run_level(c, lv, with_diagnostics);
    }));
  }
  std::vector<LevelRun> runs;
  for (auto& j : jobs) runs.push_back(j.get());
  return runs;
}

struct ExperimentOutput {
  json report;
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::string> summary;
  bool solver_failed = false;

  int exit_code() const noexcept { return solver_failed ? 3 : 0; }
};

namespace detail {

inline std::string fmt(double v) {
  if (!std::isfinite(v)) return format_number(v);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string window_text(double a, double b) { return "[" + fmt(a) + ", " + fmt(b) + "]"; }

inline std::string verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

/// |a - b| / |b| for the two finest entries.
inline double finest_variation(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double a = v[v.size() - 2], b = v.back();
  if (b == 0.0) return a == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(a - b) / std::abs(b);
}

/// v[i] / v[i+1].
inline std::vector<double> successive_ratios(const std::vector<double>& v) {
  std::vector<double> r;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    r.push_back(v[i + 1] != 0.0 ? v[i] / v[i + 1] : std::numeric_limits<double>::infinity());
  }
  return r;
}

inline std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

inline json array(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

inline std::string flag_text(const std::vector<std::string>& flags) {
  if (flags.empty()) return "none";
  std::string s;
  for (std::size_t i = 0; i < flags.size(); ++i) s += (i ? "; " : "") + flags[i];
  return s;
}

inline json config_json(const ExperimentConfig& c) {
  return {{"experiment", to_string(c.experiment)},
          {"grid", {{"L", c.L}, {"n", c.n}}},
          {"time", {{"dt", c.dt}, {"T", c.T}}},
          {"weight", {{"epsilon", c.epsilon}, {"b", c.b}, {"v", c.v}, {"x0", c.x0}}},
          {"levels", c.levels}};
}

inline json level_json(const LevelRun& r) {
  json j{{"level", r.level},
         {"n", r.n},
         {"h", r.h},
         {"dt", r.dt},
         {"steps", r.steps_taken},
         {"picard_max_iterations", r.picard_max},
         {"status", r.failure ? "failed" : "ok"},
         {"warnings", r.warnings},
         {"compatibility_mismatch", number(r.compatibility_mismatch)},
         {"global_d2_initial", number(r.global_d2)}};
  if (r.failure) j["failure"] = *r.failure;
  if (std::isfinite(r.err_max)) {
    j["error_max"] = number(r.err_max);
    j["error_l2_rel"] = number(r.err_l2);
  }
  if (!r.sample_times.empty()) {
    j["sample_times"] = array(r.sample_times);
    j["discrepancy"] = array(r.discrepancy);
    j["worst_discrepancy"] = number(r.worst_discrepancy);
  }
  return j;
}

inline std::vector<std::string> diagnostics_summary(const DiagnosticsReport& r) {
  std::vector<std::string> s;
  const std::string flags = flag_text(r.flags);
  for (int j = 1; j <= r.l && j <= 3; ++j) {
    const auto i = static_cast<std::size_t>(j);
    s.push_back("propagation J_" + std::to_string(j) + ": sup " + fmt(r.J_sup[i]) + " (initial " +
                fmt(r.J[i].front()) + "); T*=" + fmt(r.t_star[i]) + ", window " +
                window_text(0.0, r.t_star[i]) + ", flags: " + flags);
  }
  for (int j = 0; j < r.l && j < 3; ++j) {
    const auto i = static_cast<std::size_t>(j);
    s.push_back("smoothing K_" + std::to_string(j) + " (derivative " + std::to_string(j + 1) +
                "): chi-prime " + fmt(r.K_chi_total[i]) + ", hard window R=" + fmt(r.R) + " " +
                fmt(r.K_window_total[i]) + "; T*=" + fmt(r.t_star[i]) + ", window " +
                window_text(0.0, r.t_star[i]) + ", flags: " + (r.hard_window_empty ? "hard window empty" : flags));
  }
  s.push_back("trace gain: int u_xx(0,t)^2 dt " + fmt(r.trace2) + ", int u_xxx(0,t)^2 dt " + fmt(r.trace3) +
              " (stencil " + fmt(r.trace3_raw) + "); T*=" + fmt(r.t_star[static_cast<std::size_t>(r.l)]) +
              ", window " + window_text(r.trace_window.start, r.trace_window.end) +
              ", flags: " + (r.trace_window_empty ? "empty window" : "none"));
  s.push_back("trace identity residual: rms " + fmt(r.trace_identity.rms) + ", max " + fmt(r.trace_identity.max));
  s.push_back("kato S_0..S_3: " + fmt(r.kato[0].value) + ", " + fmt(r.kato[1].value) + ", " +
              fmt(r.kato[2].value) + ", " + fmt(r.kato[3].value) + "; window [0, " + fmt(r.T) + "]");
  s.push_back("strichartz " + fmt(r.strichartz) + ", maximal " + fmt(r.maximal) + "; window [0, " + fmt(r.T) + "]");
  s.push_back("energy balance: stepwise relative discrepancy " + fmt(r.energy.stepwise) + ", net " +
              fmt(r.energy.net));
  for (const auto& b : r.identities) {
    s.push_back("identity level " + std::to_string(b.level) + ": normalized residual " +
                fmt(b.normalized_residual) + " (stencil trace " + fmt(b.normalized_residual_raw) +
                "); T*=" + fmt(b.t_star) + ", window " + window_text(0.0, b.t_star) +
                ", trace terms " + (b.trace_terms_vanish ? "vanish" : "active") + ", young delta " +
                fmt(b.delta) + " coefficient " + fmt(b.young_coefficient));
  }
  s.push_back("interpolation ratio: max " + fmt(r.interpolation_max_ratio) + " over " +
              std::to_string(r.interpolation_ratio.size()) + " checks" +
              (r.interpolation_flag ? ", flag: rhs vanished" : ""));
  return s;
}

inline std::string levels_csv(const std::vector<std::string>& columns,
                              const std::vector<LevelRun>& runs,
                              const std::vector<std::vector<double>>& values) {
  std::string out = "level,n,h,dt";
  for (const auto& c : columns) out += "," + c;
  out += "\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    out += std::to_string(runs[i].level) + "," + std::to_string(runs[i].n) + "," +
           format_number(runs[i].h) + "," + format_number(runs[i].dt);
    for (const auto& col : values) out += "," + format_number(i < col.size() ? col[i] : std::nan(""));
    out += "\n";
  }
  return out;
}

/// Records the level statuses and the finest level's series.
inline void attach_levels(ExperimentOutput& out, const std::vector<LevelRun>& runs) {
  json lv = json::array();
  for (const auto& r : runs) {
    lv.push_back(level_json(r));
    if (r.failure) {
      out.solver_failed = true;
      out.summary.push_back("level " + std::to_string(r.level) + " FAILED: " + *r.failure);
    }
    for (const auto& w : r.warnings) out.summary.push_back("level " + std::to_string(r.level) + " warning: " + w);
  }
  out.report["levels"] = lv;
  const LevelRun* finest = nullptr;
  for (const auto& r : runs)
    if (r.diag) finest = &r;
  if (finest) {
    out.report["diagnostics"] = to_json(*finest->diag);
    out.report["diagnostics"]["level"] = finest->level;
    out.files.emplace_back("series.csv", series_csv(*finest->diag));
  }
}

}  // namespace detail

inline ExperimentOutput run_simulate(const ExperimentConfig& c) {
  ExperimentOutput out;
  auto runs = run_levels(c, 1);
  const LevelRun& r = runs.front();
  out.summary.push_back("simulate: n=" + std::to_string(r.n) + ", dt=" + detail::fmt(r.dt) + ", steps " +
                        std::to_string(r.steps_taken) + ", status " + (r.failure ? "failed" : "ok"));
  detail::attach_levels(out, runs);
  if (r.diag) {
    for (auto& line : detail::diagnostics_summary(*r.diag)) out.summary.push_back(std::move(line));
    for (const auto& b : r.diag->identities) {
      out.files.emplace_back("identity_l" + std::to_string(b.level) + ".csv", identity_csv(b));
    }
  }
  return out;
}

inline ExperimentOutput run_converge(const ExperimentConfig& c) {
  ExperimentOutput out;
  auto runs = run_levels(c, c.levels, false);
  std::vector<double> emax, el2;
  for (const auto& r : runs) {
    emax.push_back(r.err_max);
    el2.push_back(r.err_l2);
  }
  std::vector<double> orders, orders_l2;
  for (double q : detail::successive_ratios(emax)) orders.push_back(std::log2(q));
  for (double q : detail::successive_ratios(el2)) orders_l2.push_back(std::log2(q));
  const double worst = orders.empty() ? 0.0 : *std::min_element(orders.begin(), orders.end());
  const bool pass = !orders.empty() && worst >= c.min_order;
  detail::attach_levels(out, runs);
  out.report["convergence"] = {{"error_max", detail::array(emax)},
                               {"error_l2_rel", detail::array(el2)},
                               {"order_max", detail::array(orders)},
                               {"order_l2", detail::array(orders_l2)},
                               {"min_order_required", c.min_order},
                               {"pass", pass}};
  out.files.emplace_back("levels.csv", detail::levels_csv({"error_max", "error_l2_rel"}, runs, {emax, el2}));
  out.summary.push_back("convergence (joint h, dt halving): max-norm errors " + detail::list(emax) +
                        ", observed orders " + detail::list(orders) + ", required >= " +
                        detail::fmt(c.min_order) + " -> " + detail::verdict(pass));
  out.summary.push_back("relative L2 errors " + detail::list(el2) + ", orders " + detail::list(orders_l2));
  return out;
}

inline ExperimentOutput run_propagation(const ExperimentConfig& c) {
  ExperimentOutput out;
  auto runs = run_levels(c, c.levels);
  detail::attach_levels(out, runs);
  std::vector<std::string> cols;
  std::vector<std::vector<double>> vals;
  json table = json::array();
  auto add = [&](const std::string& name, std::vector<double> v, double tol, const std::string& extra) {
    const double var = detail::finest_variation(v);
    const bool ok = var <= tol;
    table.push_back({{"quantity", name}, {"values", detail::array(v)}, {"finest_variation", number(var)},
                     {"tolerance", tol}, {"pass", ok}});
    out.summary.push_back(name + ": " + detail::list(v) + ", variation between finest " + detail::fmt(var) +
                          " (tolerance " + detail::fmt(tol) + ") -> " + detail::verdict(ok) + "; " + extra);
    cols.push_back(name);
    vals.push_back(std::move(v));
  };
  auto column = [&](auto&& get) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(r.diag ? get(*r.diag) : std::nan(""));
    return v;
  };
  const DiagnosticsReport* fin = runs.back().diag ? &*runs.back().diag : nullptr;
  const std::string flags = fin ? detail::flag_text(fin->flags) : "no diagnostics";
  for (int j = 1; j <= c.l; ++j) {
    const auto i = static_cast<std::size_t>(j);
    const double ts = stopping_time(j, c.T, c.weight());
    add("sup_J" + std::to_string(j), column([i](const DiagnosticsReport& d) { return d.J_sup[i]; }), c.tolerance,
        "T*=" + detail::fmt(ts) + ", window " + detail::window_text(0.0, ts) + ", flags: " + flags);
  }
  for (int j = 0; j < c.l && j < 3; ++j) {
    const auto i = static_cast<std::size_t>(j);
    const double ts = stopping_time(j, c.T, c.weight());
    const std::string extra = "T*=" + detail::fmt(ts) + ", window " + detail::window_text(0.0, ts) + ", flags: " + flags;
    add("K" + std::to_string(j) + "_chiprime", column([i](const DiagnosticsReport& d) { return d.K_chi_total[i]; }),
        c.tolerance, extra);
    add("K" + std::to_string(j) + "_window", column([i](const DiagnosticsReport& d) { return d.K_window_total[i]; }),
        c.tolerance, extra + (fin && fin->hard_window_empty ? " (hard window empty)" : ""));
  }
  add("interpolation_ratio", column([](const DiagnosticsReport& d) { return d.interpolation_max_ratio; }),
      c.interpolation_tolerance, "window [0, " + detail::fmt(c.T) + "]");

  if (c.data == DataKind::Kink) {
    // Roughness left of x0 must show up as growth of the unweighted norm.
    std::vector<double> global;
    for (const auto& r : runs) global.push_back(r.global_d2);
    std::vector<double> growth;
    for (double q : detail::successive_ratios(global)) growth.push_back(q > 0.0 ? 1.0 / q : 0.0);
    const double min_growth = growth.empty() ? 0.0 : *std::min_element(growth.begin(), growth.end());
    const bool rough = min_growth >= c.min_growth;
    out.summary.push_back("global int (u0_xx)^2: " + detail::list(global) + ", growth per halving " +
                          detail::list(growth) + " (required >= " + detail::fmt(c.min_growth) + ") -> " +
                          detail::verdict(rough));
    table.push_back({{"quantity", "global_d2_initial"}, {"values", detail::array(global)},
                     {"growth", detail::array(growth)}, {"min_growth", c.min_growth}, {"pass", rough}});
    cols.push_back("global_d2_initial");
    vals.push_back(global);
  }
  out.report["refinement"] = table;
  out.files.emplace_back("levels.csv", detail::levels_csv(cols, runs, vals));
  if (fin) for (auto& line : detail::diagnostics_summary(*fin)) out.summary.push_back("finest " + line);
  return out;
}

inline ExperimentOutput run_traces(const ExperimentConfig& c) {
  ExperimentOutput out;
  auto runs = run_levels(c, c.levels);
  detail::attach_levels(out, runs);
  std::vector<double> t2, t3, t3raw, rms;
  bool empty = false;
  TimeWindow win{};
  for (const auto& r : runs) {
    if (!r.diag) continue;
    t2.push_back(r.diag->trace2);
    t3.push_back(r.diag->trace3);
    t3raw.push_back(r.diag->trace3_raw);
    rms.push_back(r.diag->trace_identity.rms);
    empty = empty || r.diag->trace_window_empty;
    win = r.diag->trace_window;
  }
  const double ts = stopping_time(c.l, c.T, c.weight());
  const double var = detail::finest_variation(t2);
  const bool stable = !empty && var <= c.tolerance;
  const auto decay = detail::successive_ratios(rms);
  const bool decays = !decay.empty() && *std::min_element(decay.begin(), decay.end()) >= c.min_decay;
  const std::string where = "T*=" + detail::fmt(ts) + ", window " + detail::window_text(win.start, win.end) +
                            ", flags: " + (empty ? "empty window" : "none");
  out.summary.push_back("trace gain int u_xx(0,t)^2 dt: " + detail::list(t2) + ", variation between finest " +
                        detail::fmt(var) + " (tolerance " + detail::fmt(c.tolerance) + ") -> " +
                        (empty ? std::string("EMPTY WINDOW") : detail::verdict(stable)) + "; " + where);
  out.summary.push_back("trace gain int u_xxx(0,t)^2 dt (substituted): " + detail::list(t3) + ", stencil " +
                        detail::list(t3raw) + "; " + where);
  out.summary.push_back("trace identity residual rms: " + detail::list(rms) + ", decay per halving " +
                        detail::list(decay) + " (required >= " + detail::fmt(c.min_decay) + ") -> " +
                        detail::verdict(decays));
  out.report["traces"] = {{"window", to_json(win)},
                          {"window_empty", empty},
                          {"t_star", ts},
                          {"second", detail::array(t2)},
                          {"third", detail::array(t3)},
                          {"third_raw", detail::array(t3raw)},
                          {"second_variation", number(var)},
                          {"second_stable", stable},
                          {"identity_rms", detail::array(rms)},
                          {"identity_decay", detail::array(decay)},
                          {"identity_pass", decays}};
  out.files.emplace_back("levels.csv", detail::levels_csv({"trace2", "trace3", "trace3_raw", "identity_rms"},
                                                          runs, {t2, t3, t3raw, rms}));
  return out;
}

inline ExperimentOutput run_identity(const ExperimentConfig& c) {
  ExperimentOutput out;
  auto runs = run_levels(c, c.levels);
  detail::attach_levels(out, runs);
  json ids = json::array();
  std::vector<std::string> cols;
  std::vector<std::vector<double>> vals;
  for (int lv : c.identity_levels) {
    std::vector<double> res, raw;
    bool vanish = true;
    double ts = 0.0;
    for (const auto& r : runs) {
      if (!r.diag) continue;
      const auto* b = r.diag->identity(lv);
      if (!b) continue;
      res.push_back(b->normalized_residual);
      raw.push_back(b->normalized_residual_raw);
      vanish = vanish && b->trace_terms_vanish;
      ts = b->t_star;
    }
    const auto decay = detail::successive_ratios(res);
    const bool pass = !decay.empty() && *std::min_element(decay.begin(), decay.end()) >= c.min_decay;
    ids.push_back({{"level", lv}, {"t_star", ts}, {"normalized_residual", detail::array(res)},
                   {"normalized_residual_raw", detail::array(raw)}, {"decay", detail::array(decay)},
                   {"trace_terms_vanish", vanish}, {"min_decay", c.min_decay}, {"pass", pass}});
    out.summary.push_back("identity level " + std::to_string(lv) + ": normalized residual " + detail::list(res) +
                          ", decay per halving " + detail::list(decay) + " (required >= " +
                          detail::fmt(c.min_decay) + ") -> " + detail::verdict(pass) + "; T*=" + detail::fmt(ts) +
                          ", window " + detail::window_text(0.0, ts) + ", trace terms " +
                          (vanish ? "vanish (interior-only regime)" : "active"));
    cols.push_back("identity_l" + std::to_string(lv));
    vals.push_back(res);
    if (runs.back().diag) {
      if (const auto* b = runs.back().diag->identity(lv)) {
        out.files.emplace_back("identity_l" + std::to_string(lv) + ".csv", identity_csv(*b));
      }
    }
  }
  out.report["identities"] = ids;
  out.files.emplace_back("levels.csv", detail::levels_csv(cols, runs, vals));
  return out;
}

inline ExperimentOutput run_oracle_compare(const ExperimentConfig& c) {
  ExperimentOutput out;
  auto runs = run_levels(c, c.levels);
  detail::attach_levels(out, runs);
  std::vector<double> worst, rms;
  std::string samples = "level,t,discrepancy\n";
  for (const auto& r : runs) {
    worst.push_back(r.worst_discrepancy);
    rms.push_back(r.diag ? r.diag->trace_identity.rms : std::nan(""));
    for (std::size_t i = 0; i < r.sample_times.size(); ++i) {
      samples += std::to_string(r.level) + "," + format_number(r.sample_times[i]) + "," +
                 format_number(r.discrepancy[i]) + "\n";
    }
  }
  const bool agree = !worst.empty() && *std::max_element(worst.begin(), worst.end()) <= c.oracle_tolerance;
  const auto decay = detail::successive_ratios(rms);
  const bool decays = decay.empty() || *std::min_element(decay.begin(), decay.end()) >= c.min_decay;
  out.summary.push_back("oracle discrepancy (relative L2, worst over samples): " + detail::list(worst) +
                        " (tolerance " + detail::fmt(c.oracle_tolerance) + ") -> " + detail::verdict(agree));
  out.summary.push_back("trace identity residual rms on extracted data: " + detail::list(rms) +
                        ", decay per halving " + detail::list(decay) + " -> " + detail::verdict(decays));
  out.report["oracle"] = {{"worst_discrepancy", detail::array(worst)},
                          {"tolerance", c.oracle_tolerance},
                          {"pass", agree},
                          {"trace_identity_rms", detail::array(rms)},
                          {"trace_identity_decay", detail::array(decay)},
                          {"trace_identity_pass", decays}};
  out.files.emplace_back("oracle.csv", samples);
  out.files.emplace_back("levels.csv", detail::levels_csv({"worst_discrepancy", "trace_identity_rms"}, runs,
                                                          {worst, rms}));
  return out;
}

inline ExperimentOutput run_experiment(const ExperimentConfig& c) {
  ExperimentOutput out;
  switch (c.experiment) {
    case ExperimentKind::Simulate: out = run_simulate(c); break;
    case ExperimentKind::Converge: out = run_converge(c); break;
    case ExperimentKind::Propagation: out = run_propagation(c); break;
    case ExperimentKind::Traces: out = run_traces(c); break;
    case ExperimentKind::Identity: out = run_identity(c); break;
    case ExperimentKind::OracleCompare: out = run_oracle_compare(c); break;
  }
  json head;
  head["schema"] = kReportSchema;
  head["experiment"] = to_string(c.experiment);
  head["status"] = out.solver_failed ? "solver-failure" : "ok";
  head["config"] = detail::config_json(c);
  for (auto& [k, v] : out.report.items()) head[k] = v;
  out.report = std::move(head);
  return out;
}

inline void write_outputs(const std::string& dir, const ExperimentOutput& out) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto put = [&](const std::string& name, const std::string& text) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw Error("cannot write '" + (fs::path(dir) / name).string() + "'");
    f << text;
  };
  put("report.json", out.report.dump(2) + "\n");
  for (const auto& [name, text] : out.files) put(name, text);
  std::string summary;
  for (const auto& line : out.summary) summary += line + "\n";
  put("summary.txt", summary);
}

}  // namespace kdvhl
