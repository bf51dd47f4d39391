#pragma once

// Experiment configuration: a flat key = value file with dotted section
// keys. '#' starts a comment; blank lines are ignored. Every key must be
// known; values are validated when the file is loaded.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "kdvhl/datagen.hpp"
#include "kdvhl/diagnostics.hpp"
#include "kdvhl/error.hpp"
#include "kdvhl/oracle.hpp"
#include "kdvhl/weights.hpp"

namespace kdvhl {

/// Raw key/value pairs in file order.
struct KeyValueFile {
  std::vector<std::pair<std::string, std::string>> entries;

  static KeyValueFile parse(std::istream& in) {
    KeyValueFile kv;
    std::map<std::string, int> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string body = trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(body, "line " + std::to_string(lineno) + " is not of the form key = value");
      }
      std::string key = trim(body.substr(0, eq));
      std::string value = trim(body.substr(eq + 1));
      if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      if (seen.count(key)) {
        throw ConfigError(key, "duplicate (first set on line " + std::to_string(seen[key]) + ")");
      }
      seen[key] = lineno;
      kv.entries.emplace_back(std::move(key), std::move(value));
    }
    return kv;
  }

  static KeyValueFile parse(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static KeyValueFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in);
  }

  static std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
  }
};

enum class ExperimentKind { Simulate, Converge, Propagation, Traces, Identity, OracleCompare };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Simulate: return "simulate";
    case ExperimentKind::Converge: return "converge";
    case ExperimentKind::Propagation: return "propagation";
    case ExperimentKind::Traces: return "traces";
    case ExperimentKind::Identity: return "identity";
    case ExperimentKind::OracleCompare: return "oracle-compare";
  }
  return "simulate";
}

inline std::optional<ExperimentKind> parse_experiment_kind(std::string_view s) {
  for (auto k : {ExperimentKind::Simulate, ExperimentKind::Converge, ExperimentKind::Propagation,
                 ExperimentKind::Traces, ExperimentKind::Identity, ExperimentKind::OracleCompare}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

enum class DataKind { Zero, Kink, Soliton, Mms, Oracle };

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::Simulate;

  double L = 20.0;
  std::size_t n = 401;
  double dt = 0.05;
  double T = 1.0;

  double epsilon = 0.25;
  double b = 1.25;
  double v = 0.0;
  double x0 = 4.0;

  DataKind data = DataKind::Zero;

  int kink_m = 1;
  double kink_amplitude = 0.5;
  std::optional<double> kink_x1, kink_env_left, kink_env_right;
  double kink_base_amplitude = 0.0;
  double kink_base_center = 8.0;
  double kink_base_width = 1.0;

  double soliton_c = 1.0;
  double soliton_center = 10.0;

  std::string mms_solution = "gaussian";
  double mms_amplitude = 0.5;
  double mms_center = 2.0;
  double mms_width = 1.5;
  double mms_omega = 2.0;

  double oracle_period = 128.0;
  std::size_t oracle_points = 1024;
  double oracle_x_star = 40.0;
  std::size_t oracle_substeps = 0;  // 0: chosen from the explicit stability limit
  std::size_t oracle_samples = 8;

  std::string boundary_kind = "auto";
  PulseParams pulse;

  int l = 1;
  double delta = 0.0;
  double R = 0.0;
  std::optional<double> window_start, window_end;
  std::vector<int> identity_levels{1};
  std::size_t interpolation_every = 1;

  double theta = 0.5;
  int picard_max = 30;
  double picard_tol = 1e-12;
  bool allow_incompatible = false;

  int levels = 3;
  double tolerance = 0.25;
  double min_order = 1.9;
  double min_decay = 2.5;
  double min_growth = 1.8;
  double interpolation_tolerance = 0.5;
  double oracle_tolerance = 1e-2;

  std::string output_dir = "out";

  /// Applies the entries without cross-checking them; see from().
  static ExperimentConfig parse(const KeyValueFile& kv) {
    ExperimentConfig c;
    const auto table = c.setters();
    for (const auto& [key, value] : kv.entries) {
      const auto it = table.find(key);
      if (it == table.end()) throw ConfigError(key, "unknown key");
      it->second(key, value);
    }
    return c;
  }

  static ExperimentConfig from(const KeyValueFile& kv) {
    ExperimentConfig c = parse(kv);
    c.validate();
    return c;
  }

  static ExperimentConfig load(const std::string& path) { return from(KeyValueFile::load(path)); }

  WeightSpec weight() const { return {CutoffSpec(epsilon, b), v, x0}; }
  Grid1D grid(int level = 0) const { return {L, (n - 1) * (std::size_t{1} << level) + 1}; }
  double step(int level = 0) const { return dt / static_cast<double>(1 << level); }

  KinkSpec kink() const {
    KinkSpec s = KinkSpec::with_default_geometry(kink_m, x0, kink_amplitude);
    if (kink_x1) s.x1 = *kink_x1;
    if (kink_env_left) s.env_left = *kink_env_left;
    if (kink_env_right) s.env_right = *kink_env_right;
    s.base_amplitude = kink_base_amplitude;
    s.base_center = kink_base_center;
    s.base_width = kink_base_width;
    return s;
  }

  ManufacturedSolution manufactured() const {
    if (mms_solution == "zero") return ManufacturedSolution::zero();
    if (mms_solution == "linear") return ManufacturedSolution::linear();
    if (mms_solution == "rational") return ManufacturedSolution::rational();
    return ManufacturedSolution::gaussian(mms_amplitude, mms_center, mms_width, mms_omega);
  }

  SolverConfig solver(int level = 0) const {
    SolverConfig s;
    s.dt = step(level);
    s.T = T;
    s.theta = theta;
    s.picard_max = picard_max;
    s.picard_tol = picard_tol;
    return s;
  }

  DiagnosticsConfig diagnostics() const {
    DiagnosticsConfig d(weight());
    d.l = l;
    d.delta = delta;
    d.R = R;
    d.identity_levels = identity_levels;
    d.interpolation_every = interpolation_every;
    if (window_start || window_end) {
      const TimeWindow def = d.effective_trace_window(T);
      d.trace_window = TimeWindow{window_start.value_or(def.start), window_end.value_or(def.end)};
    }
    return d;
  }

  bool is_study() const {
    return experiment != ExperimentKind::Simulate && experiment != ExperimentKind::OracleCompare;
  }

  void validate() const {
    auto check = [](bool ok, const char* key, const std::string& what) {
      if (!ok) throw ConfigError(key, what);
    };
    check(std::isfinite(L) && L > 0.0, "grid.L", "must be > 0");
    check(n >= Grid1D::kMinPoints, "grid.n", "must be >= 16");
    check(std::isfinite(dt) && dt > 0.0, "time.dt", "must be > 0");
    check(std::isfinite(T) && T > 0.0, "time.T", "must be > 0");
    check(std::abs(T / dt - std::round(T / dt)) <= 1e-8 * (T / dt), "time.dt",
          "T must be an integer multiple of dt");
    check(std::isfinite(epsilon) && epsilon > 0.0, "weight.epsilon", "must be > 0");
    check(std::isfinite(b) && b >= 5.0 * epsilon * (1.0 - 1e-12), "weight.b", "must satisfy b >= 5*epsilon");
    check(std::isfinite(v) && v >= 0.0, "weight.v", "must be >= 0");
    check(std::isfinite(x0) && x0 > 0.0, "weight.x0", "must be > 0");
    check(theta >= 0.5 && theta <= 1.0, "solver.theta", "must lie in [0.5, 1]");
    check(picard_max >= 1, "solver.picard_max", "must be >= 1");
    check(picard_tol > 0.0, "solver.picard_tol", "must be > 0");
    check(l >= 1 && l <= 3, "diagnostics.l", "must be 1, 2 or 3");
    check(delta >= 0.0, "diagnostics.delta", "must be > 0 (0 selects the default)");
    check(R == 0.0 || R > epsilon, "diagnostics.R", "must exceed weight.epsilon");
    for (int lv : identity_levels) check(lv == 1 || lv == 2, "diagnostics.identity_levels", "levels must be 1 or 2");
    check(levels >= 1 && levels <= 8, "study.levels", "must lie in 1..8");
    if (is_study()) check(levels >= 2, "study.levels", "refinement studies need at least 2 levels");
    check(tolerance > 0.0, "study.tolerance", "must be > 0");
    check(!output_dir.empty(), "output.dir", "must not be empty");

    switch (data) {
      case DataKind::Kink: {
        try {
          kink().validate();
        } catch (const PreconditionError& e) {
          throw ConfigError("kink.x1", e.what());
        }
        check(kink().env_right < L, "kink.envelope_right", "envelope must fit inside the grid");
        break;
      }
      case DataKind::Soliton:
        check(soliton_c >= 0.0, "soliton.c", "must be >= 0 (0 gives zero data)");
        break;
      case DataKind::Mms: {
        check(mms_solution == "zero" || mms_solution == "linear" || mms_solution == "rational" ||
                  mms_solution == "gaussian",
              "mms.solution", "must be zero, linear, rational or gaussian");
        check(mms_width > 0.0, "mms.width", "must be > 0");
        try {
          manufactured().validate(L, T);
        } catch (const PreconditionError& e) {
          throw ConfigError("mms.solution", e.what());
        }
        break;
      }
      case DataKind::Oracle: {
        check(soliton_c >= 0.0, "soliton.c", "must be >= 0 (0 gives zero data)");
        const bool pow2 = oracle_points >= 16 && (oracle_points & (oracle_points - 1)) == 0;
        check(pow2, "oracle.points", "must be a power of two >= 16");
        check(oracle_period > 0.0, "oracle.period", "must be > 0");
        check(oracle_x_star > 0.0 && oracle_x_star + L < oracle_period, "oracle.x_star",
              "the half-line window [x*, x*+L] must lie inside the period");
        check(oracle_samples >= 1, "oracle.samples", "must be >= 1");
        // The periodic solution stands in for the whole line only while the
        // profile stays clear of the period ends.
        const PeriodicGrid pg(oracle_period, oracle_points);
        std::vector<double> u(oracle_points);
        const Soliton s{soliton_c, soliton_center};
        for (std::size_t j = 0; j < oracle_points; ++j) u[j] = s(pg.node(j));
        const Soliton end{soliton_c, soliton_center + soliton_c * T};
        std::vector<double> ue(oracle_points);
        for (std::size_t j = 0; j < oracle_points; ++j) ue[j] = end(pg.node(j));
        check(std::max(periodic_edge_magnitude(pg, u), periodic_edge_magnitude(pg, ue)) <= 1e-10,
              "oracle.period", "profile reaches the support guard zone (within P/8 of the ends)");
        break;
      }
      case DataKind::Zero:
        break;
    }
    if (experiment == ExperimentKind::Converge) {
      check(data == DataKind::Mms || data == DataKind::Soliton, "data.kind",
            "converge needs mms or soliton data");
    }
    if (experiment == ExperimentKind::OracleCompare) {
      check(data == DataKind::Oracle, "data.kind", "oracle-compare needs oracle data");
    }
    if (boundary_kind != "auto") {
      try {
        (void)parse_pulse_kind(boundary_kind);
      } catch (const ConfigError&) {
        throw ConfigError("boundary.kind", "must be auto, zero, gaussian-pulse or ramped-cosine");
      }
      check(data == DataKind::Zero || data == DataKind::Kink, "boundary.kind",
            "explicit boundary pulses apply to zero or kink data only");
      check(pulse.width > 0.0, "boundary.width", "must be > 0");
    }
  }

 private:
  using Setter = std::function<void(const std::string&, const std::string&)>;

  static double to_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end || !std::isfinite(v)) {
      throw ConfigError(key, "expected a finite number, got '" + s + "'");
    }
    return v;
  }
  static long to_int(const std::string& key, const std::string& s) {
    long v = 0;
    const auto* end = s.data() + s.size();
    const auto r = std::from_chars(s.data(), end, v);
    if (r.ec != std::errc() || r.ptr != end) throw ConfigError(key, "expected an integer, got '" + s + "'");
    return v;
  }
  static std::size_t to_size(const std::string& key, const std::string& s) {
    const long v = to_int(key, s);
    if (v < 0) throw ConfigError(key, "must be non-negative");
    return static_cast<std::size_t>(v);
  }
  static bool to_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key, "expected true or false, got '" + s + "'");
  }

  std::map<std::string, Setter> setters() {
    std::map<std::string, Setter> t;
    auto num = [&](const char* k, double& dst) {
      t[k] = [&dst](const std::string& key, const std::string& v) { dst = to_double(key, v); };
    };
    auto opt = [&](const char* k, std::optional<double>& dst) {
      t[k] = [&dst](const std::string& key, const std::string& v) { dst = to_double(key, v); };
    };
    auto size = [&](const char* k, std::size_t& dst) {
      t[k] = [&dst](const std::string& key, const std::string& v) { dst = to_size(key, v); };
    };
    auto integer = [&](const char* k, int& dst) {
      t[k] = [&dst](const std::string& key, const std::string& v) { dst = static_cast<int>(to_int(key, v)); };
    };
    auto text = [&](const char* k, std::string& dst) {
      t[k] = [&dst](const std::string&, const std::string& v) { dst = v; };
    };

    t["experiment"] = [this](const std::string& key, const std::string& v) {
      const auto k = parse_experiment_kind(v);
      if (!k) throw ConfigError(key, "unknown experiment '" + v + "'");
      experiment = *k;
    };
    num("grid.L", L);
    size("grid.n", n);
    num("time.dt", dt);
    num("time.T", T);
    num("weight.epsilon", epsilon);
    num("weight.b", b);
    num("weight.v", v);
    num("weight.x0", x0);
    t["data.kind"] = [this](const std::string& key, const std::string& v) {
      if (v == "zero") data = DataKind::Zero;
      else if (v == "kink") data = DataKind::Kink;
      else if (v == "soliton") data = DataKind::Soliton;
      else if (v == "mms") data = DataKind::Mms;
      else if (v == "oracle") data = DataKind::Oracle;
      else throw ConfigError(key, "must be zero, kink, soliton, mms or oracle");
    };
    integer("kink.m", kink_m);
    num("kink.amplitude", kink_amplitude);
    opt("kink.x1", kink_x1);
    opt("kink.envelope_left", kink_env_left);
    opt("kink.envelope_right", kink_env_right);
    num("kink.base_amplitude", kink_base_amplitude);
    num("kink.base_center", kink_base_center);
    num("kink.base_width", kink_base_width);
    num("soliton.c", soliton_c);
    num("soliton.center", soliton_center);
    text("mms.solution", mms_solution);
    num("mms.amplitude", mms_amplitude);
    num("mms.center", mms_center);
    num("mms.width", mms_width);
    num("mms.omega", mms_omega);
    num("oracle.period", oracle_period);
    size("oracle.points", oracle_points);
    num("oracle.x_star", oracle_x_star);
    size("oracle.substeps", oracle_substeps);
    size("oracle.samples", oracle_samples);
    text("boundary.kind", boundary_kind);
    num("boundary.amplitude", pulse.amplitude);
    num("boundary.center", pulse.center);
    num("boundary.width", pulse.width);
    num("boundary.omega", pulse.omega);
    integer("diagnostics.l", l);
    num("diagnostics.delta", delta);
    num("diagnostics.R", R);
    opt("diagnostics.window_start", window_start);
    opt("diagnostics.window_end", window_end);
    t["diagnostics.identity_levels"] = [this](const std::string& key, const std::string& v) {
      identity_levels.clear();
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = KeyValueFile::trim(item);
        if (!item.empty()) identity_levels.push_back(static_cast<int>(to_int(key, item)));
      }
    };
    size("diagnostics.interpolation_every", interpolation_every);
    num("solver.theta", theta);
    integer("solver.picard_max", picard_max);
    num("solver.picard_tol", picard_tol);
    t["solver.allow_incompatible"] = [this](const std::string& key, const std::string& v) {
      allow_incompatible = to_bool(key, v);
    };
    integer("study.levels", levels);
    num("study.tolerance", tolerance);
    num("study.min_order", min_order);
    num("study.min_decay", min_decay);
    num("study.min_growth", min_growth);
    num("study.interpolation_tolerance", interpolation_tolerance);
    num("oracle.tolerance", oracle_tolerance);
    text("output.dir", output_dir);
    return t;
  }
};

}  // namespace kdvhl
