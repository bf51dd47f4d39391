#pragma once

// Serialization of diagnostics: JSON documents (schema "kdvhl-report-v1")
// and the per-step CSV series.

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "kdvhl/diagnostics.hpp"

namespace kdvhl {

using json = nlohmann::ordered_json;

inline constexpr const char* kReportSchema = "kdvhl-report-v1";
inline constexpr const char* kSeriesHeader =
    "t,J1,J2,K1_chiprime,K1_window,trace2_acc,trace3_acc,residual_l1,residual_l2";

/// Shortest round-trip representation, "nan" / "inf" spelled out.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// JSON cannot hold inf/nan; they are written as strings.
inline json number(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

inline json to_json(const TimeWindow& w) {
  return {{"start", number(w.start)}, {"end", number(w.end)}, {"empty", w.empty()}};
}

inline json to_json(const IdentityBreakdown& b) {
  json terms = json::array();
  for (const auto& t : b.terms) {
    terms.push_back({{"name", t.name}, {"sign", t.sign}, {"integral_abs", number(t.integral_abs)}});
  }
  return {{"level", b.level},
          {"t_star", number(b.t_star)},
          {"window", to_json(TimeWindow{0.0, b.t_star})},
          {"terms", terms},
          {"residual_integral", number(b.residual_integral)},
          {"residual_raw_integral", number(b.residual_raw_integral)},
          {"largest_term_integral", number(b.largest_term_integral)},
          {"normalized_residual", number(b.normalized_residual)},
          {"normalized_residual_raw", number(b.normalized_residual_raw)},
          {"trace_terms_vanish", b.trace_terms_vanish},
          {"young", {{"delta", number(b.delta)},
                     {"coefficient", number(b.young_coefficient)},
                     {"max_ratio", number(b.young_max_ratio)}}}};
}

inline json to_json(const DiagnosticsReport& r) {
  json j;
  j["T"] = number(r.T);
  j["l"] = r.l;
  j["delta"] = number(r.delta);
  j["R"] = number(r.R);
  j["t_star"] = {number(r.t_star[0]), number(r.t_star[1]), number(r.t_star[2]), number(r.t_star[3])};
  json prop = json::array();
  for (int k = 1; k <= 3; ++k) {
    const auto i = static_cast<std::size_t>(k);
    prop.push_back({{"j", k},
                    {"t_star", number(r.t_star[i])},
                    {"sup", number(r.J_sup[i])},
                    {"initial", number(r.J[i].front())}});
  }
  j["propagation"] = prop;
  json smooth = json::array();
  for (int k = 0; k < 3; ++k) {
    const auto i = static_cast<std::size_t>(k);
    smooth.push_back({{"j", k},
                      {"derivative", k + 1},
                      {"t_star", number(r.t_star[i])},
                      {"chi_prime", number(r.K_chi_total[i])},
                      {"hard_window", number(r.K_window_total[i])}});
  }
  j["smoothing"] = smooth;
  j["hard_window_empty"] = r.hard_window_empty;
  j["traces"] = {{"window", to_json(r.trace_window)},
                 {"window_empty", r.trace_window_empty},
                 {"second", number(r.trace2)},
                 {"third", number(r.trace3)},
                 {"third_raw", number(r.trace3_raw)}};
  j["trace_identity"] = {{"rms", number(r.trace_identity.rms)}, {"max", number(r.trace_identity.max)}};
  json kato = json::array();
  for (int k = 0; k < 4; ++k) {
    const auto& kr = r.kato[static_cast<std::size_t>(k)];
    kato.push_back({{"j", k}, {"value", number(kr.value)}, {"x", number(kr.x)}});
  }
  j["kato"] = kato;
  j["strichartz"] = number(r.strichartz);
  j["maximal"] = number(r.maximal);
  j["energy_balance"] = {{"stepwise", number(r.energy.stepwise)},
                         {"net", number(r.energy.net)},
                         {"dissipated", number(r.energy.dissipated)}};
  json ids = json::array();
  for (const auto& b : r.identities) ids.push_back(to_json(b));
  j["identities"] = ids;
  j["interpolation"] = {{"checks", r.interpolation_ratio.size()},
                        {"max_ratio", number(r.interpolation_max_ratio)},
                        {"flag", r.interpolation_flag}};
  json consts = json::object();
  for (const auto& [name, value] : r.constants) consts[name] = number(value);
  j["constants"] = consts;
  j["flags"] = r.flags;
  return j;
}

/// One row per observed step with the fixed series header.
inline std::string series_csv(const DiagnosticsReport& r) {
  std::string out = kSeriesHeader;
  out += '\n';
  const IdentityBreakdown* l1 = r.identity(1);
  const IdentityBreakdown* l2 = r.identity(2);
  const double nan = std::nan("");
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    const double row[] = {r.times[k],
                          r.J[1][k],
                          r.J[2][k],
                          r.K_chi[1][k],
                          r.K_window[1][k],
                          r.trace2_acc[k],
                          r.trace3_acc[k],
                          l1 ? l1->residual[k] : nan,
                          l2 ? l2->residual[k] : nan};
    for (std::size_t c = 0; c < std::size(row); ++c) {
      if (c) out += ',';
      out += format_number(row[c]);
    }
    out += '\n';
  }
  return out;
}

/// Per-step values of every identity term plus the residual.
inline std::string identity_csv(const IdentityBreakdown& b) {
  std::string out = "t";
  for (const auto& t : b.terms) out += "," + t.name;
  out += ",residual,residual_raw\n";
  for (std::size_t k = 0; k < b.times.size(); ++k) {
    out += format_number(b.times[k]);
    for (const auto& t : b.terms) out += "," + format_number(t.values[k]);
    out += "," + format_number(b.residual[k]) + "," + format_number(b.residual_raw[k]) + "\n";
  }
  return out;
}

}  // namespace kdvhl
