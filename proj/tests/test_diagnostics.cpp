#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "kdvhl/datagen.hpp"
#include "kdvhl/diagnostics.hpp"
#include "kdvhl/oracle.hpp"
#include "kdvhl/solver.hpp"

using namespace kdvhl;
using Catch::Approx;

namespace {

SolverConfig config(double dt, double T) {
  SolverConfig c;
  c.dt = dt;
  c.T = T;
  return c;
}

Trajectory stepwise(const Field& u0, const SolverConfig& cfg, const BoundaryData& bd) {
  SolveOptions every;
  every.snapshot_every = 1;
  return solve(u0, cfg, bd, {}, every);
}

// A trajectory whose snapshots all carry the same profile.
Trajectory frozen(const Field& u, double T, std::size_t steps) {
  Trajectory traj;
  traj.config = config(T / static_cast<double>(steps), T);
  for (std::size_t k = 0; k <= steps; ++k) {
    Field s = u;
    s.t = T * static_cast<double>(k) / static_cast<double>(steps);
    traj.snapshots.push_back(s);
    const auto tr = trace_derivs(s);
    traj.traces.push(s.t, tr, tr[0], 0.0);
  }
  return traj;
}

Trajectory soliton_run(std::size_t n, double dt) {
  const Grid1D g(20.0, n);
  const Soliton s{1.0, 5.0};
  return stepwise(Field::sample(g, [&](double x) { return s(x); }), config(dt, 2.0), s.boundary());
}

const WeightSpec kWeight(CutoffSpec(0.25, 1.25), 0.5, 6.0);

}  // namespace

TEST_CASE("stopping time", "[diagnostics]") {
  CHECK(stopping_time(1, 2.0, 1.0, 0.5, 10.0) == 2.0);
  CHECK(stopping_time(2, 2.0, 1.0, 0.5, 10.0) == Approx(0.15));
  CHECK(stopping_time(3, 0.1, 1.0, 0.5, 10.0) == 0.1);
  CHECK(stopping_time(2, 2.0, 1.0, 0.5, 0.0) == 2.0);
  double prev = 1e300;
  for (double v : {0.0, 0.1, 0.5, 1.0, 5.0, 50.0}) {
    const double ts = stopping_time(3, 2.0, 1.0, 0.5, v);
    CHECK(ts <= prev);
    prev = ts;
  }
  CHECK_THROWS_AS(stopping_time(2, 2.0, 1.0, 0.5, -1.0), PreconditionError);
}

TEST_CASE("diagnostics config", "[diagnostics]") {
  DiagnosticsConfig c(kWeight);
  CHECK_NOTHROW(c.validate());
  CHECK(c.effective_delta() > 0.0);
  const double m = kWeight.cutoff.max_derivative();
  CHECK(0.5 - c.effective_delta() * m * m > 0.0);
  CHECK(c.effective_R() == 1.25);
  const auto w = c.effective_trace_window(20.0);
  CHECK(w.start == Approx((1.25 + 6.0) / 0.5));
  CHECK(w.end == 20.0);
  c.l = 2;
  CHECK(c.effective_trace_window(20.0).empty());
  c.identity_levels = {3};
  CHECK_THROWS_AS(c.validate(), PreconditionError);
  c.identity_levels = {1};
  c.l = 4;
  CHECK_THROWS_AS(c.validate(), PreconditionError);
}

TEST_CASE("functionals of the zero solution vanish", "[diagnostics]") {
  const Grid1D g(20.0, 201);
  const auto traj = stepwise(Field(g), config(0.1, 1.0), BoundaryData::zero());
  for (int j = 0; j <= 3; ++j) {
    CHECK(propagation_functional(traj, j, kWeight).sup == 0.0);
    CHECK(kato_functional(traj, j).value == 0.0);
  }
  for (int j = 0; j <= 2; ++j) {
    CHECK(smoothing_functional(traj, j, kWeight, SmoothingMode::ChiPrime) == 0.0);
    CHECK(smoothing_functional(traj, j, kWeight, SmoothingMode::HardWindow, 1.25) == 0.0);
  }
  CHECK(strichartz_functional(traj) == 0.0);
  CHECK(maximal_functional(traj) == 0.0);
  CHECK(trace_integral(traj.traces, 2, {0.0, 1.0}).value == 0.0);
  const auto r = trace_identity_residual(traj.traces);
  CHECK(r.rms == 0.0);
  CHECK(r.max == 0.0);
  for (int lv : {1, 2}) {
    const auto b = identity_residual(traj, lv, DiagnosticsConfig(kWeight));
    for (const auto& t : b.terms)
      for (double v : t.values) CHECK(v == 0.0);
    CHECK(b.normalized_residual == 0.0);
  }
  const auto ic = interpolation_check(Field(g), kWeight);
  CHECK(ic.lhs == 0.0);
  CHECK(ic.ratio == 0.0);
  CHECK_FALSE(ic.flag);
}

TEST_CASE("functional preconditions", "[diagnostics]") {
  const Grid1D g(20.0, 201);
  const auto traj = stepwise(Field(g), config(0.1, 0.2), BoundaryData::zero());
  CHECK_THROWS_AS(propagation_functional(traj, 4, kWeight), DomainError);
  CHECK_THROWS_AS(smoothing_functional(traj, 3, kWeight, SmoothingMode::ChiPrime), DomainError);
  CHECK_THROWS_AS(smoothing_functional(traj, 1, kWeight, SmoothingMode::HardWindow, 0.2), PreconditionError);
  CHECK_THROWS_AS(trace_integral(traj.traces, 1, {0.0, 1.0}), DomainError);
  CHECK_THROWS_AS(identity_residual(traj, 3, DiagnosticsConfig(kWeight)), DomainError);
  CHECK_THROWS_AS(kato_functional(traj, 4), DomainError);
}

TEST_CASE("weight support hides data left of the front", "[diagnostics]") {
  const Grid1D g(20.0, 401);
  const WeightSpec still(CutoffSpec(0.25, 1.25), 0.0, 8.0);
  const Field left = Field::sample(g, [](double x) { return x < 7.0 ? std::sin(x) * std::sin(x) : 0.0; });
  const auto traj = frozen(left, 1.0, 10);
  for (int j = 0; j <= 3; ++j) CHECK(propagation_functional(traj, j, still).values.front() == 0.0);
  const auto ic = interpolation_check(left, still);
  CHECK(ic.lhs == 0.0);
}

TEST_CASE("functionals of a frozen profile", "[diagnostics]") {
  const Grid1D g(10.0, 201);
  const Field u = Field::sample(g, [](double x) { return std::exp(-(x - 5.0) * (x - 5.0)); });
  const double T = 2.0;
  const auto traj = frozen(u, T, 8);
  for (int j = 0; j <= 3; ++j) {
    const auto d = j == 0 ? u.values : deriv(u.values, g.spacing(), j);
    double m = 0.0;
    for (double v : d) m = std::max(m, v * v);
    CHECK(kato_functional(traj, j).value == Approx(T * m).epsilon(1e-12));
  }
  const auto d1 = deriv(u.values, g.spacing(), 1);
  double s = 0.0;
  for (double v : d1) s = std::max(s, std::abs(v));
  CHECK(strichartz_functional(traj) == Approx(std::pow(T, 0.25) * s).epsilon(1e-12));
  std::vector<double> sq(u.values.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = u.values[i] * u.values[i];
  CHECK(maximal_functional(traj) == Approx(std::sqrt(integrate(sq, g.spacing()).value)).epsilon(1e-12));
}

TEST_CASE("smoothing modes and monotone accumulators", "[diagnostics]") {
  const auto traj = soliton_run(201, 0.05);
  REQUIRE(traj.ok());
  const double chi = smoothing_functional(traj, 0, kWeight, SmoothingMode::ChiPrime);
  const double hard = smoothing_functional(traj, 0, kWeight, SmoothingMode::HardWindow, 1.25);
  CHECK(chi > 0.0);
  CHECK(chi <= kWeight.cutoff.max_derivative() * hard * (1.0 + 1e-12));

  const TraceSeries& tr = traj.traces;
  double prev = 0.0;
  for (double end : {0.5, 1.0, 1.5, 2.0}) {
    const auto q = trace_integral(tr, 2, {0.0, end});
    CHECK_FALSE(q.empty_window);
    CHECK(q.value >= prev);
    prev = q.value;
  }
  const auto empty = trace_integral(tr, 3, {1.5, 1.5});
  CHECK(empty.empty_window);
  CHECK(empty.value == 0.0);

  DiagnosticsConfig dc(kWeight);
  dc.l = 2;
  RunDiagnostics acc(dc, 2.0);
  acc.replay(traj);
  const auto rep = acc.finalize();
  for (std::size_t j = 0; j < 3; ++j) {
    for (std::size_t k = 1; k < rep.times.size(); ++k) {
      CHECK(rep.K_chi[j][k] >= rep.K_chi[j][k - 1]);
      CHECK(rep.K_window[j][k] >= rep.K_window[j][k - 1]);
    }
  }
  for (std::size_t k = 1; k < rep.times.size(); ++k) {
    CHECK(rep.trace2_acc[k] >= rep.trace2_acc[k - 1]);
    CHECK(rep.trace3_acc[k] >= rep.trace3_acc[k - 1]);
  }
  for (const auto& J : rep.J)
    for (double v : J) CHECK(v >= 0.0);
  CHECK(rep.strichartz >= 0.0);
  CHECK(rep.maximal >= 0.0);
}

TEST_CASE("streaming and trajectory functionals agree", "[diagnostics]") {
  const auto traj = soliton_run(201, 0.05);
  DiagnosticsConfig dc(kWeight);
  dc.l = 2;
  RunDiagnostics acc(dc, 2.0);
  acc.replay(traj);
  const auto rep = acc.finalize();
  for (int j = 1; j <= 2; ++j) {
    CHECK(rep.J_sup[static_cast<std::size_t>(j)] == Approx(propagation_functional(traj, j, kWeight).sup).epsilon(1e-12));
  }
  CHECK(rep.K_chi_total[1] == Approx(smoothing_functional(traj, 1, kWeight, SmoothingMode::ChiPrime)).epsilon(1e-10));
  CHECK(rep.K_window_total[1] ==
        Approx(smoothing_functional(traj, 1, kWeight, SmoothingMode::HardWindow, 1.25)).epsilon(1e-10));
  CHECK(rep.kato[1].value == Approx(kato_functional(traj, 1).value).epsilon(1e-12));
  CHECK(rep.strichartz == Approx(strichartz_functional(traj)).epsilon(1e-12));
  CHECK(rep.maximal == Approx(maximal_functional(traj)).epsilon(1e-12));
  CHECK(rep.trace_identity.rms == Approx(trace_identity_residual(traj.traces).rms).epsilon(1e-12));
}

TEST_CASE("identity bookkeeping is exact", "[diagnostics]") {
  const auto traj = soliton_run(201, 0.05);
  const WeightSpec fast(CutoffSpec(0.25, 1.25), 4.0, 3.0);
  for (int lv : {1, 2}) {
    const auto b = identity_residual(traj, lv, DiagnosticsConfig(fast));
    REQUIRE(b.terms.size() == 12);
    for (std::size_t k = 0; k < b.times.size(); ++k) {
      double s = 0.0;
      for (const auto& t : b.terms) s += t.sign * t.values[k];
      CHECK(s == b.residual[k]);
    }
    CHECK(b.find("dE_dt") != nullptr);
    CHECK(b.find("tau_mixed") != nullptr);
    CHECK(b.find("nope") == nullptr);
    CHECK(b.delta > 0.0);
    CHECK(b.young_coefficient > 0.0);
    CHECK(b.young_max_ratio <= 1.0 + 1e-12);
  }
}

TEST_CASE("slow weights never reach the boundary", "[diagnostics]") {
  const auto traj = soliton_run(201, 0.05);
  for (int lv : {1, 2}) {
    const auto b = identity_residual(traj, lv, DiagnosticsConfig(kWeight));
    CHECK(b.trace_terms_vanish);
    for (const char* name : {"tau_pp2", "tau_p1sq", "tau_mixed", "tau_psq", "cubic_boundary"}) {
      const auto* t = b.find(name);
      REQUIRE(t != nullptr);
      for (double v : t->values) CHECK(v == 0.0);
    }
  }
  const WeightSpec fast(CutoffSpec(0.25, 1.25), 4.0, 3.0);
  CHECK_FALSE(identity_residual(traj, 1, DiagnosticsConfig(fast)).trace_terms_vanish);
}

TEST_CASE("identity residuals shrink under refinement", "[diagnostics]") {
  std::vector<double> interior, boundary;
  const WeightSpec fast(CutoffSpec(0.25, 1.25), 4.0, 3.0);
  for (auto [n, dt] : {std::pair{201u, 0.05}, {401u, 0.025}, {801u, 0.0125}}) {
    const auto traj = soliton_run(n, dt);
    interior.push_back(identity_residual(traj, 2, DiagnosticsConfig(kWeight)).normalized_residual);
    boundary.push_back(identity_residual(traj, 1, DiagnosticsConfig(fast)).normalized_residual);
  }
  for (std::size_t i = 0; i + 1 < interior.size(); ++i) {
    CHECK(interior[i] / interior[i + 1] >= 2.5);
    CHECK(boundary[i] / boundary[i + 1] >= 2.5);
  }
}

TEST_CASE("trace identity with forcing equals the forcing at x = 0", "[diagnostics]") {
  const auto ms = ManufacturedSolution::gaussian();
  const auto F = mms_forcing(ms);
  auto run = [&](std::size_t n, double dt) {
    const Grid1D g(10.0, n);
    auto cfg = config(dt, 1.0);
    cfg.forcing = F;
    const auto traj = solve(Field::sample(g, [&](double x) { return ms.u(x, 0.0); }), cfg, ms.boundary());
    REQUIRE(traj.ok());
    const auto r = trace_identity_residual(traj.traces);
    double e = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < r.times.size(); ++k) {
      e = std::max(e, std::abs(r.residual[k] - F(0.0, r.times[k])));
      scale = std::max(scale, std::abs(F(0.0, r.times[k])));
    }
    CHECK(scale > 0.1);
    return e;
  };
  const double a = run(201, 0.05), b = run(401, 0.025), c = run(801, 0.0125);
  CHECK(a / b >= 3.0);
  CHECK(b / c >= 3.0);
}

TEST_CASE("unforced trace identity converges at second order", "[diagnostics]") {
  std::vector<double> rms;
  for (auto [n, dt] : {std::pair{201u, 0.05}, {401u, 0.025}, {801u, 0.0125}}) {
    rms.push_back(trace_identity_residual(soliton_run(n, dt).traces).rms);
  }
  CHECK(rms[0] / rms[1] >= 3.5);
  CHECK(rms[1] / rms[2] >= 3.5);
}

TEST_CASE("interpolation check on a smooth field", "[diagnostics]") {
  const Grid1D g(20.0, 801);
  const WeightSpec ws(CutoffSpec(0.25, 1.25), 0.0, 6.0);
  const Field u = Field::sample(g, [](double x) { return std::exp(-(x - 6.7) * (x - 6.7)); });
  const auto r = interpolation_check(u, ws);
  CHECK(r.lhs > 0.0);
  for (double v : r.rhs) CHECK(v > 0.0);
  CHECK(r.ratio == Approx(r.lhs / (r.rhs[0] + r.rhs[1] + r.rhs[2])));
  CHECK_FALSE(r.flag);
}

TEST_CASE("energy balance of a boundary-driven run", "[diagnostics]") {
  const Grid1D g(20.0, 801);
  const auto bd = boundary_pulse(PulseKind::GaussianPulse, {1.0, 1.0, 0.5, 1.0});
  DiagnosticsConfig dc(WeightSpec(CutoffSpec(0.25, 1.25), 4.0, 2.0));
  RunDiagnostics acc(dc, 3.0);
  const auto traj = solve(Field(g), config(0.025, 3.0), bd, {acc.observer()});
  REQUIRE(traj.ok());
  const auto rep = acc.finalize();
  CHECK(rep.energy.stepwise < 1e-2);
  CHECK(rep.energy.dissipated > 0.0);
  CHECK_FALSE(rep.trace_window_empty);
  CHECK(rep.trace2 > 0.0);
}
