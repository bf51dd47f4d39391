#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "kdvhl/datagen.hpp"
#include "kdvhl/oracle.hpp"

using namespace kdvhl;
using Catch::Approx;

namespace {

std::vector<double> sampled(const PeriodicGrid& pg, const Soliton& s) {
  std::vector<double> u(pg.size());
  for (std::size_t j = 0; j < pg.size(); ++j) u[j] = s(pg.node(j));
  return u;
}

double sum(const std::vector<double>& u, double h, int power) {
  double s = 0.0;
  for (double v : u) s += std::pow(v, power);
  return s * h;
}

double soliton_error(std::size_t m) {
  const PeriodicGrid pg(64.0, m);
  const Soliton s{1.0, 24.0};
  const auto u0 = sampled(pg, s);
  const double T = 4.0;
  const double dt = T / std::ceil(T / wholeline_suggested_dt(pg, u0));
  const auto traj = wholeline_solve(pg, u0, T, dt, static_cast<std::size_t>(std::llround(T / dt)));
  double e = 0.0;
  for (std::size_t j = 0; j < m; ++j) e = std::max(e, std::abs(traj.fields.back()[j] - s(pg.node(j), T)));
  return e;
}

}  // namespace

TEST_CASE("periodic grid", "[oracle]") {
  const PeriodicGrid pg(8.0, 16);
  CHECK(pg.spacing() == 0.5);
  CHECK(pg.modes() == 9);
  CHECK(pg.wavenumber(1) == Approx(2.0 * std::numbers::pi / 8.0));
  CHECK(pg.wavenumber(8) == 0.0);  // Nyquist
  CHECK_THROWS_AS(PeriodicGrid(8.0, 24), PreconditionError);
}

TEST_CASE("whole-line solver keeps zero data at zero", "[oracle]") {
  const PeriodicGrid pg(32.0, 64);
  const auto traj = wholeline_solve(pg, std::vector<double>(64, 0.0), 1.0, 0.1, 5);
  CHECK(traj.times.size() == 3);
  for (const auto& f : traj.fields)
    for (double v : f) CHECK(v == 0.0);
}

TEST_CASE("whole-line soliton error decays spectrally", "[oracle]") {
  const double e128 = soliton_error(128), e256 = soliton_error(256), e512 = soliton_error(512);
  CHECK(e256 < 0.05 * e128);
  CHECK(e512 < 1e-6);
}

TEST_CASE("whole-line run conserves momentum and mass", "[oracle]") {
  const PeriodicGrid pg(128.0, 1024);
  const auto u0 = sampled(pg, Soliton{1.0, 40.0});
  auto u1 = u0;
  for (std::size_t j = 0; j < u1.size(); ++j) u1[j] += 0.3 * std::exp(-std::pow(pg.node(j) - 60.0, 2));
  const auto traj = wholeline_solve(pg, u1, 4.0, 0.01, 100);
  const double h = pg.spacing();
  const double m0 = sum(traj.fields.front(), h, 1), q0 = sum(traj.fields.front(), h, 2);
  for (const auto& f : traj.fields) {
    CHECK(std::abs(sum(f, h, 1) - m0) <= 1e-8 * std::abs(m0));
    CHECK(std::abs(sum(f, h, 2) - q0) <= 1e-8 * q0);
  }
}

TEST_CASE("spectral evaluation", "[oracle]") {
  const PeriodicGrid pg(2.0 * std::numbers::pi, 64);
  std::vector<double> u(64);
  for (std::size_t j = 0; j < 64; ++j) u[j] = std::sin(3.0 * pg.node(j)) + 0.5;
  const SpectralEvaluator ev(pg, u);
  for (double x : {0.1, 1.3, 4.0}) {
    CHECK(ev.eval(x) == Approx(std::sin(3.0 * x) + 0.5).margin(1e-12));
    CHECK(ev.eval(x, 1) == Approx(3.0 * std::cos(3.0 * x)).margin(1e-11));
    CHECK(ev.eval(x, 3) == Approx(-27.0 * std::cos(3.0 * x)).margin(1e-9));
  }
}

TEST_CASE("hermite series interpolates values and slopes", "[oracle]") {
  std::vector<double> y, dy;
  for (int k = 0; k <= 20; ++k) {
    const double t = 0.1 * k;
    y.push_back(std::sin(t));
    dy.push_back(std::cos(t));
  }
  const HermiteSeries hs(0.0, 0.1, y, dy);
  CHECK(hs.t_end() == Approx(2.0));
  for (double t : {0.0, 0.05, 0.73, 1.99}) {
    CHECK(hs.value(t) == Approx(std::sin(t)).margin(1e-6));
    CHECK(hs.derivative(t) == Approx(std::cos(t)).margin(1e-4));
  }
  CHECK(hs.value(0.3) == Approx(std::sin(0.3)).margin(1e-15));
}

TEST_CASE("half-line extraction", "[oracle]") {
  const Grid1D g(20.0, 401);
  SECTION("zero trajectory gives a zero pair") {
    const PeriodicGrid pg(64.0, 256);
    const auto traj = wholeline_solve(pg, std::vector<double>(256, 0.0), 1.0, 0.05);
    const auto data = extract_halfline_data(traj, 20.0, g);
    for (double v : data.u0.values) CHECK(v == 0.0);
    CHECK(data.boundary.f(0.5) == 0.0);
    CHECK(data.boundary.fprime(0.5) == 0.0);
  }
  SECTION("soliton passing x* gives a sech^2 pulse") {
    const PeriodicGrid pg(128.0, 1024);
    const Soliton s{1.0, 50.0};
    const auto traj = wholeline_solve(pg, sampled(pg, s), 4.0, 0.0125, 2);
    const auto data = extract_halfline_data(traj, 54.0, g);
    CHECK(data.boundary.f(0.0) == data.u0.values[0]);
    for (double t : {0.0, 1.0, 2.5, 4.0}) {
      CHECK(data.boundary.f(t) == Approx(s(54.0, t)).margin(1e-6));
      CHECK(data.boundary.fprime(t) == Approx(s.dt(54.0, t)).margin(1e-5));
    }
    CHECK(data.u0.values[40] == Approx(s(54.0 + g.node(40))).margin(1e-9));
  }
  SECTION("window outside the period") {
    const PeriodicGrid pg(32.0, 128);
    const auto traj = wholeline_solve(pg, std::vector<double>(128, 0.0), 1.0, 0.5);
    CHECK_THROWS_AS(extract_halfline_data(traj, 20.0, g), PreconditionError);
  }
}

TEST_CASE("support guard measure", "[oracle]") {
  const PeriodicGrid pg(128.0, 1024);
  CHECK(periodic_edge_magnitude(pg, sampled(pg, Soliton{1.0, 64.0})) < 1e-10);
  CHECK(periodic_edge_magnitude(pg, sampled(pg, Soliton{1.0, 20.0})) > 1e-10);
}

TEST_CASE("manufactured forcing", "[oracle]") {
  const auto zero = mms_forcing(ManufacturedSolution::zero());
  CHECK(zero(1.0, 0.3) == 0.0);
  const auto lin = mms_forcing(ManufacturedSolution::linear());
  for (double x : {0.0, 1.5, 7.0}) CHECK(lin(x, 0.2) == Approx(2.0 * x));

  // Independent evaluation of F for e^{-t}/(1 + (x-3)^2) by finite differences.
  const auto rat = ManufacturedSolution::rational();
  const auto F = mms_forcing(rat);
  auto ue = [](double x, double t) { return std::exp(-t) / (1.0 + (x - 3.0) * (x - 3.0)); };
  for (double x : {0.5, 2.0, 3.7, 6.0}) {
    const double t = 0.4, h = 1e-2, k = 1e-5;
    const double ut = (ue(x, t + k) - ue(x, t - k)) / (2.0 * k);
    const double ux = (ue(x + k, t) - ue(x - k, t)) / (2.0 * k);
    const double uxxx = (ue(x - 3 * h, t) - 8 * ue(x - 2 * h, t) + 13 * ue(x - h, t) - 13 * ue(x + h, t) +
                         8 * ue(x + 2 * h, t) - ue(x + 3 * h, t)) /
                        (8.0 * h * h * h);
    CHECK(F(x, t) == Approx(ut + uxxx + 2.0 * ue(x, t) * ux).margin(1e-6));
  }
  CHECK(rat.derivative_mismatch(10.0, 1.0) <= 1e-6);
  CHECK_NOTHROW(ManufacturedSolution::gaussian().validate(10.0, 1.0));
  const auto bd = rat.boundary();
  CHECK(bd.f(0.5) == Approx(ue(0.0, 0.5)));
  CHECK(bd.fprime(0.5) == Approx(-ue(0.0, 0.5)));
}
