#pragma once

// theta-scheme integrator for
//   u_t + u_xxx + (u^2)_x = F(x, t)   on [0, L] x [0, T],
//   u(0, t) = f(t),  u(L, t) = 0,  u_x(L, t) = 0.
//
// The dispersive term is implicit (banded solve, factored once per run);
// the flux (u^2)_x is evaluated at the midpoint average of the two time
// levels and resolved by Picard iteration.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kdvhl/banded.hpp"
#include "kdvhl/error.hpp"
#include "kdvhl/grid.hpp"

namespace kdvhl {

using TimeFunction = std::function<double(double)>;
using ForcingFunction = std::function<double(double, double)>;  // F(x, t)

/// Dirichlet datum f together with its analytic derivative.
struct BoundaryData {
  TimeFunction f;
  TimeFunction fprime;

  static BoundaryData zero() {
    return {[](double) { return 0.0; }, [](double) { return 0.0; }};
  }
};

/// Cross-checks fprime against central differences of f at 64 probe times
/// in [0, T]. Returns the largest discrepancy relative to max |fprime|.
inline double boundary_derivative_mismatch(const BoundaryData& bd, double T) {
  require(static_cast<bool>(bd.f) && static_cast<bool>(bd.fprime),
          "BoundaryData: f and fprime must be set");
  constexpr int kProbes = 64;
  const double delta = 1e-5 * std::max(1.0, T);
  double scale = 0.0, worst = 0.0;
  for (int k = 0; k < kProbes; ++k) {
    const double t = T * (k + 0.5) / kProbes;
    const double fp = bd.fprime(t);
    const double fd = (bd.f(t + delta) - bd.f(t - delta)) / (2.0 * delta);
    if (!std::isfinite(fp) || !std::isfinite(fd)) return std::numeric_limits<double>::infinity();
    scale = std::max(scale, std::abs(fp));
    worst = std::max(worst, std::abs(fd - fp));
  }
  if (scale == 0.0) return worst == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return worst / scale;
}

inline void validate_boundary_data(const BoundaryData& bd, double T, double rel_tol = 1e-6) {
  const double m = boundary_derivative_mismatch(bd, T);
  if (!(m <= rel_tol)) {
    throw PreconditionError("BoundaryData: fprime disagrees with finite differences of f (relative " +
                            std::to_string(m) + ")");
  }
}

enum class RightBoundary { ClampedZero };

struct SolverConfig {
  double dt = 0.01;
  double T = 1.0;
  double theta = 0.5;
  int picard_max = 30;
  double picard_tol = 1e-12;
  RightBoundary right_bc = RightBoundary::ClampedZero;
  ForcingFunction forcing;  // empty: F = 0
  bool nonlinear = true;

  std::size_t steps() const {
    return static_cast<std::size_t>(std::llround(T / dt));
  }

  void validate() const {
    require(std::isfinite(dt) && dt > 0.0, "SolverConfig: dt must be > 0");
    require(std::isfinite(T) && T > 0.0, "SolverConfig: T must be > 0");
    require(dt <= T * (1.0 + 1e-12), "SolverConfig: dt must not exceed T");
    require(theta >= 0.5 && theta <= 1.0, "SolverConfig: theta must lie in [0.5, 1]");
    require(picard_max >= 1, "SolverConfig: picard_max must be >= 1");
    require(picard_tol > 0.0, "SolverConfig: picard_tol must be > 0");
    const double ratio = T / dt;
    require(std::abs(ratio - std::round(ratio)) <= 1e-8 * ratio,
            "SolverConfig: T must be an integer multiple of dt");
  }
};

struct Compatibility {
  bool ok = true;
  double mismatch = 0.0;
};

/// Corner condition u0(0) = f(0).
inline Compatibility check_compatibility(const Field& u0, const BoundaryData& bd,
                                         double tol = 1e-10) {
  const double m = std::abs(u0.values.front() - bd.f(u0.t));
  return {m <= tol, m};
}

struct StepResult {
  Field field;
  int picard_iterations = 0;
  double picard_increment = 0.0;
};

class Solver {
 public:
  Solver(Grid1D grid, SolverConfig cfg, BoundaryData bd)
      : grid_(grid), cfg_(std::move(cfg)), bd_(std::move(bd)) {
    cfg_.validate();
    require(grid_.size() >= 7, "Solver: grid too small");
    require(static_cast<bool>(bd_.f), "Solver: boundary datum f must be set");
    factor();
  }

  const Grid1D& grid() const noexcept { return grid_; }
  const SolverConfig& config() const noexcept { return cfg_; }
  const BoundaryData& boundary() const noexcept { return bd_; }

  /// One theta-step from state.t to state.t + dt.
  StepResult step(const Field& state) const {
    require(state.grid == grid_, "Solver::step: field lives on a different grid");
    const std::size_t n = grid_.size();
    const double h = grid_.spacing();
    const double dt = cfg_.dt;
    const double th = cfg_.theta;
    const double t0 = state.t;
    const double t1 = t0 + dt;
    const auto& u = state.values;

    std::vector<double> base(n, 0.0);
    deriv_into(u, h, 3, base);
    for (std::size_t i = 0; i < n; ++i) base[i] = u[i] - (1.0 - th) * dt * base[i];
    if (cfg_.forcing) {
      for (std::size_t i = 1; i + 2 < n; ++i) {
        const double x = grid_.node(i);
        base[i] += dt * (th * cfg_.forcing(x, t1) + (1.0 - th) * cfg_.forcing(x, t0));
      }
    }
    const double f1 = bd_.f(t1);
    // Column 0 was moved to the right-hand side when the matrix was built.
    for (std::size_t i = 1; i < 3; ++i) base[i] -= column0_[i] * f1;

    std::vector<double> next = u, rhs(n), sq(n);
    next[0] = f1;
    const double inv2h = 1.0 / (2.0 * h);
    int it = 0;
    double inc = 0.0;
    for (it = 1; it <= cfg_.picard_max; ++it) {
      rhs = base;
      if (cfg_.nonlinear) {
        for (std::size_t i = 0; i < n; ++i) {
          const double m = 0.5 * (u[i] + next[i]);
          sq[i] = m * m;
        }
        for (std::size_t i = 1; i + 2 < n; ++i) rhs[i] -= dt * (sq[i + 1] - sq[i - 1]) * inv2h;
      }
      rhs[0] = f1;
      rhs[n - 2] = 0.0;
      rhs[n - 1] = 0.0;
      lu_->solve_in_place(rhs);
      inc = 0.0;
      double scale = 1.0;
      for (std::size_t i = 0; i < n; ++i) {
        inc = std::max(inc, std::abs(rhs[i] - next[i]));
        scale = std::max(scale, std::abs(rhs[i]));
      }
      next.swap(rhs);
      if (!std::isfinite(inc)) throw SolverError("step: non-finite values at t = " + std::to_string(t1));
      if (!cfg_.nonlinear || inc <= cfg_.picard_tol * scale) break;
    }
    if (it > cfg_.picard_max) {
      throw SolverError("step: Picard iteration did not converge within " +
                        std::to_string(cfg_.picard_max) + " iterations at t = " +
                        std::to_string(t1) + " (increment " + std::to_string(inc) +
                        "); reduce dt");
    }
    Field out(grid_, std::move(next), t1);
    if (!out.finite()) throw SolverError("step: NaN/Inf detected at t = " + std::to_string(t1));
    return {std::move(out), std::min(it, cfg_.picard_max), inc};
  }

 private:
  void factor() {
    const std::size_t n = grid_.size();
    const double h = grid_.spacing();
    const double c = cfg_.theta * cfg_.dt / (h * h * h);
    BandedMatrix a(n, 2, 3);
    a(0, 0) = 1.0;
    column0_.assign(3, 0.0);
    // Node 1: one-sided stencil on nodes 0..4.
    a(1, 1) = 1.0;
    for (std::size_t j = 0; j < 5; ++j) {
      const double w = c * stencil::kD3Near[j];
      if (j == 0) column0_[1] += w;
      else a(1, j) += w;
    }
    for (std::size_t i = 2; i + 2 < n; ++i) {
      a(i, i) = 1.0;
      for (std::size_t j = 0; j < 5; ++j) {
        const double w = c * stencil::kD3Centered[j];
        const std::size_t col = i + j - 2;
        if (col == 0) column0_[i] += w;
        else if (col + 2 >= n) continue;  // clamped nodes hold zero
        else a(i, col) += w;
      }
    }
    // u(L) = 0 and u_x(L) = 0 via u_{n-1} = u_{n-2} = 0.
    a(n - 2, n - 2) = 1.0;
    a(n - 1, n - 1) = 1.0;
    lu_ = std::make_shared<const BandedLU>(std::move(a));
  }

  Grid1D grid_;
  SolverConfig cfg_;
  BoundaryData bd_;
  std::vector<double> column0_;
  std::shared_ptr<const BandedLU> lu_;
};

/// What an observer sees after each accepted step (and once at t = 0).
struct StepView {
  const Field& field;
  std::size_t step;
  const std::array<double, 4>& traces;
  double f;
  double fprime;
};

using StepObserver = std::function<void(const StepView&)>;

struct SolveOptions {
  /// Keep a snapshot every k steps (0: only the initial and final fields).
  std::size_t snapshot_every = 0;
  bool allow_incompatible = false;
  double compatibility_tol = 1e-10;
};

struct Trajectory {
  std::vector<Field> snapshots;
  TraceSeries traces;
  SolverConfig config;
  std::size_t steps_taken = 0;
  int max_picard_iterations = 0;
  std::optional<std::string> failure;
  Compatibility compatibility;

  bool ok() const noexcept { return !failure.has_value(); }
  const Field& final_field() const { return snapshots.back(); }
};

/// Advances u0 to cfg.T, invoking observers synchronously after every step.
/// Solver failures are reported through Trajectory::failure together with
/// everything computed up to the failing step.
inline Trajectory solve(const Field& u0, const SolverConfig& cfg, const BoundaryData& bd,
                        const std::vector<StepObserver>& observers = {},
                        const SolveOptions& opts = {}) {
  Trajectory traj;
  traj.config = cfg;
  traj.compatibility = check_compatibility(u0, bd, opts.compatibility_tol);
  if (!traj.compatibility.ok && !opts.allow_incompatible) {
    throw PreconditionError("solve: incompatible data, |u0(0) - f(0)| = " +
                            std::to_string(traj.compatibility.mismatch));
  }
  require(u0.finite(), "solve: initial field is not finite");
  const Solver solver(u0.grid, cfg, bd);
  const std::size_t steps = cfg.steps();
  const double h = u0.grid.spacing();
  const TimeFunction fprime = bd.fprime ? bd.fprime : TimeFunction([](double) { return 0.0; });

  auto record = [&](const Field& field, std::size_t k) {
    const auto tr = trace_derivs(field.values, h);
    const double fv = bd.f(field.t);
    const double fp = fprime(field.t);
    traj.traces.push(field.t, tr, fv, fp);
    const StepView view{field, k, tr, fv, fp};
    for (const auto& obs : observers) obs(view);
    const bool keep = k == 0 || k == steps || (opts.snapshot_every > 0 && k % opts.snapshot_every == 0);
    if (keep) traj.snapshots.push_back(field);
  };

  Field current = u0;
  record(current, 0);
  for (std::size_t k = 1; k <= steps; ++k) {
    try {
      StepResult r = solver.step(current);
      traj.max_picard_iterations = std::max(traj.max_picard_iterations, r.picard_iterations);
      current = std::move(r.field);
      // Pin the time grid to k * dt so traces stay exactly equispaced.
      current.t = static_cast<double>(k) * cfg.dt;
    } catch (const SolverError& e) {
      traj.failure = e.what();
      if (traj.snapshots.empty() || traj.snapshots.back().t != current.t) traj.snapshots.push_back(current);
      return traj;
    }
    traj.steps_taken = k;
    record(current, k);
  }
  return traj;
}

}  // namespace kdvhl
