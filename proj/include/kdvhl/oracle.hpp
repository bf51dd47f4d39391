#pragma once

// Independent references for the half-line solver:
//  * a whole-line (periodic) pseudospectral KdV solver, integrating-factor
//    RK4 in Fourier space with 2/3-rule dealiasing;
//  * extraction of a consistent (u0, f) half-line pair from its trajectory;
//  * manufactured solutions and the forcing that makes them exact.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <fftw3.h>

#include "kdvhl/error.hpp"
#include "kdvhl/grid.hpp"
#include "kdvhl/solver.hpp"

namespace kdvhl {

/// Uniform periodic grid x_j = j * P / m on [0, P), m a power of two.
class PeriodicGrid {
 public:
  PeriodicGrid(double period, std::size_t points) : period_(period), m_(points) {
    require(std::isfinite(period) && period > 0.0, "PeriodicGrid: period must be > 0");
    require(points >= 8 && (points & (points - 1)) == 0, "PeriodicGrid: m must be a power of two");
  }

  double period() const noexcept { return period_; }
  std::size_t size() const noexcept { return m_; }
  double spacing() const noexcept { return period_ / static_cast<double>(m_); }
  double node(std::size_t j) const noexcept { return spacing() * static_cast<double>(j); }
  std::size_t modes() const noexcept { return m_ / 2 + 1; }

  /// Wavenumber of the j-th r2c coefficient; the Nyquist mode maps to 0 so
  /// odd derivatives stay real.
  double wavenumber(std::size_t j) const noexcept {
    if (j == m_ / 2) return 0.0;
    return 2.0 * std::numbers::pi * static_cast<double>(j) / period_;
  }

 private:
  double period_;
  std::size_t m_;
};

namespace detail {

// The FFTW planner is not re-entrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

class RealFFT {
 public:
  explicit RealFFT(std::size_t m)
      : m_(m),
        real_(fftw_alloc_real(m)),
        spec_(fftw_alloc_complex(m / 2 + 1)) {
    std::lock_guard lock(fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(m), real_, spec_, FFTW_ESTIMATE);
    bwd_ = fftw_plan_dft_c2r_1d(static_cast<int>(m), spec_, real_, FFTW_ESTIMATE);
  }
  ~RealFFT() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  RealFFT(const RealFFT&) = delete;
  RealFFT& operator=(const RealFFT&) = delete;

  void forward(std::span<const double> in, std::vector<std::complex<double>>& out) {
    std::copy(in.begin(), in.end(), real_);
    fftw_execute(fwd_);
    out.resize(m_ / 2 + 1);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = {spec_[j][0], spec_[j][1]};
  }

  /// Normalized inverse: backward(forward(u)) == u.
  void backward(const std::vector<std::complex<double>>& in, std::span<double> out) {
    for (std::size_t j = 0; j < in.size(); ++j) {
      spec_[j][0] = in[j].real();
      spec_[j][1] = in[j].imag();
    }
    fftw_execute(bwd_);
    const double s = 1.0 / static_cast<double>(m_);
    for (std::size_t i = 0; i < m_; ++i) out[i] = real_[i] * s;
  }

 private:
  std::size_t m_;
  double* real_;
  fftw_complex* spec_;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

}  // namespace detail

struct WholeLineTrajectory {
  PeriodicGrid grid;
  double dt = 0.0;
  std::vector<double> times;
  std::vector<std::vector<double>> fields;
};

/// Largest |u| over the support guard zones (within P/8 of either end).
inline double periodic_edge_magnitude(const PeriodicGrid& grid, std::span<const double> u) {
  const double guard = grid.period() / 8.0;
  double worst = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double x = grid.node(j);
    if (x < guard || x > grid.period() - guard) worst = std::max(worst, std::abs(u[j]));
  }
  return worst;
}

/// Time step for which the explicit nonlinear part runs at CFL ~ 0.5.
inline double wholeline_suggested_dt(const PeriodicGrid& grid, std::span<const double> u0) {
  double umax = 0.0;
  for (double v : u0) umax = std::max(umax, std::abs(v));
  const double kmax = std::numbers::pi / grid.spacing();
  return umax > 0.0 ? 0.5 / (2.0 * umax * kmax) : grid.spacing();
}

/// Integrates u_t + u_xxx + (u^2)_x = 0 on the periodic grid, recording the
/// physical field every `record_every` steps (and at t = 0).
inline WholeLineTrajectory wholeline_solve(const PeriodicGrid& grid, std::span<const double> u0,
                                           double T, double dt, std::size_t record_every = 1) {
  require(u0.size() == grid.size(), "wholeline_solve: data length mismatch");
  require(dt > 0.0 && T > 0.0, "wholeline_solve: dt and T must be positive");
  require(record_every >= 1, "wholeline_solve: record_every must be >= 1");
  const double ratio = T / dt;
  require(std::abs(ratio - std::round(ratio)) <= 1e-8 * ratio,
          "wholeline_solve: T must be an integer multiple of dt");
  const auto steps = static_cast<std::size_t>(std::llround(ratio));
  const std::size_t m = grid.size(), nm = grid.modes();

  using cplx = std::complex<double>;
  const cplx I{0.0, 1.0};
  std::vector<cplx> e_half(nm), e_full(nm), g(nm);
  std::vector<bool> keep(nm);
  for (std::size_t j = 0; j < nm; ++j) {
    const double k = grid.wavenumber(j);
    e_half[j] = std::exp(I * (k * k * k * dt / 2.0));
    e_full[j] = e_half[j] * e_half[j];
    g[j] = -I * (k * dt);
    keep[j] = 3 * j < m;  // two-thirds rule
  }

  detail::RealFFT fft(m);
  std::vector<double> phys(m);
  auto nonlinear = [&](const std::vector<cplx>& v, std::vector<cplx>& out) {
    fft.backward(v, phys);
    for (double& x : phys) x = x * x;
    fft.forward(phys, out);
    for (std::size_t j = 0; j < nm; ++j) out[j] = keep[j] ? g[j] * out[j] : cplx{};
  };

  WholeLineTrajectory traj{grid, dt, {}, {}};
  std::vector<cplx> v, a, b, c, d, tmp(nm);
  fft.forward(u0, v);
  traj.times.push_back(0.0);
  traj.fields.emplace_back(u0.begin(), u0.end());
  for (std::size_t s = 1; s <= steps; ++s) {
    nonlinear(v, a);
    for (std::size_t j = 0; j < nm; ++j) tmp[j] = e_half[j] * (v[j] + 0.5 * a[j]);
    nonlinear(tmp, b);
    for (std::size_t j = 0; j < nm; ++j) tmp[j] = e_half[j] * v[j] + 0.5 * b[j];
    nonlinear(tmp, c);
    for (std::size_t j = 0; j < nm; ++j) tmp[j] = e_full[j] * v[j] + e_half[j] * c[j];
    nonlinear(tmp, d);
    for (std::size_t j = 0; j < nm; ++j) {
      v[j] = e_full[j] * v[j] + (e_full[j] * a[j] + 2.0 * e_half[j] * (b[j] + c[j]) + d[j]) / 6.0;
    }
    if (s % record_every == 0 || s == steps) {
      fft.backward(v, phys);
      for (double x : phys) {
        if (!std::isfinite(x)) {
          throw SolverError("wholeline_solve: non-finite values at t = " +
                            std::to_string(static_cast<double>(s) * dt));
        }
      }
      traj.times.push_back(static_cast<double>(s) * dt);
      traj.fields.push_back(phys);
    }
  }
  return traj;
}

/// Point values of the trigonometric interpolant of u (and derivatives).
class SpectralEvaluator {
 public:
  SpectralEvaluator(const PeriodicGrid& grid, std::span<const double> u) : grid_(grid) {
    detail::RealFFT fft(grid.size());
    fft.forward(u, coeffs_);
  }

  /// d^k u / dx^k at x (any real x; periodic).
  double eval(double x, int k = 0) const {
    const std::size_t m = grid_.size();
    double s = coeffs_[0].real() * (k == 0 ? 1.0 : 0.0);
    for (std::size_t j = 1; j < coeffs_.size(); ++j) {
      const double kj = 2.0 * std::numbers::pi * static_cast<double>(j) / grid_.period();
      const std::complex<double> phase = std::polar(1.0, kj * x);
      std::complex<double> dk = 1.0;
      for (int r = 0; r < k; ++r) dk *= std::complex<double>{0.0, kj};
      const double w = (j == m / 2) ? 1.0 : 2.0;  // conjugate pairs
      if (j == m / 2 && k % 2 == 1) continue;
      s += w * (coeffs_[j] * dk * phase).real();
    }
    return s / static_cast<double>(m);
  }

 private:
  PeriodicGrid grid_;
  std::vector<std::complex<double>> coeffs_;
};

/// Piecewise cubic Hermite interpolant through equispaced samples (t_k, y_k, y'_k).
class HermiteSeries {
 public:
  HermiteSeries(double t0, double dt, std::vector<double> y, std::vector<double> dy)
      : t0_(t0), dt_(dt), y_(std::move(y)), dy_(std::move(dy)) {
    require(y_.size() == dy_.size() && y_.size() >= 2, "HermiteSeries: need >= 2 samples");
    require(dt_ > 0.0, "HermiteSeries: dt must be > 0");
  }

  double value(double t) const { return eval(t, false); }
  double derivative(double t) const { return eval(t, true); }
  double t_end() const noexcept { return t0_ + dt_ * static_cast<double>(y_.size() - 1); }
  std::span<const double> samples() const noexcept { return y_; }
  std::span<const double> slopes() const noexcept { return dy_; }

 private:
  double eval(double t, bool deriv) const {
    const double tol = 1e-9 * dt_;
    require(t >= t0_ - tol && t <= t_end() + tol, "HermiteSeries: time outside sampled window");
    const double pos = std::clamp((t - t0_) / dt_, 0.0, static_cast<double>(y_.size() - 1));
    auto k = static_cast<std::size_t>(pos);
    if (k + 1 >= y_.size()) k = y_.size() - 2;
    const double s = pos - static_cast<double>(k);
    const double y0 = y_[k], y1 = y_[k + 1], m0 = dy_[k] * dt_, m1 = dy_[k + 1] * dt_;
    if (!deriv) {
      const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
      const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
      return h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1;
    }
    const double d00 = 6 * s * s - 6 * s, d10 = 3 * s * s - 4 * s + 1;
    const double d01 = -6 * s * s + 6 * s, d11 = 3 * s * s - 2 * s;
    return (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / dt_;
  }

  double t0_, dt_;
  std::vector<double> y_, dy_;
};

struct HalfLineData {
  Field u0;
  BoundaryData boundary;
  std::vector<double> times;
  std::vector<double> f;
  std::vector<double> fprime;
};

/// Whole-line field restricted to [x*, x* + L], sampled on the half-line grid.
inline Field restrict_to_halfline(const PeriodicGrid& pgrid, std::span<const double> u,
                                  double x_star, const Grid1D& grid, double t) {
  const SpectralEvaluator ev(pgrid, u);
  return Field::sample(grid, [&](double x) { return ev.eval(x_star + x); }, t);
}

/// Builds (u0, f) for the half-line problem on [0, L] from a whole-line
/// trajectory observed at x = x*. f' comes from the PDE,
/// f'(t) = -(u_xxx + 2 u u_x)(x*, t), evaluated spectrally.
inline HalfLineData extract_halfline_data(const WholeLineTrajectory& traj, double x_star,
                                          const Grid1D& grid) {
  const double P = traj.grid.period();
  require(x_star > 0.0 && x_star + grid.length() < P,
          "extract_halfline_data: window [x*, x*+L] must lie inside the period");
  require(traj.times.size() >= 2, "extract_halfline_data: trajectory has fewer than 2 samples");
  const double dt = traj.times[1] - traj.times[0];
  for (std::size_t k = 1; k < traj.times.size(); ++k) {
    require(std::abs(traj.times[k] - traj.times[k - 1] - dt) <= 1e-9 * dt,
            "extract_halfline_data: trajectory samples must be equispaced");
  }
  std::vector<double> f(traj.times.size()), fp(traj.times.size());
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const SpectralEvaluator ev(traj.grid, traj.fields[k]);
    const double u = ev.eval(x_star, 0);
    const double ux = ev.eval(x_star, 1);
    const double uxxx = ev.eval(x_star, 3);
    f[k] = u;
    fp[k] = -(uxxx + 2.0 * u * ux);
  }
  Field u0 = restrict_to_halfline(traj.grid, traj.fields.front(), x_star, grid, 0.0);
  // Both sample the same interpolant at the same point.
  f[0] = u0.values[0];
  auto series = std::make_shared<const HermiteSeries>(traj.times.front(), dt, f, fp);
  BoundaryData bd{[series](double t) { return series->value(t); },
                  [series](double t) { return series->derivative(t); }};
  return {std::move(u0), std::move(bd), traj.times, std::move(f), std::move(fp)};
}

/// Closed-form manufactured solution u_e with the derivatives the forcing needs.
struct ManufacturedSolution {
  std::string name;
  std::function<double(double, double)> u, ut, ux, uxxx;

  /// Largest relative disagreement of the supplied derivatives with central
  /// differences of u at deterministic probe points in [0, L] x [0, T].
  double derivative_mismatch(double L, double T) const {
    constexpr int kProbes = 7;
    double worst = 0.0;
    for (int a = 1; a <= kProbes; ++a) {
      for (int b = 1; b <= kProbes; ++b) {
        const double x = L * a / (kProbes + 1.0);
        const double t = T * b / (kProbes + 1.0);
        // Fourth-order difference quotients in x, second order in t.
        const double hx = 1e-2, ht = 1e-5;
        auto at = [&](double dx) { return u(x + dx, t); };
        const double fx = (-at(2 * hx) + 8 * at(hx) - 8 * at(-hx) + at(-2 * hx)) / (12 * hx);
        const double fxxx = (-at(3 * hx) + 8 * at(2 * hx) - 13 * at(hx) + 13 * at(-hx) -
                             8 * at(-2 * hx) + at(-3 * hx)) /
                            (8 * hx * hx * hx);
        const double ft = (u(x, t + ht) - u(x, t - ht)) / (2 * ht);
        auto rel = [](double approx, double exact) {
          return std::abs(approx - exact) / std::max(1.0, std::abs(exact));
        };
        worst = std::max({worst, rel(fx, ux(x, t)), rel(ft, ut(x, t)), rel(fxxx, uxxx(x, t))});
      }
    }
    return worst;
  }

  void validate(double L, double T) const {
    require(u && ut && ux && uxxx, "ManufacturedSolution: all callables must be set");
    const double m = derivative_mismatch(L, T);
    if (!(m <= 1e-6)) {
      throw PreconditionError("ManufacturedSolution '" + name +
                              "': derivatives disagree with finite differences (" +
                              std::to_string(m) + ")");
    }
  }

  BoundaryData boundary() const {
    auto uu = u;
    auto tt = ut;
    return {[uu](double t) { return uu(0.0, t); }, [tt](double t) { return tt(0.0, t); }};
  }

  static ManufacturedSolution zero() {
    auto z = [](double, double) { return 0.0; };
    return {"zero", z, z, z, z};
  }

  /// u_e = x (time independent); forcing 2x.
  static ManufacturedSolution linear() {
    return {"linear", [](double x, double) { return x; }, [](double, double) { return 0.0; },
            [](double, double) { return 1.0; }, [](double, double) { return 0.0; }};
  }

  /// u_e = e^{-t} / (1 + (x - 3)^2).
  static ManufacturedSolution rational() {
    auto r = [](double y) { return 1.0 / (1.0 + y * y); };
    return {"rational",
            [r](double x, double t) { return std::exp(-t) * r(x - 3.0); },
            [r](double x, double t) { return -std::exp(-t) * r(x - 3.0); },
            [](double x, double t) {
              const double y = x - 3.0, q = 1.0 + y * y;
              return std::exp(-t) * (-2.0 * y / (q * q));
            },
            [](double x, double t) {
              const double y = x - 3.0, q = 1.0 + y * y;
              return std::exp(-t) * 24.0 * y * (1.0 - y * y) / (q * q * q * q);
            }};
  }

  /// u_e = a (1 + sin(omega t)/2) exp(-((x - x_c)/w)^2); decays fast enough
  /// that the clamped right boundary is exact to round-off.
  static ManufacturedSolution gaussian(double a = 0.5, double x_c = 2.0, double w = 1.5,
                                       double omega = 2.0) {
    auto amp = [=](double t) { return a * (1.0 + 0.5 * std::sin(omega * t)); };
    auto damp = [=](double t) { return a * 0.5 * omega * std::cos(omega * t); };
    auto z = [=](double x) { return (x - x_c) / w; };
    return {"gaussian",
            [=](double x, double t) { return amp(t) * std::exp(-z(x) * z(x)); },
            [=](double x, double t) { return damp(t) * std::exp(-z(x) * z(x)); },
            [=](double x, double t) {
              const double s = z(x);
              return amp(t) * (-2.0 * s / w) * std::exp(-s * s);
            },
            [=](double x, double t) {
              const double s = z(x);
              return amp(t) * (-8.0 * s * s * s + 12.0 * s) / (w * w * w) * std::exp(-s * s);
            }};
  }
};

/// F = u_t + u_xxx + 2 u u_x for the manufactured solution.
inline ForcingFunction mms_forcing(const ManufacturedSolution& ms) {
  return [ms](double x, double t) {
    const double u = ms.u(x, t);
    return ms.ut(x, t) + ms.uxxx(x, t) + 2.0 * u * ms.ux(x, t);
  };
}

}  // namespace kdvhl
