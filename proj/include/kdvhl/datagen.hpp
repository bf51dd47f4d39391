#pragma once

// Initial and boundary data: one-sided kinks that are rough left of x0 but
// smooth on (x0, inf), KdV solitons, and smooth boundary pulses.

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>

#include "kdvhl/error.hpp"
#include "kdvhl/grid.hpp"
#include "kdvhl/solver.hpp"
#include "kdvhl/weights.hpp"

namespace kdvhl {

/// u0(x) = base(x) + a (x - x1)_+^m envelope(x).
///
/// The envelope is the standard bump rescaled to (env_left, env_right); the
/// base is an optional Gaussian a_b exp(-((x - c_b)/w_b)^2).
struct KinkSpec {
  int m = 1;
  double x0 = 4.0;
  double x1 = 2.0;
  double amplitude = 0.5;
  double env_left = 0.2;
  double env_right = 3.8;
  double base_amplitude = 0.0;
  double base_center = 8.0;
  double base_width = 1.0;

  /// Geometry x1 = x0/2 with envelope support (x0/20, 19x0/20). A wide envelope
  /// keeps its own curvature small next to the kink.
  static KinkSpec with_default_geometry(int m, double x0, double amplitude) {
    KinkSpec s;
    s.m = m;
    s.x0 = x0;
    s.x1 = 0.5 * x0;
    s.amplitude = amplitude;
    s.env_left = 0.05 * x0;
    s.env_right = 0.95 * x0;
    return s;
  }

  void validate() const {
    require(m >= 1, "KinkSpec: m must be >= 1");
    require(x0 > 0.0, "KinkSpec: x0 must be > 0");
    require(x1 > 0.0 && x1 < x0, "KinkSpec: need 0 < x1 < x0");
    require(env_left > 0.0 && env_left < x1 && x1 < env_right && env_right <= x0,
            "KinkSpec: envelope support must satisfy 0 < left < x1 < right <= x0");
    require(std::isfinite(amplitude), "KinkSpec: amplitude must be finite");
    require(base_width > 0.0, "KinkSpec: base width must be > 0");
  }

  double envelope(double x) const noexcept {
    const double mid = 0.5 * (env_left + env_right);
    const double half = 0.5 * (env_right - env_left);
    return standard_bump((x - mid) / half);
  }

  double base(double x) const noexcept {
    if (base_amplitude == 0.0) return 0.0;
    const double z = (x - base_center) / base_width;
    return base_amplitude * std::exp(-z * z);
  }

  double operator()(double x) const noexcept {
    const double d = x - x1;
    const double kink = d > 0.0 ? std::pow(d, m) : 0.0;
    return base(x) + amplitude * kink * envelope(x);
  }
};

struct GeneratedField {
  Field field;
  bool warning = false;
  std::string note;
};

inline GeneratedField kink_data(const KinkSpec& spec, const Grid1D& grid) {
  spec.validate();
  GeneratedField out{Field::sample(grid, [&](double x) { return spec(x); })};
  const double support = spec.env_right - spec.env_left;
  if (support / grid.spacing() < 16.0) {
    out.warning = true;
    out.note = "envelope resolved by fewer than 16 grid points";
  }
  return out;
}

/// (3c/2) sech^2((sqrt(c)/2)(x - x_c - c t)), the travelling wave of
/// u_t + u_xxx + 2 u u_x = 0.
struct Soliton {
  double c = 1.0;
  double x_c = 0.0;

  double operator()(double x, double t = 0.0) const noexcept {
    const double s = 1.0 / std::cosh(0.5 * std::sqrt(c) * (x - x_c - c * t));
    return 1.5 * c * s * s;
  }
  double dt(double x, double t) const noexcept { return -c * dx(x, t); }
  double dx(double x, double t) const noexcept {
    const double k = 0.5 * std::sqrt(c);
    const double z = k * (x - x_c - c * t);
    const double s = 1.0 / std::cosh(z);
    return -3.0 * c * k * s * s * std::tanh(z);
  }
  /// Boundary data f(t) = u(0, t), f'(t) = u_t(0, t).
  BoundaryData boundary() const {
    const Soliton self = *this;
    return {[self](double t) { return self(0.0, t); }, [self](double t) { return self.dt(0.0, t); }};
  }
};

inline GeneratedField soliton_data(double c, double x_c, const Grid1D& grid) {
  require(c > 0.0, "soliton_data: speed must be > 0");
  const Soliton s{c, x_c};
  GeneratedField out{Field::sample(grid, [&](double x) { return s(x); })};
  const double tail = std::max(std::abs(s(0.0)), std::abs(s(grid.length())));
  if (tail >= 1e-10) {
    out.warning = true;
    out.note = "soliton tails exceed 1e-10 at the domain ends";
  }
  return out;
}

enum class PulseKind { Zero, GaussianPulse, RampedCosine };

inline PulseKind parse_pulse_kind(std::string_view s) {
  if (s == "zero") return PulseKind::Zero;
  if (s == "gaussian-pulse") return PulseKind::GaussianPulse;
  if (s == "ramped-cosine") return PulseKind::RampedCosine;
  throw ConfigError("unknown boundary pulse kind '" + std::string(s) + "'");
}

struct PulseParams {
  double amplitude = 1.0;
  double center = 1.0;  // t_c for the Gaussian pulse
  double width = 0.5;   // w for the Gaussian pulse
  double omega = 1.0;   // angular frequency for the ramped cosine
};

/// gaussian-pulse: f = A t^2 exp(-(t - t_c)^2 / w^2);
/// ramped-cosine: f = A (1 - cos(omega t)). Both vanish with f' at t = 0.
inline BoundaryData boundary_pulse(PulseKind kind, const PulseParams& p = {}) {
  require(std::isfinite(p.amplitude) && std::isfinite(p.center) && std::isfinite(p.omega),
          "boundary_pulse: parameters must be finite");
  switch (kind) {
    case PulseKind::Zero:
      return BoundaryData::zero();
    case PulseKind::GaussianPulse: {
      require(p.width > 0.0, "boundary_pulse: width must be > 0");
      const double a = p.amplitude, tc = p.center, w2 = p.width * p.width;
      return {[=](double t) { return a * t * t * std::exp(-(t - tc) * (t - tc) / w2); },
              [=](double t) {
                const double g = std::exp(-(t - tc) * (t - tc) / w2);
                return a * g * (2.0 * t - 2.0 * t * t * (t - tc) / w2);
              }};
    }
    case PulseKind::RampedCosine: {
      const double a = p.amplitude, om = p.omega;
      return {[=](double t) { return a * (1.0 - std::cos(om * t)); },
              [=](double t) { return a * om * std::sin(om * t); }};
    }
  }
  throw DomainError("boundary_pulse: unknown kind");
}

}  // namespace kdvhl
