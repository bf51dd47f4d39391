#pragma once

// Uniform mesh on the truncated half-line [0, L], finite-difference
// derivatives of order 1..3, boundary traces and trapezoidal quadrature.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "kdvhl/error.hpp"
#include "kdvhl/weights.hpp"

namespace kdvhl {

class Grid1D {
 public:
  static constexpr std::size_t kMinPoints = 16;

  Grid1D(double length, std::size_t points) : length_(length), n_(points) {
    require(std::isfinite(length) && length > 0.0, "Grid1D: L must be > 0");
    require(points >= kMinPoints, "Grid1D: n must be >= 16");
    h_ = length_ / static_cast<double>(n_ - 1);
  }

  double length() const noexcept { return length_; }
  std::size_t size() const noexcept { return n_; }
  double spacing() const noexcept { return h_; }
  double node(std::size_t i) const noexcept { return h_ * static_cast<double>(i); }

  /// The grid with half the spacing on the same interval.
  Grid1D refined() const { return {length_, 2 * (n_ - 1) + 1}; }

  /// Index of the node closest to x, clamped to the grid.
  std::size_t nearest(double x) const noexcept {
    if (x <= 0.0) return 0;
    const auto i = static_cast<std::size_t>(std::lround(x / h_));
    return i >= n_ ? n_ - 1 : i;
  }

  friend bool operator==(const Grid1D&, const Grid1D&) = default;

 private:
  double length_;
  std::size_t n_;
  double h_;
};

/// Samples of u(., t) on a grid.
struct Field {
  Grid1D grid;
  std::vector<double> values;
  double t = 0.0;

  explicit Field(Grid1D g, double time = 0.0) : grid(g), values(g.size(), 0.0), t(time) {}
  Field(Grid1D g, std::vector<double> v, double time) : grid(g), values(std::move(v)), t(time) {
    require(values.size() == grid.size(), "Field: values length must equal grid size");
  }

  template <class Fn>
  static Field sample(Grid1D g, Fn&& fn, double time = 0.0) {
    Field out(g, time);
    for (std::size_t i = 0; i < g.size(); ++i) out.values[i] = fn(g.node(i));
    return out;
  }

  bool finite() const noexcept {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

/// Time series of boundary traces d_k(t) = d^k u / dx^k (0, t) together with
/// the boundary datum f and its derivative.
struct TraceSeries {
  std::vector<double> times;
  std::vector<double> d0, d1, d2, d3;
  std::vector<double> f, fprime;

  std::size_t size() const noexcept { return times.size(); }

  void push(double t, const std::array<double, 4>& d, double fv, double fp) {
    require(times.empty() || t > times.back(), "TraceSeries: times must increase");
    times.push_back(t);
    d0.push_back(d[0]);
    d1.push_back(d[1]);
    d2.push_back(d[2]);
    d3.push_back(d[3]);
    f.push_back(fv);
    fprime.push_back(fp);
  }

  const std::vector<double>& order(int k) const {
    switch (k) {
      case 0: return d0;
      case 1: return d1;
      case 2: return d2;
      case 3: return d3;
      default: throw DomainError("TraceSeries: trace order must be 0..3");
    }
  }
};

namespace stencil {

// One-sided second-order boundary rows (node 0 looking right).
inline constexpr std::array<double, 3> kD1Edge{-1.5, 2.0, -0.5};
inline constexpr std::array<double, 4> kD2Edge{2.0, -5.0, 4.0, -1.0};
inline constexpr std::array<double, 5> kD3Edge{-2.5, 9.0, -12.0, 7.0, -1.5};
// Third derivative at node 1 using nodes 0..4.
inline constexpr std::array<double, 5> kD3Near{-1.5, 5.0, -6.0, 3.0, -0.5};
// Centered third derivative on nodes i-2..i+2.
inline constexpr std::array<double, 5> kD3Centered{-0.5, 1.0, 0.0, -1.0, 0.5};

}  // namespace stencil

/// out = d^k u / dx^k on a uniform grid with spacing h (k in 1..3).
///
/// Interior: second-order centered stencils. The first/last nodes (and, for
/// k = 3, the second/second-to-last) use one-sided second-order stencils;
/// odd orders flip sign when mirrored to the right end.
inline void deriv_into(std::span<const double> u, double h, int k, std::span<double> out) {
  const std::size_t n = u.size();
  if (k < 1 || k > 3) throw DomainError("deriv: order must be 1, 2 or 3");
  require(n >= 7, "deriv: grid must have at least 7 points");
  require(out.size() == n, "deriv: output length mismatch");

  auto left = [&](std::size_t i, auto const& w) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * u[i + j];
    return s;
  };
  auto right = [&](std::size_t i, auto const& w) {
    double s = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * u[i - j];
    return s;
  };

  switch (k) {
    case 1: {
      const double c = 1.0 / (2.0 * h);
      for (std::size_t i = 1; i + 1 < n; ++i) out[i] = (u[i + 1] - u[i - 1]) * c;
      out[0] = left(0, stencil::kD1Edge) / h;
      out[n - 1] = -right(n - 1, stencil::kD1Edge) / h;
      break;
    }
    case 2: {
      const double c = 1.0 / (h * h);
      for (std::size_t i = 1; i + 1 < n; ++i) out[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * c;
      out[0] = left(0, stencil::kD2Edge) * c;
      out[n - 1] = right(n - 1, stencil::kD2Edge) * c;
      break;
    }
    case 3: {
      const double c = 1.0 / (h * h * h);
      for (std::size_t i = 2; i + 2 < n; ++i) {
        out[i] = (-0.5 * u[i - 2] + u[i - 1] - u[i + 1] + 0.5 * u[i + 2]) * c;
      }
      out[0] = left(0, stencil::kD3Edge) * c;
      out[1] = left(0, stencil::kD3Near) * c;
      out[n - 2] = -right(n - 1, stencil::kD3Near) * c;
      out[n - 1] = -right(n - 1, stencil::kD3Edge) * c;
      break;
    }
  }
}

inline std::vector<double> deriv(std::span<const double> u, double h, int k) {
  std::vector<double> out(u.size());
  deriv_into(u, h, k, out);
  return out;
}

inline Field deriv(const Field& field, int k) {
  Field out(field.grid, field.t);
  deriv_into(field.values, field.grid.spacing(), k, out.values);
  return out;
}

/// (u, u_x, u_xx, u_xxx) at x = 0 from one-sided second-order stencils.
inline std::array<double, 4> trace_derivs(std::span<const double> u, double h) {
  require(u.size() >= 7, "trace_derivs: grid must have at least 7 points");
  std::array<double, 4> d{u[0], 0.0, 0.0, 0.0};
  for (std::size_t j = 0; j < 3; ++j) d[1] += stencil::kD1Edge[j] * u[j];
  for (std::size_t j = 0; j < 4; ++j) d[2] += stencil::kD2Edge[j] * u[j];
  for (std::size_t j = 0; j < 5; ++j) d[3] += stencil::kD3Edge[j] * u[j];
  d[1] /= h;
  d[2] /= h * h;
  d[3] /= h * h * h;
  return d;
}

inline std::array<double, 4> trace_derivs(const Field& field) {
  return trace_derivs(field.values, field.grid.spacing());
}

struct QuadratureResult {
  double value = 0.0;
  bool empty_window = false;
};

/// Inclusive node-index window [first, last].
struct IndexWindow {
  std::size_t first = 0;
  std::size_t last = 0;
};

/// Composite trapezoid rule over the window (default: every node).
inline QuadratureResult integrate(std::span<const double> values, double h,
                                  std::optional<IndexWindow> window = std::nullopt) {
  if (values.empty()) return {0.0, true};
  const IndexWindow w = window.value_or(IndexWindow{0, values.size() - 1});
  require(w.last < values.size(), "integrate: window exceeds grid");
  if (w.last <= w.first) return {0.0, true};
  double s = 0.5 * (values[w.first] + values[w.last]);
  for (std::size_t i = w.first + 1; i < w.last; ++i) s += values[i];
  return {s * h, false};
}

/// Trapezoid rule for samples on a non-uniform abscissa.
inline double integrate_samples(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "integrate_samples: length mismatch");
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

/// Integral of (d^k u)^2 (x, t) * chi^{(worder)}(x + v t - x0) over the grid.
inline double weighted_l2(const Field& field, int k, const WeightSpec& wspec, int worder) {
  if (k < 0 || k > 3) throw DomainError("weighted_l2: derivative order must be 0..3");
  const double h = field.grid.spacing();
  std::vector<double> d = k == 0 ? field.values : deriv(field.values, h, k);
  std::vector<double> w(d.size());
  moving_weight_nodes(wspec, h, field.t, worder, w);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = d[i] * d[i] * w[i];
  return integrate(d, h).value;
}

}  // namespace kdvhl
