#pragma once

// Smooth cutoff machinery: the transition function eta, the profile rho and
// the two-parameter family chi_{eps,b} together with the moving weights
// chi_{eps,b}(x + v t - x0) used by every localized energy functional.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "kdvhl/error.hpp"

namespace kdvhl {

namespace detail {

// psi(theta) = exp(-1/theta) for theta > 0, else 0.
inline double psi(double theta) noexcept {
  return theta > 0.0 ? std::exp(-1.0 / theta) : 0.0;
}

}  // namespace detail

/// C-infinity transition: 0 for theta <= 0, 1 for theta >= 1, and
/// eta(theta) + eta(1 - theta) == 1 by construction.
inline double eta(double theta) noexcept {
  if (theta <= 0.0) return 0.0;
  if (theta >= 1.0) return 1.0;
  const double a = detail::psi(theta);
  const double c = detail::psi(1.0 - theta);
  return a / (a + c);
}

/// rho(x) = 1 + eta((x + 2) / 3); equals 1 for x <= -2 and 2 for x >= 1.
inline double rho(double x) noexcept { return 1.0 + eta((x + 2.0) / 3.0); }

/// exp(1 - 1/(1 - s^2)) on |s| < 1, zero elsewhere; peak value 1 at s = 0.
inline double standard_bump(double s) noexcept {
  const double q = 1.0 - s * s;
  if (q <= 0.0) return 0.0;
  const double inv = 1.0 / q;
  if (inv > 746.0) return 0.0;
  return std::exp(1.0 - inv);
}

/// The cutoff chi_{eps,b}: zero on (-inf, eps], one on [b, inf), with
/// chi' proportional to the bump exp(-1/((s - eps)(b - s))) on (eps, b).
///
/// The normalization of the bump and a table of its cumulative integral are
/// computed once at construction; the object is immutable afterwards.
class CutoffSpec {
 public:
  static constexpr int kMaxOrder = 3;
  static constexpr std::size_t kPanels = 32;
  static constexpr double kQuadratureTol = 1e-12;

  CutoffSpec(double epsilon, double b) : eps_(epsilon), b_(b) {
    require(std::isfinite(epsilon) && epsilon > 0.0, "CutoffSpec: epsilon must be > 0");
    // b >= 5 eps, allowing one ulp-scale slack so that re-parameterizations
    // such as (eps/5, eps) are accepted.
    require(std::isfinite(b) && b >= 5.0 * epsilon * (1.0 - 1e-12),
            "CutoffSpec: b must satisfy b >= 5*epsilon");
    build_table();
  }

  double epsilon() const noexcept { return eps_; }
  double b() const noexcept { return b_; }
  /// Integral of the unnormalized bump over (eps, b).
  double normalization() const noexcept { return norm_; }

  /// Unnormalized bump and its first two derivatives at s.
  std::array<double, 3> bump_jet(double s) const noexcept {
    if (s <= eps_ || s >= b_) return {0.0, 0.0, 0.0};
    const double p = (s - eps_) * (b_ - s);
    const double inv = 1.0 / p;
    // exp underflows to zero well before the polynomial factors overflow.
    if (inv > 745.0) return {0.0, 0.0, 0.0};
    const double beta = std::exp(-inv);
    const double dp = b_ + eps_ - 2.0 * s;
    const double g1 = dp * inv * inv;                              // (-1/p)'
    const double g2 = (-2.0 * p - 2.0 * dp * dp) * inv * inv * inv;  // (-1/p)''
    return {beta, beta * g1, beta * (g2 + g1 * g1)};
  }

  double bump(double s) const noexcept { return bump_jet(s)[0]; }

  /// k-th derivative of chi at x, k in {0,1,2,3}.
  double chi(double x, int order) const {
    if (order < 0 || order > kMaxOrder) {
      throw DomainError("chi: unsupported derivative order " + std::to_string(order));
    }
    if (order == 0) return value(x);
    const auto jet = bump_jet(x);
    return jet[static_cast<std::size_t>(order - 1)] / norm_;
  }

  /// Largest value of chi' (attained at the bump's peak, the midpoint).
  double max_derivative() const noexcept { return bump(0.5 * (eps_ + b_)) / norm_; }

 private:
  double value(double x) const noexcept {
    if (x <= eps_) return 0.0;
    if (x >= b_) return 1.0;
    const double width = (b_ - eps_) / static_cast<double>(kPanels);
    auto k = static_cast<std::size_t>((x - eps_) / width);
    k = std::min(k, kPanels - 1);
    const double left = eps_ + width * static_cast<double>(k);
    const auto f = [this](double s) { return bump(s); };
    double partial = 0.0;
    if (x > left) partial = boost::math::quadrature::gauss<double, 10>::integrate(f, left, x);
    return std::clamp((cumulative_[k] + partial) / norm_, 0.0, 1.0);
  }

  void build_table() {
    using boost::math::quadrature::gauss_kronrod;
    const auto f = [this](double s) { return bump(s); };
    const double width = (b_ - eps_) / static_cast<double>(kPanels);
    cumulative_.assign(kPanels + 1, 0.0);
    for (std::size_t k = 0; k < kPanels; ++k) {
      const double a = eps_ + width * static_cast<double>(k);
      const double c = (k + 1 == kPanels) ? b_ : a + width;
      double err = 0.0;
      const double piece = gauss_kronrod<double, 31>::integrate(f, a, c, 4, 1e-13, &err);
      cumulative_[k + 1] = cumulative_[k] + piece;
    }
    norm_ = cumulative_.back();
    if (!(norm_ > 0.0) || !std::isfinite(norm_)) {
      throw PreconditionError("CutoffSpec: bump normalization underflowed; (b - eps) too small");
    }
  }

  double eps_;
  double b_;
  double norm_ = 0.0;
  std::vector<double> cumulative_;
};

/// Parameters of the moving weight chi_{eps,b}(x + v t - x0).
struct WeightSpec {
  CutoffSpec cutoff;
  double v = 0.0;
  double x0 = 1.0;

  WeightSpec(CutoffSpec c, double speed, double reference)
      : cutoff(std::move(c)), v(speed), x0(reference) {
    require(std::isfinite(v) && v >= 0.0, "WeightSpec: v must be >= 0");
    require(std::isfinite(x0) && x0 > 0.0, "WeightSpec: x0 must be > 0");
  }

  double argument(double x, double t) const noexcept { return x + v * t - x0; }
};

inline double chi(const CutoffSpec& spec, double x, int order) { return spec.chi(x, order); }

inline double moving_weight(const WeightSpec& spec, double x, double t, int order) {
  require(t >= 0.0, "moving_weight: t must be >= 0");
  return spec.cutoff.chi(spec.argument(x, t), order);
}

/// Moving weight sampled on the nodes x_i = i*h, i < out.size().
inline void moving_weight_nodes(const WeightSpec& spec, double h, double t, int order,
                                std::span<double> out) {
  require(t >= 0.0, "moving_weight: t must be >= 0");
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = spec.cutoff.chi(spec.argument(h * static_cast<double>(i), t), order);
  }
}

/// The auxiliary cutoffs chi_{eps/5, eps} and chi_{eps/3, b+eps} used when
/// controlling cubic terms; obtained by re-parameterizing the base cutoff.
inline CutoffSpec inner_cutoff(const CutoffSpec& c) { return {c.epsilon() / 5.0, c.epsilon()}; }
inline CutoffSpec widened_cutoff(const CutoffSpec& c) {
  return {c.epsilon() / 3.0, c.b() + c.epsilon()};
}

}  // namespace kdvhl
