#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "kdvhl/weights.hpp"

using namespace kdvhl;
using Catch::Approx;

namespace {

std::vector<double> samples(double a, double b, int n) {
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = a + (b - a) * i / (n - 1.0);
  return x;
}

}  // namespace

TEST_CASE("eta transition values", "[weights]") {
  CHECK(eta(-0.3) == 0.0);
  CHECK(eta(0.0) == 0.0);
  CHECK(eta(1.0) == 1.0);
  CHECK(eta(2.5) == 1.0);
  CHECK(eta(0.5) == Approx(0.5).margin(1e-15));
}

TEST_CASE("eta symmetry and monotonicity", "[weights]") {
  double prev = -1.0;
  for (double th : samples(-0.5, 1.5, 1000)) {
    CHECK(std::abs(eta(th) + eta(1.0 - th) - 1.0) <= 1e-12);
    CHECK(eta(th) >= prev);
    prev = eta(th);
  }
  // Near the ends eta is within rounding of 0 or 1, so strictness is checked inside.
  for (double th : samples(0.1, 0.9, 81)) CHECK(eta(th + 1e-3) > eta(th));
}

TEST_CASE("rho values", "[weights]") {
  CHECK(rho(-5.0) == 1.0);
  CHECK(rho(-2.0) == 1.0);
  CHECK(rho(2.0) == 2.0);
  CHECK(rho(1.0) == 2.0);
  CHECK(rho(-0.5) == Approx(1.5).margin(1e-15));
}

TEST_CASE("cutoff piecewise values", "[weights]") {
  const CutoffSpec c(0.1, 0.5);
  CHECK(c.chi(0.05, 0) == 0.0);
  CHECK(c.chi(0.1, 0) == 0.0);
  CHECK(c.chi(-3.0, 0) == 0.0);
  CHECK(c.chi(0.7, 0) == 1.0);
  CHECK(c.chi(0.5, 0) == Approx(1.0).margin(1e-12));
  CHECK(c.chi(0.3, 0) == Approx(0.5).margin(1e-12));  // symmetric bump
  CHECK(c.chi(0.3, 1) > 0.0);
  CHECK_THROWS_AS(c.chi(0.3, 4), DomainError);
  CHECK_THROWS_AS(c.chi(0.3, -1), DomainError);
}

TEST_CASE("cutoff bounds, monotonicity and derivative support", "[weights]") {
  const CutoffSpec c(0.1, 0.5);
  double prev = 0.0;
  for (double x : samples(-1.0, 2.0, 1000)) {
    const double v = c.chi(x, 0);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v >= prev);
    prev = v;
    CHECK(c.chi(x, 1) >= 0.0);
    if (x <= 0.1 || x >= 0.5) {
      for (int k = 1; k <= 3; ++k) CHECK(c.chi(x, k) == 0.0);
    }
  }
}

TEST_CASE("cutoff derivative integrates to one", "[weights]") {
  const CutoffSpec c(0.1, 0.5);
  // Composite Simpson on 10^3 panels; the integrand is C-infinity.
  const int n = 1000;
  const double a = 0.1, b = 0.5, h = (b - a) / n;
  double s = c.chi(a, 1) + c.chi(b, 1);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * c.chi(a + i * h, 1);
  CHECK(std::abs(s * h / 3.0 - 1.0) <= 1e-10);
  CHECK(std::abs(c.chi(b, 0) - c.chi(a, 0) - 1.0) <= 1e-12);
}

TEST_CASE("cutoff derivatives agree with central differences at second order", "[weights]") {
  const CutoffSpec c(0.25, 1.25);
  for (int k = 1; k <= 3; ++k) {
    std::vector<double> errs;
    for (double h : {1e-2, 5e-3, 2.5e-3}) {
      double e = 0.0;
      for (double x : samples(0.35, 1.15, 41)) {
        const double fd = (c.chi(x + h, k - 1) - c.chi(x - h, k - 1)) / (2.0 * h);
        e = std::max(e, std::abs(fd - c.chi(x, k)));
      }
      errs.push_back(e);
    }
    for (std::size_t i = 0; i + 1 < errs.size(); ++i) {
      INFO("order " << k);
      CHECK(std::log2(errs[i] / errs[i + 1]) >= 1.9);
    }
  }
}

TEST_CASE("cutoff construction validates parameters", "[weights]") {
  CHECK_THROWS_AS(CutoffSpec(0.0, 1.0), PreconditionError);
  CHECK_THROWS_AS(CutoffSpec(0.3, 1.0), PreconditionError);  // b < 5 eps
  CHECK_NOTHROW(CutoffSpec(0.2, 1.0));
}

TEST_CASE("auxiliary cutoffs are reparameterizations", "[weights]") {
  const CutoffSpec c(0.25, 1.25);
  const CutoffSpec inner = inner_cutoff(c);
  const CutoffSpec wide = widened_cutoff(c);
  CHECK(inner.epsilon() == Approx(0.05));
  CHECK(inner.b() == Approx(0.25));
  CHECK(wide.epsilon() == Approx(0.25 / 3.0));
  CHECK(wide.b() == Approx(1.5));
  for (double x : samples(-0.5, 2.0, 1000)) {
    if (c.chi(x, 1) > 0.0 && x >= c.epsilon()) CHECK(inner.chi(x, 0) == 1.0);
  }
}

TEST_CASE("moving weight shifts the cutoff argument", "[weights]") {
  const WeightSpec still(CutoffSpec(0.25, 1.25), 0.0, 3.0);
  CHECK(moving_weight(still, 3.0 + 1.25 + 1.0, 7.0, 0) == 1.0);
  const WeightSpec moving(CutoffSpec(0.25, 1.25), 2.0, 3.0);
  CHECK(moving_weight(moving, 0.0, 1.0, 0) == 0.0);  // argument -1 <= eps
  const WeightSpec unit(CutoffSpec(0.25, 1.25), 1.0, 3.0);
  const double t = 3.0 + 0.5 * (0.25 + 1.25);
  const double w = moving_weight(unit, 0.0, t, 0);
  CHECK(w > 0.0);
  CHECK(w < 1.0);
  CHECK(moving_weight(unit, 0.0, t, 2) == Approx(unit.cutoff.chi(0.75, 2)));
}

TEST_CASE("moving weight on nodes matches pointwise evaluation", "[weights]") {
  const WeightSpec ws(CutoffSpec(0.25, 1.25), 0.5, 4.0);
  const double h = 0.01;
  std::vector<double> w(800);
  for (int order = 0; order <= 3; ++order) {
    moving_weight_nodes(ws, h, 1.3, order, w);
    for (std::size_t i = 0; i < w.size(); i += 7) {
      CHECK(w[i] == Approx(moving_weight(ws, h * static_cast<double>(i), 1.3, order)).margin(1e-12));
    }
  }
}
