#pragma once

// General banded matrix with kl sub- and ku super-diagonals, factored by
// Gaussian elimination with partial pivoting (the scheme of LAPACK's gbtrf:
// row interchanges widen the upper band to ku + kl).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kdvhl/error.hpp"

namespace kdvhl {

class BandedMatrix {
 public:
  BandedMatrix(std::size_t n, std::size_t kl, std::size_t ku)
      : n_(n), kl_(kl), ku_(ku), width_(2 * kl + ku + 1), data_(n * width_, 0.0) {}

  std::size_t size() const noexcept { return n_; }
  std::size_t lower() const noexcept { return kl_; }
  std::size_t upper() const noexcept { return ku_; }

  bool in_band(std::size_t i, std::size_t j) const noexcept {
    return j + kl_ >= i && j <= i + ku_ + kl_ && i < n_ && j < n_;
  }

  double& operator()(std::size_t i, std::size_t j) {
    require(in_band(i, j), "BandedMatrix: entry outside band");
    return data_[i * width_ + (j + kl_ - i)];
  }
  double operator()(std::size_t i, std::size_t j) const {
    if (!in_band(i, j)) return 0.0;
    return data_[i * width_ + (j + kl_ - i)];
  }

  void set_row_zero(std::size_t i) {
    std::fill_n(data_.begin() + static_cast<std::ptrdiff_t>(i * width_), width_, 0.0);
  }

  /// y = A x for the unfactored matrix.
  void multiply(std::span<const double> x, std::span<double> y) const {
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t lo = i >= kl_ ? i - kl_ : 0;
      const std::size_t hi = std::min(n_ - 1, i + ku_ + kl_);
      double s = 0.0;
      for (std::size_t j = lo; j <= hi; ++j) s += (*this)(i, j) * x[j];
      y[i] = s;
    }
  }

 private:
  friend class BandedLU;
  double& raw(std::size_t i, std::size_t j) noexcept { return data_[i * width_ + (j + kl_ - i)]; }
  double raw(std::size_t i, std::size_t j) const noexcept {
    return data_[i * width_ + (j + kl_ - i)];
  }

  std::size_t n_, kl_, ku_, width_;
  std::vector<double> data_;
};

class BandedLU {
 public:
  explicit BandedLU(BandedMatrix a) : lu_(std::move(a)), pivots_(lu_.size()) { factor(); }

  std::size_t size() const noexcept { return lu_.size(); }

  /// Overwrites b with the solution of A x = b.
  void solve_in_place(std::span<double> b) const {
    const std::size_t n = lu_.n_, kl = lu_.kl_, ku = lu_.ku_;
    require(b.size() == n, "BandedLU::solve: rhs length mismatch");
    for (std::size_t j = 0; j < n; ++j) {
      if (pivots_[j] != j) std::swap(b[j], b[pivots_[j]]);
      const std::size_t hi = std::min(n - 1, j + kl);
      for (std::size_t i = j + 1; i <= hi; ++i) b[i] -= lu_.raw(i, j) * b[j];
    }
    for (std::size_t ii = n; ii-- > 0;) {
      const std::size_t hi = std::min(n - 1, ii + ku + kl);
      double s = b[ii];
      for (std::size_t c = ii + 1; c <= hi; ++c) s -= lu_.raw(ii, c) * b[c];
      b[ii] = s / lu_.raw(ii, ii);
    }
  }

 private:
  void factor() {
    const std::size_t n = lu_.n_, kl = lu_.kl_, ku = lu_.ku_;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t last_row = std::min(n - 1, j + kl);
      const std::size_t last_col = std::min(n - 1, j + ku + kl);
      std::size_t p = j;
      double best = std::abs(lu_.raw(j, j));
      for (std::size_t i = j + 1; i <= last_row; ++i) {
        if (std::abs(lu_.raw(i, j)) > best) {
          best = std::abs(lu_.raw(i, j));
          p = i;
        }
      }
      if (!(best > 0.0) || !std::isfinite(best)) {
        throw SolverError("BandedLU: singular matrix at column " + std::to_string(j));
      }
      pivots_[j] = p;
      if (p != j) {
        for (std::size_t c = j; c <= last_col; ++c) std::swap(lu_.raw(j, c), lu_.raw(p, c));
      }
      const double inv = 1.0 / lu_.raw(j, j);
      for (std::size_t i = j + 1; i <= last_row; ++i) {
        const double l = lu_.raw(i, j) * inv;
        lu_.raw(i, j) = l;
        if (l == 0.0) continue;
        for (std::size_t c = j + 1; c <= last_col; ++c) lu_.raw(i, c) -= l * lu_.raw(j, c);
      }
    }
  }

  BandedMatrix lu_;
  std::vector<std::size_t> pivots_;
};

}  // namespace kdvhl
