#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sltc {

/// Cholesky factorization of a symmetric positive definite matrix, factored
/// once and reused across right-hand sides.
class Spd {
 public:
  /// `a` is the full matrix, row-major, n x n; only the lower triangle is
  /// read. Throws InsufficientObservations if a pivot degenerates.
  Spd(std::vector<double> a, std::size_t n);

  void solve_inplace(std::span<double> b) const;
  std::vector<double> solve(std::span<const double> b) const;
  std::size_t n() const { return n_; }

 private:
  std::vector<double> l_;  // lower triangle, row-major full storage
  std::size_t n_;
};

struct OlsFit {
  std::vector<double> beta;
  double r2;
  double rss;
  std::size_t n_obs;
};

/// Least squares via equilibrated normal equations with one refinement step.
/// `x` is row-major n x p. Throws InsufficientObservations when n < p or the
/// design is rank deficient (a zero column, or a singular Gram matrix).
OlsFit ols(const double* x, const double* y, std::size_t n, std::size_t p);

}  // namespace sltc
