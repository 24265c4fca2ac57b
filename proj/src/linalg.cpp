#include "sltc/linalg.hpp"

#include <cmath>
#include <string>

#include "sltc/errors.hpp"
#include "sltc/kernels.hpp"

namespace sltc {

Spd::Spd(std::vector<double> a, std::size_t n) : l_(std::move(a)), n_(n) {
  if (l_.size() != n * n) throw DimensionMismatch("Spd: matrix storage is not n*n");
  for (std::size_t i = 0; i < n; ++i) {
    double* row_i = l_.data() + i * n;
    for (std::size_t j = 0; j < i; ++j) {
      const double* row_j = l_.data() + j * n;
      row_i[j] = (row_i[j] - kern::dot(row_i, row_j, j)) / row_j[j];
    }
    double d = row_i[i] - kern::sumsq(row_i, i);
    if (!(d > 0.0))
      throw InsufficientObservations("matrix is not positive definite at pivot " +
                                     std::to_string(i));
    row_i[i] = std::sqrt(d);
    for (std::size_t j = i + 1; j < n; ++j) row_i[j] = 0.0;
  }
}

void Spd::solve_inplace(std::span<double> b) const {
  if (b.size() != n_) throw DimensionMismatch("Spd::solve: rhs size mismatch");
  // L y = b
  for (std::size_t i = 0; i < n_; ++i) {
    const double* row = l_.data() + i * n_;
    b[i] = (b[i] - kern::dot(row, b.data(), i)) / row[i];
  }
  // L^T x = y
  for (std::size_t ii = n_; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t j = ii + 1; j < n_; ++j) s -= l_[j * n_ + ii] * b[j];
    b[ii] = s / l_[ii * n_ + ii];
  }
}

std::vector<double> Spd::solve(std::span<const double> b) const {
  std::vector<double> x(b.begin(), b.end());
  solve_inplace(x);
  return x;
}

OlsFit ols(const double* x, const double* y, std::size_t n, std::size_t p) {
  if (p == 0) throw DimensionMismatch("ols: no regressors");
  if (n < p)
    throw InsufficientObservations("ols: " + std::to_string(n) + " observations for " +
                                   std::to_string(p) + " coefficients");

  // Column-major copy so Gram entries are contiguous dot products.
  std::vector<double> cols(n * p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) cols[j * n + i] = x[i * p + j];

  std::vector<double> gram(p * p), rhs(p);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t k = 0; k <= j; ++k) {
      double g = kern::dot(cols.data() + j * n, cols.data() + k * n, n);
      gram[j * p + k] = g;
      gram[k * p + j] = g;
    }
    rhs[j] = kern::dot(cols.data() + j * n, y, n);
  }

  // Equilibrate: regressor scales differ by orders of magnitude (log floor
  // area vs counts), and D G D keeps the factorization well conditioned.
  std::vector<double> d(p);
  for (std::size_t j = 0; j < p; ++j) {
    double g = gram[j * p + j];
    if (!(g > 0.0))
      throw InsufficientObservations("ols: regressor " + std::to_string(j) +
                                     " has no variation");
    d[j] = 1.0 / std::sqrt(g);
  }
  std::vector<double> scaled(p * p);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t k = 0; k < p; ++k) scaled[j * p + k] = gram[j * p + k] * d[j] * d[k];

  Spd chol(std::move(scaled), p);
  std::vector<double> srhs(p);
  for (std::size_t j = 0; j < p; ++j) srhs[j] = rhs[j] * d[j];
  std::vector<double> w = chol.solve(srhs);

  OlsFit fit;
  fit.beta.resize(p);
  for (std::size_t j = 0; j < p; ++j) fit.beta[j] = w[j] * d[j];

  // One step of iterative refinement in the original scale.
  std::vector<double> resid(p);
  for (std::size_t j = 0; j < p; ++j) {
    double gb = 0.0;
    for (std::size_t k = 0; k < p; ++k) gb += gram[j * p + k] * fit.beta[k];
    resid[j] = (rhs[j] - gb) * d[j];
  }
  std::vector<double> corr = chol.solve(resid);
  for (std::size_t j = 0; j < p; ++j) fit.beta[j] += corr[j] * d[j];

  double rss = 0.0, mean = kern::sum(y, n) / static_cast<double>(n), tss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double pred = kern::dot(x + i * p, fit.beta.data(), p);
    rss += (y[i] - pred) * (y[i] - pred);
    tss += (y[i] - mean) * (y[i] - mean);
  }
  fit.rss = rss;
  fit.r2 = tss > 0.0 ? 1.0 - rss / tss : 1.0;
  fit.n_obs = n;
  return fit;
}

}  // namespace sltc
