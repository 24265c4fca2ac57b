#include <cmath>

#include "kernels_impl.hpp"

// Reference implementations. Plain loops, no reassociation: these define the
// semantics the SIMD variants are tested against.

namespace sltc::kern::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double sumsq(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

double sum_abs(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::fabs(x[i]);
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void exp_v(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

double max_v(const double* x, std::size_t n) {
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

double logsumexp(const double* x, std::size_t n) {
  const double m = max_v(x, n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(x[i] - m);
  return m + std::log(acc);
}

double softmax(const double* x, double* p, std::size_t n) {
  const double m = max_v(x, n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp(x[i] - m);
    acc += p[i];
  }
  const double inv = 1.0 / acc;
  for (std::size_t i = 0; i < n; ++i) p[i] *= inv;
  return m + std::log(acc);
}

}  // namespace sltc::kern::scalar
