#pragma once

#include <cstddef>

// Per-variant entry points, wired into the dispatch table in kernels.cpp.

namespace sltc::kern::scalar {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);
double sum_abs(const double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void exp_v(const double* x, double* y, std::size_t n);
double max_v(const double* x, std::size_t n);
double logsumexp(const double* x, std::size_t n);
double softmax(const double* x, double* p, std::size_t n);
}  // namespace sltc::kern::scalar

#if defined(SLTC_HAVE_AVX2)
namespace sltc::kern::avx2 {
double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);
double sum_abs(const double* x, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void exp_v(const double* x, double* y, std::size_t n);
double max_v(const double* x, std::size_t n);
double logsumexp(const double* x, std::size_t n);
double softmax(const double* x, double* p, std::size_t n);
}  // namespace sltc::kern::avx2
#endif
