#pragma once

#include <cstddef>

namespace sltc::kern {

// Dense arithmetic kernels behind the hot loops (choice-probability softmax,
// simulated-likelihood accumulation, Gram/solve inner products). Every kernel
// has a scalar reference implementation and may have SIMD variants; the active
// variant is selected at runtime and can be forced for equivalence testing.
// Results are deterministic for a fixed variant; variants agree to floating
// tolerance, not bit-exactly (summation order differs).

enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa);
/// True if the variant is compiled in and supported by this CPU.
bool has_isa(Isa isa);
Isa best_supported();
Isa active();
/// Forces the active variant; returns false (and keeps the current one) if
/// unavailable.
bool set_active(Isa isa);

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
double sumsq(const double* x, std::size_t n);
double sum_abs(const double* x, std::size_t n);
/// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);
/// y[i] = exp(x[i])
void exp_v(const double* x, double* y, std::size_t n);
/// Maximum element; n must be >= 1.
double max_v(const double* x, std::size_t n);
/// log(sum(exp(x))), max-shifted for stability; n must be >= 1.
double logsumexp(const double* x, std::size_t n);
/// Fills p with softmax(x) and returns logsumexp(x); n must be >= 1.
double softmax(const double* x, double* p, std::size_t n);

}  // namespace sltc::kern
