#include <immintrin.h>

#include <cmath>

#include "kernels_impl.hpp"

// AVX2/FMA variants. Tails shorter than a vector are handled with scalar code;
// accumulation order differs from the scalar reference, so agreement is to
// floating tolerance (see tests/test_kernels.cpp).

namespace sltc::kern::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_max_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

// exp on 4 lanes: range reduction against ln2, rational approximation on the
// reduced argument (classic double-precision coefficient set), two-part 2^n
// rescale so extreme arguments grade into denormals/infinity correctly.
inline __m256d exp4(__m256d xin) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634074);
  const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
  const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
  const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
  const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
  const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
  const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
  const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);
  const __m256d hi_cut = _mm256_set1_pd(709.782712893384);
  const __m256d lo_cut = _mm256_set1_pd(-745.2);

  __m256d x = _mm256_min_pd(_mm256_max_pd(xin, lo_cut), hi_cut);
  __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(n, ln2_hi, x);
  x = _mm256_fnmadd_pd(n, ln2_lo, x);

  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_fmadd_pd(p0, xx, p1);
  px = _mm256_fmadd_pd(px, xx, p2);
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_fmadd_pd(q0, xx, q1);
  qx = _mm256_fmadd_pd(qx, xx, q2);
  qx = _mm256_fmadd_pd(qx, xx, q3);
  const __m256d one = _mm256_set1_pd(1.0);
  __m256d r = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  r = _mm256_fmadd_pd(_mm256_set1_pd(2.0), r, one);

  // 2^n = 2^n1 * 2^n2 with n1 = round(n/2), n2 = n - n1; both exponents stay
  // in the normal range for n in [-1075, 1024].
  const __m256d n1 = _mm256_round_pd(_mm256_mul_pd(n, _mm256_set1_pd(0.5)),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  const __m256d n2 = _mm256_sub_pd(n, n1);
  const __m256i bias = _mm256_set1_epi64x(1023);
  const __m256i e1 = _mm256_slli_epi64(
      _mm256_add_epi64(_mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(n1)), bias), 52);
  const __m256i e2 = _mm256_slli_epi64(
      _mm256_add_epi64(_mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(n2)), bias), 52);
  r = _mm256_mul_pd(_mm256_mul_pd(r, _mm256_castsi256_pd(e1)), _mm256_castsi256_pd(e2));

  const __m256d inf = _mm256_set1_pd(HUGE_VAL);
  r = _mm256_blendv_pd(r, inf, _mm256_cmp_pd(xin, hi_cut, _CMP_GT_OQ));
  r = _mm256_blendv_pd(r, _mm256_setzero_pd(), _mm256_cmp_pd(xin, lo_cut, _CMP_LT_OQ));
  r = _mm256_blendv_pd(r, xin, _mm256_cmp_pd(xin, xin, _CMP_UNORD_Q));
  return r;
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double sumsq(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

double sum_abs(const double* x, std::size_t n) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_andnot_pd(sign_mask, _mm256_loadu_pd(x + i)));
  double s = hsum(acc);
  for (; i < n; ++i) s += std::fabs(x[i]);
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, r);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void exp_v(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, exp4(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = std::exp(x[i]);
}

double max_v(const double* x, std::size_t n) {
  std::size_t i = 0;
  double m;
  if (n >= 4) {
    __m256d acc = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
    m = hmax(acc);
  } else {
    m = x[0];
    i = 1;
  }
  for (; i < n; ++i)
    if (x[i] > m) m = x[i];
  return m;
}

double logsumexp(const double* x, std::size_t n) {
  const double m = max_v(x, n);
  const __m256d mv = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, exp4(_mm256_sub_pd(_mm256_loadu_pd(x + i), mv)));
  double s = hsum(acc);
  for (; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

double softmax(const double* x, double* p, std::size_t n) {
  const double m = max_v(x, n);
  const __m256d mv = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d e = exp4(_mm256_sub_pd(_mm256_loadu_pd(x + i), mv));
    _mm256_storeu_pd(p + i, e);
    acc = _mm256_add_pd(acc, e);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    p[i] = std::exp(x[i] - m);
    s += p[i];
  }
  const double inv = 1.0 / s;
  const __m256d iv = _mm256_set1_pd(inv);
  i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(p + i, _mm256_mul_pd(_mm256_loadu_pd(p + i), iv));
  for (; i < n; ++i) p[i] *= inv;
  return m + std::log(s);
}

}  // namespace sltc::kern::avx2
