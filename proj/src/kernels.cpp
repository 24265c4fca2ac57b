#include "sltc/kernels.hpp"

#include "kernels_impl.hpp"

namespace sltc::kern {

namespace {

struct Table {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*sumsq)(const double*, std::size_t);
  double (*sum_abs)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*exp_v)(const double*, double*, std::size_t);
  double (*max_v)(const double*, std::size_t);
  double (*logsumexp)(const double*, std::size_t);
  double (*softmax)(const double*, double*, std::size_t);
};

constexpr Table kScalar = {scalar::dot,   scalar::sum,   scalar::sumsq,
                           scalar::sum_abs, scalar::axpy, scalar::exp_v,
                           scalar::max_v, scalar::logsumexp, scalar::softmax};

#if defined(SLTC_HAVE_AVX2)
constexpr Table kAvx2 = {avx2::dot,   avx2::sum,   avx2::sumsq,
                         avx2::sum_abs, avx2::axpy, avx2::exp_v,
                         avx2::max_v, avx2::logsumexp, avx2::softmax};
#endif

struct State {
  Isa isa;
  const Table* table;
  State() : isa(best_supported()), table(&kScalar) {
#if defined(SLTC_HAVE_AVX2)
    if (isa == Isa::avx2) table = &kAvx2;
#endif
  }
};

State& state() {
  static State s;
  return s;
}

}  // namespace

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "?";
}

bool has_isa(Isa isa) {
  if (isa == Isa::scalar) return true;
#if defined(SLTC_HAVE_AVX2)
  if (isa == Isa::avx2) return __builtin_cpu_supports("avx2") != 0;
#endif
  return false;
}

Isa best_supported() {
  return has_isa(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

Isa active() { return state().isa; }

bool set_active(Isa isa) {
  if (!has_isa(isa)) return false;
  state().isa = isa;
  state().table = &kScalar;
#if defined(SLTC_HAVE_AVX2)
  if (isa == Isa::avx2) state().table = &kAvx2;
#endif
  return true;
}

double dot(const double* a, const double* b, std::size_t n) { return state().table->dot(a, b, n); }
double sum(const double* x, std::size_t n) { return state().table->sum(x, n); }
double sumsq(const double* x, std::size_t n) { return state().table->sumsq(x, n); }
double sum_abs(const double* x, std::size_t n) { return state().table->sum_abs(x, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  state().table->axpy(alpha, x, y, n);
}
void exp_v(const double* x, double* y, std::size_t n) { state().table->exp_v(x, y, n); }
double max_v(const double* x, std::size_t n) { return state().table->max_v(x, n); }
double logsumexp(const double* x, std::size_t n) { return state().table->logsumexp(x, n); }
double softmax(const double* x, double* p, std::size_t n) {
  return state().table->softmax(x, p, n);
}

}  // namespace sltc::kern
