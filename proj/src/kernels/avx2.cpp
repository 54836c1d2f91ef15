// AVX2 + FMA kernels. Functions carry a target attribute instead of the whole
// file being built with -mavx2, so nothing in here leaks AVX encodings into
// inline functions shared with the rest of the program.

#include "prefiner/kernels.hpp"

#if defined(PREFINER_HAVE_AVX2) && (defined(__x86_64__) || defined(_M_X64))

#include <immintrin.h>

#define PREFINER_AVX2 __attribute__((target("avx2,fma")))

namespace prefiner::kernels {

namespace {

// Computes rows [i, i+R) x columns [j, j+8) of C, summing over p = 0..k-1 in
// the same order as the scalar reference but with fused multiply-adds.
template <int R>
PREFINER_AVX2 inline void tile_8(std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                                 bool accumulate) {
  __m256d acc0[R];
  __m256d acc1[R];
  for (int r = 0; r < R; ++r) {
    acc0[r] = _mm256_setzero_pd();
    acc1[r] = _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * n);
    const __m256d b1 = _mm256_loadu_pd(b + p * n + 4);
    for (int r = 0; r < R; ++r) {
      const __m256d av = _mm256_broadcast_sd(a + r * k + p);
      acc0[r] = _mm256_fmadd_pd(av, b0, acc0[r]);
      acc1[r] = _mm256_fmadd_pd(av, b1, acc1[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    double* out = c + r * n;
    if (accumulate) {
      acc0[r] = _mm256_add_pd(_mm256_loadu_pd(out), acc0[r]);
      acc1[r] = _mm256_add_pd(_mm256_loadu_pd(out + 4), acc1[r]);
    }
    _mm256_storeu_pd(out, acc0[r]);
    _mm256_storeu_pd(out + 4, acc1[r]);
  }
}

template <int R>
PREFINER_AVX2 inline void tile_4(std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                                 bool accumulate) {
  __m256d acc[R];
  for (int r = 0; r < R; ++r) acc[r] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * n);
    for (int r = 0; r < R; ++r) acc[r] = _mm256_fmadd_pd(_mm256_broadcast_sd(a + r * k + p), b0, acc[r]);
  }
  for (int r = 0; r < R; ++r) {
    double* out = c + r * n;
    if (accumulate) acc[r] = _mm256_add_pd(_mm256_loadu_pd(out), acc[r]);
    _mm256_storeu_pd(out, acc[r]);
  }
}

template <int R>
PREFINER_AVX2 inline void tile_1(std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                                 bool accumulate) {
  for (int r = 0; r < R; ++r) {
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc = __builtin_fma(a[r * k + p], b[p * n], acc);
    c[r * n] = accumulate ? c[r * n] + acc : acc;
  }
}

template <int R>
PREFINER_AVX2 void row_block(std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                             bool accumulate) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) tile_8<R>(n, k, a, b + j, c + j, accumulate);
  for (; j + 4 <= n; j += 4) tile_4<R>(n, k, a, b + j, c + j, accumulate);
  for (; j < n; ++j) tile_1<R>(n, k, a, b + j, c + j, accumulate);
}

PREFINER_AVX2 void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                                double* c, bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) row_block<4>(n, k, a + i * k, b, c + i * n, accumulate);
  switch (m - i) {
    case 3: row_block<3>(n, k, a + i * k, b, c + i * n, accumulate); break;
    case 2: row_block<2>(n, k, a + i * k, b, c + i * n, accumulate); break;
    case 1: row_block<1>(n, k, a + i * k, b, c + i * n, accumulate); break;
    default: break;
  }
}

PREFINER_AVX2 inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

PREFINER_AVX2 inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, sh));
}

// exp(x) for x <= 0 (softmax after max subtraction): Cody-Waite reduction by
// ln 2 followed by the rational approximation used in Cephes' exp. Inputs
// below -708 flush to zero.
PREFINER_AVX2 inline __m256d exp_nonpositive(__m256d x) {
  const __m256d lo_limit = _mm256_set1_pd(-708.0);
  const __m256d underflow = _mm256_cmp_pd(x, lo_limit, _CMP_LT_OQ);
  x = _mm256_max_pd(x, lo_limit);

  const __m256d fx = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634073599)),
                                     _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(fx, _mm256_set1_pd(6.93145751953125e-1), x);
  x = _mm256_fnmadd_pd(fx, _mm256_set1_pd(1.42860682030941723212e-6), x);

  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_set1_pd(1.26177193074810590878e-4);
  px = _mm256_fmadd_pd(px, xx, _mm256_set1_pd(3.02994407707441961300e-2));
  px = _mm256_fmadd_pd(px, xx, _mm256_set1_pd(9.99999999999999999910e-1));
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_set1_pd(3.00198505138664455042e-6);
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.52448340349684104192e-3));
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.27265548208155028766e-1));
  qx = _mm256_fmadd_pd(qx, xx, _mm256_set1_pd(2.00000000000000000009e0));
  __m256d r = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  r = _mm256_fmadd_pd(r, _mm256_set1_pd(2.0), _mm256_set1_pd(1.0));

  const __m128i e32 = _mm_add_epi32(_mm256_cvtpd_epi32(fx), _mm_set1_epi32(1023));
  const __m256i e64 = _mm256_slli_epi64(_mm256_cvtepi32_epi64(e32), 52);
  r = _mm256_mul_pd(r, _mm256_castsi256_pd(e64));
  return _mm256_andnot_pd(underflow, r);
}

PREFINER_AVX2 inline double exp_nonpositive_1(double x) {
  alignas(32) double buf[4] = {x, 0.0, 0.0, 0.0};
  _mm256_store_pd(buf, exp_nonpositive(_mm256_load_pd(buf)));
  return buf[0];
}

PREFINER_AVX2 void softmax_rows_avx2(std::size_t rows, std::size_t cols, const double* in, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in + r * cols;
    double* y = out + r * cols;
    std::size_t j = 0;
    double mx = x[0];
    if (cols >= 4) {
      __m256d vmax = _mm256_loadu_pd(x);
      for (j = 4; j + 4 <= cols; j += 4) vmax = _mm256_max_pd(vmax, _mm256_loadu_pd(x + j));
      mx = hmax(vmax);
    } else {
      j = 1;
    }
    for (; j < cols; ++j) mx = x[j] > mx ? x[j] : mx;

    const __m256d vmx = _mm256_set1_pd(mx);
    __m256d vsum = _mm256_setzero_pd();
    j = 0;
    for (; j + 4 <= cols; j += 4) {
      __m256d e = exp_nonpositive(_mm256_sub_pd(_mm256_loadu_pd(x + j), vmx));
      _mm256_storeu_pd(y + j, e);
      vsum = _mm256_add_pd(vsum, e);
    }
    double sum = hsum(vsum);
    for (; j < cols; ++j) {
      y[j] = exp_nonpositive_1(x[j] - mx);
      sum += y[j];
    }
    const double inv = 1.0 / sum;
    const __m256d vinv = _mm256_set1_pd(inv);
    j = 0;
    for (; j + 4 <= cols; j += 4) _mm256_storeu_pd(y + j, _mm256_mul_pd(_mm256_loadu_pd(y + j), vinv));
    for (; j < cols; ++j) y[j] *= inv;
  }
}

PREFINER_AVX2 double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc);
  double s = hsum(acc);
  for (; i < n; ++i) s = __builtin_fma(x[i], y[i], s);
  return s;
}

PREFINER_AVX2 void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = __builtin_fma(alpha, x[i], y[i]);
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{Isa::avx2, gemm_nn_avx2, softmax_rows_avx2, dot_avx2, axpy_avx2};
  return &table;
}

}  // namespace prefiner::kernels

#else

namespace prefiner::kernels {

const KernelTable* avx2_kernels() { return nullptr; }

}  // namespace prefiner::kernels

#endif
