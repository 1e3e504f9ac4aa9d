// AVX2+FMA variants of the hot kernels. This file is compiled with
// -mavx2 -mfma; nothing here may run unless the dispatcher verified CPU
// support. Transcendental activations are delegated to the scalar reference
// so both backends produce bit-identical values for them; only the GEMM
// family uses FMA and is allowed to differ from the reference within
// rounding.

#include "agml/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <algorithm>

namespace agml::kern {
namespace {

void gemm_nn(const double* a, const double* b, double* c,
             std::int64_t m, std::int64_t n, std::int64_t k, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::int64_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;  // same sparsity skip as the reference
      const double* brow = b + kk * n;
      const __m256d av4 = _mm256_set1_pd(av);
      std::int64_t j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d cj = _mm256_loadu_pd(crow + j);
        cj = _mm256_fmadd_pd(av4, _mm256_loadu_pd(brow + j), cj);
        _mm256_storeu_pd(crow + j, cj);
      }
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c,
             std::int64_t m, std::int64_t n, std::int64_t k, bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      __m256d acc4 = _mm256_setzero_pd();
      std::int64_t kk = 0;
      for (; kk + 4 <= k; kk += 4) {
        acc4 = _mm256_fmadd_pd(_mm256_loadu_pd(arow + kk),
                               _mm256_loadu_pd(brow + kk), acc4);
      }
      __m128d lo = _mm256_castpd256_pd128(acc4);
      __m128d hi = _mm256_extractf128_pd(acc4, 1);
      lo = _mm_add_pd(lo, hi);
      double acc = _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
      for (; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c,
             std::int64_t m, std::int64_t n, std::int64_t k, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::int64_t kk = 0; kk < k; ++kk) {
    const double* arow = a + kk * m;
    const double* brow = b + kk * n;
    for (std::int64_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      const __m256d av4 = _mm256_set1_pd(av);
      std::int64_t j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d cj = _mm256_loadu_pd(crow + j);
        cj = _mm256_fmadd_pd(av4, _mm256_loadu_pd(brow + j), cj);
        _mm256_storeu_pd(crow + j, cj);
      }
      for (; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// The vector update kernels avoid FMA on purpose: mul-then-add rounds the
// same way as the scalar reference, so equivalence tests can demand bitwise
// equality.

void vadd(double* dst, const double* src, std::int64_t n) {
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_add_pd(_mm256_loadu_pd(dst + i), _mm256_loadu_pd(src + i));
    _mm256_storeu_pd(dst + i, d);
  }
  for (; i < n; ++i) dst[i] += src[i];
}

void vaxpy(double* dst, const double* src, double a, std::int64_t n) {
  const __m256d a4 = _mm256_set1_pd(a);
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d prod = _mm256_mul_pd(a4, _mm256_loadu_pd(src + i));
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i), prod));
  }
  for (; i < n; ++i) dst[i] += a * src[i];
}

void vscale(double* dst, double a, std::int64_t n) {
  const __m256d a4 = _mm256_set1_pd(a);
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(a4, _mm256_loadu_pd(dst + i)));
  for (; i < n; ++i) dst[i] *= a;
}

constexpr double kLeakySlope = 0.2;

void act_fwd(Act kind, const double* x, double* y, std::int64_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::int64_t i = 0;
  switch (kind) {
    case Act::kRelu:
      for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
      for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      return;
    case Act::kLeakyRelu: {
      // max(x, 0.2*x) selects x on the positive side, 0.2*x on the negative.
      const __m256d slope = _mm256_set1_pd(kLeakySlope);
      for (; i + 4 <= n; i += 4) {
        __m256d xv = _mm256_loadu_pd(x + i);
        _mm256_storeu_pd(y + i, _mm256_max_pd(xv, _mm256_mul_pd(slope, xv)));
      }
      for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : kLeakySlope * x[i];
      return;
    }
    case Act::kRelu6: {
      const __m256d six = _mm256_set1_pd(6.0);
      for (; i + 4 <= n; i += 4) {
        __m256d xv = _mm256_max_pd(_mm256_loadu_pd(x + i), zero);
        _mm256_storeu_pd(y + i, _mm256_min_pd(xv, six));
      }
      for (; i < n; ++i) y[i] = std::min(std::max(x[i], 0.0), 6.0);
      return;
    }
    case Act::kIdentity:
      std::copy(x, x + n, y);
      return;
    default:
      scalar_backend().act_fwd(kind, x, y, n);
      return;
  }
}

void act_bwd(Act kind, const double* x, const double* gy, double* gx,
             std::int64_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::int64_t i = 0;
  switch (kind) {
    case Act::kRelu:
      for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        __m256d add = _mm256_and_pd(mask, _mm256_loadu_pd(gy + i));
        _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), add));
      }
      for (; i < n; ++i)
        if (x[i] > 0.0) gx[i] += gy[i];
      return;
    case Act::kLeakyRelu: {
      const __m256d slope = _mm256_set1_pd(kLeakySlope);
      const __m256d one = _mm256_set1_pd(1.0);
      for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        __m256d factor = _mm256_blendv_pd(slope, one, mask);
        __m256d add = _mm256_mul_pd(_mm256_loadu_pd(gy + i), factor);
        _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), add));
      }
      for (; i < n; ++i) gx[i] += gy[i] * (x[i] > 0.0 ? 1.0 : kLeakySlope);
      return;
    }
    case Act::kRelu6: {
      const __m256d six = _mm256_set1_pd(6.0);
      for (; i + 4 <= n; i += 4) {
        __m256d xv = _mm256_loadu_pd(x + i);
        __m256d mask = _mm256_and_pd(_mm256_cmp_pd(xv, zero, _CMP_GT_OQ),
                                     _mm256_cmp_pd(xv, six, _CMP_LT_OQ));
        __m256d add = _mm256_and_pd(mask, _mm256_loadu_pd(gy + i));
        _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), add));
      }
      for (; i < n; ++i)
        if (x[i] > 0.0 && x[i] < 6.0) gx[i] += gy[i];
      return;
    }
    case Act::kIdentity:
      vadd(gx, gy, n);
      return;
    default:
      scalar_backend().act_bwd(kind, x, gy, gx, n);
      return;
  }
}

void adam_step(double* p, const double* g, double* m, double* v,
               std::int64_t n, double lr, double beta1, double beta2,
               double eps, double weight_decay, double bc1, double bc2) {
  const __m256d decay4 = _mm256_set1_pd(1.0 - lr * weight_decay);
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d nb1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d nb2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d bc1v = _mm256_set1_pd(bc1);
  const __m256d bc2v = _mm256_set1_pd(bc2);
  const __m256d epsv = _mm256_set1_pd(eps);
  const __m256d lrv = _mm256_set1_pd(lr);
  std::int64_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d gi = _mm256_loadu_pd(g + i);
    __m256d pi = _mm256_mul_pd(_mm256_loadu_pd(p + i), decay4);
    __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                               _mm256_mul_pd(nb1, gi));
    __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                               _mm256_mul_pd(nb2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    __m256d mhat = _mm256_div_pd(mi, bc1v);
    __m256d vhat = _mm256_div_pd(vi, bc2v);
    __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), epsv);
    __m256d step = _mm256_mul_pd(lrv, _mm256_div_pd(mhat, denom));
    _mm256_storeu_pd(p + i, _mm256_sub_pd(pi, step));
  }
  if (i < n)
    scalar_backend().adam_step(p + i, g + i, m + i, v + i, n - i, lr, beta1,
                               beta2, eps, weight_decay, bc1, bc2);
}

}  // namespace

const Backend* avx2_backend_impl() {
  static const Backend table = {
      "avx2",  gemm_nn, gemm_nt, gemm_tn, vadd,
      vaxpy,   vscale,  act_fwd, act_bwd, adam_step,
  };
  return &table;
}

}  // namespace agml::kern

#else

namespace agml::kern {
const Backend* avx2_backend_impl() { return nullptr; }
}  // namespace agml::kern

#endif
