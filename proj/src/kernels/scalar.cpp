// Reference kernels. Everything else in the library is defined by agreement
// with these loops; keep them simple enough to audit by eye.
//
// This translation unit is compiled with -ffp-contract=off so that the
// compiler cannot fuse a*b+c into FMA behind our back; the SIMD variants are
// tested against these exact semantics.

#include "agml/kernels.hpp"

#include <algorithm>
#include <cmath>

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
      if (av == 0.0) continue;
      const double* brow = b + kk * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
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
      double acc = 0.0;
      for (std::int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
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
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void vadd(double* dst, const double* src, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

void vaxpy(double* dst, const double* src, double a, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) dst[i] += a * src[i];
}

void vscale(double* dst, double a, std::int64_t n) {
  for (std::int64_t i = 0; i < n; ++i) dst[i] *= a;
}

constexpr double kLeakySlope = 0.2;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus(double x) {
  // log(1+exp(x)) without overflow; for large |x| the limits are exact in
  // double precision.
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

void act_fwd(Act kind, const double* x, double* y, std::int64_t n) {
  switch (kind) {
    case Act::kRelu:
      for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    case Act::kLeakyRelu:
      for (std::int64_t i = 0; i < n; ++i)
        y[i] = x[i] > 0.0 ? x[i] : kLeakySlope * x[i];
      break;
    case Act::kTanh:
      for (std::int64_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
      break;
    case Act::kSigmoid:
      for (std::int64_t i = 0; i < n; ++i) y[i] = sigmoid(x[i]);
      break;
    case Act::kElu:
      for (std::int64_t i = 0; i < n; ++i)
        y[i] = x[i] > 0.0 ? x[i] : std::expm1(x[i]);
      break;
    case Act::kSoftplus:
      for (std::int64_t i = 0; i < n; ++i) y[i] = softplus(x[i]);
      break;
    case Act::kRelu6:
      for (std::int64_t i = 0; i < n; ++i)
        y[i] = std::min(std::max(x[i], 0.0), 6.0);
      break;
    case Act::kIdentity:
      std::copy(x, x + n, y);
      break;
  }
}

void act_bwd(Act kind, const double* x, const double* gy, double* gx,
             std::int64_t n) {
  switch (kind) {
    case Act::kRelu:
      for (std::int64_t i = 0; i < n; ++i)
        if (x[i] > 0.0) gx[i] += gy[i];
      break;
    case Act::kLeakyRelu:
      for (std::int64_t i = 0; i < n; ++i)
        gx[i] += gy[i] * (x[i] > 0.0 ? 1.0 : kLeakySlope);
      break;
    case Act::kTanh:
      for (std::int64_t i = 0; i < n; ++i) {
        const double t = std::tanh(x[i]);
        gx[i] += gy[i] * (1.0 - t * t);
      }
      break;
    case Act::kSigmoid:
      for (std::int64_t i = 0; i < n; ++i) {
        const double s = sigmoid(x[i]);
        gx[i] += gy[i] * s * (1.0 - s);
      }
      break;
    case Act::kElu:
      for (std::int64_t i = 0; i < n; ++i)
        gx[i] += gy[i] * (x[i] > 0.0 ? 1.0 : std::exp(x[i]));
      break;
    case Act::kSoftplus:
      for (std::int64_t i = 0; i < n; ++i) gx[i] += gy[i] * sigmoid(x[i]);
      break;
    case Act::kRelu6:
      for (std::int64_t i = 0; i < n; ++i)
        if (x[i] > 0.0 && x[i] < 6.0) gx[i] += gy[i];
      break;
    case Act::kIdentity:
      for (std::int64_t i = 0; i < n; ++i) gx[i] += gy[i];
      break;
  }
}

void adam_step(double* p, const double* g, double* m, double* v,
               std::int64_t n, double lr, double beta1, double beta2,
               double eps, double weight_decay, double bc1, double bc2) {
  const double decay = 1.0 - lr * weight_decay;
  for (std::int64_t i = 0; i < n; ++i) {
    double pi = p[i] * decay;
    const double gi = g[i];
    const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
    const double vi = beta2 * v[i] + (1.0 - beta2) * (gi * gi);
    m[i] = mi;
    v[i] = vi;
    const double mhat = mi / bc1;
    const double vhat = vi / bc2;
    p[i] = pi - lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

}  // namespace

const Backend& scalar_backend() {
  static const Backend table = {
      "scalar",  gemm_nn, gemm_nt, gemm_tn, vadd,
      vaxpy,     vscale,  act_fwd, act_bwd, adam_step,
  };
  return table;
}

}  // namespace agml::kern
