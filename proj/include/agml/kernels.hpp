#pragma once

#include <cstdint>

namespace agml::kern {

// Elementwise nonlinearities used by the compute graph. LEAKY_RELU slope is
// fixed at 0.2, ELU alpha at 1.
enum class Act : std::uint8_t {
  kRelu,
  kLeakyRelu,
  kTanh,
  kSigmoid,
  kElu,
  kSoftplus,
  kRelu6,
  kIdentity,
};

// One table of function pointers per instruction-set variant. All matrices
// are row-major and contiguous. Every entry of every backend must agree with
// the scalar reference: bitwise for the non-FMA kernels, within 1e-12
// relative error for the GEMM family (FMA changes rounding).
struct Backend {
  const char* name;

  // c[m x n] = a[m x k] * b[k x n], or += when accumulate.
  void (*gemm_nn)(const double* a, const double* b, double* c,
                  std::int64_t m, std::int64_t n, std::int64_t k,
                  bool accumulate);
  // c[m x n] = a[m x k] * b^T with b stored [n x k].
  void (*gemm_nt)(const double* a, const double* b, double* c,
                  std::int64_t m, std::int64_t n, std::int64_t k,
                  bool accumulate);
  // c[m x n] = a^T * b with a stored [k x m], b stored [k x n].
  void (*gemm_tn)(const double* a, const double* b, double* c,
                  std::int64_t m, std::int64_t n, std::int64_t k,
                  bool accumulate);

  void (*vadd)(double* dst, const double* src, std::int64_t n);   // dst += src
  void (*vaxpy)(double* dst, const double* src, double a,
                std::int64_t n);                                  // dst += a*src
  void (*vscale)(double* dst, double a, std::int64_t n);          // dst *= a

  void (*act_fwd)(Act kind, const double* x, double* y, std::int64_t n);
  // gx += gy * f'(x); x is the pre-activation input.
  void (*act_bwd)(Act kind, const double* x, const double* gy, double* gx,
                  std::int64_t n);

  // Decoupled weight decay applied before the moment update; bc1/bc2 are the
  // bias-correction terms 1-beta^t supplied by the caller.
  void (*adam_step)(double* p, const double* g, double* m, double* v,
                    std::int64_t n, double lr, double beta1, double beta2,
                    double eps, double weight_decay, double bc1, double bc2);
};

const Backend& scalar_backend();

// Null when the build target or the running CPU lacks AVX2+FMA.
const Backend* avx2_backend();

// Chosen once per process: AVX2 when available, else scalar. The environment
// variable AGML_KERNEL=scalar|avx2 forces a specific backend (avx2 throws if
// the CPU cannot run it).
const Backend& active_backend();

}  // namespace agml::kern
