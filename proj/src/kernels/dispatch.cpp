#include "agml/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace agml::kern {

const Backend* avx2_backend_impl();  // defined in avx2.cpp

namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Backend* select() {
  const Backend* avx2 = cpu_has_avx2_fma() ? avx2_backend_impl() : nullptr;
  if (const char* force = std::getenv("AGML_KERNEL")) {
    if (std::strcmp(force, "scalar") == 0) return &scalar_backend();
    if (std::strcmp(force, "avx2") == 0) {
      if (!avx2)
        throw std::runtime_error("AGML_KERNEL=avx2 but CPU lacks AVX2/FMA");
      return avx2;
    }
    throw std::runtime_error("unknown AGML_KERNEL value (use scalar|avx2)");
  }
  return avx2 ? avx2 : &scalar_backend();
}

}  // namespace

const Backend* avx2_backend() {
  return cpu_has_avx2_fma() ? avx2_backend_impl() : nullptr;
}

const Backend& active_backend() {
  static const Backend* chosen = select();
  return *chosen;
}

}  // namespace agml::kern
