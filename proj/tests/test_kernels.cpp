#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "agml/kernels.hpp"
#include "agml/rng.hpp"

using namespace agml;

namespace {

std::vector<double> random_vec(std::int64_t n, Rng& rng, double scale = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = normal(rng) * scale;
  return v;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), 1.0});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

// Odd sizes on purpose so the vector tails get exercised.
const std::vector<std::array<std::int64_t, 3>> kGemmShapes = {
    {1, 1, 1}, {3, 5, 7}, {8, 8, 8}, {13, 9, 21}, {50, 17, 33}};

}  // namespace

TEST_CASE("gemm variants agree between scalar and avx2 backends") {
  const kern::Backend* avx2 = kern::avx2_backend();
  if (!avx2) {
    MESSAGE("avx2 not available on this CPU; skipping");
    return;
  }
  const kern::Backend& ref = kern::scalar_backend();
  Rng rng = make_rng(7, 1);
  for (const auto& [m, n, k] : kGemmShapes) {
    auto a = random_vec(m * k, rng);
    auto b = random_vec(k * n, rng);
    // sprinkle exact zeros to hit the sparsity skip
    for (std::size_t i = 0; i < a.size(); i += 3) a[i] = 0.0;

    for (bool accumulate : {false, true}) {
      auto c0 = random_vec(m * n, rng);
      auto c1 = c0;
      ref.gemm_nn(a.data(), b.data(), c0.data(), m, n, k, accumulate);
      avx2->gemm_nn(a.data(), b.data(), c1.data(), m, n, k, accumulate);
      CHECK(max_rel_diff(c0, c1) < 1e-12);
    }
    {
      auto bt = random_vec(n * k, rng);
      auto c0 = random_vec(m * n, rng);
      auto c1 = c0;
      ref.gemm_nt(a.data(), bt.data(), c0.data(), m, n, k, true);
      avx2->gemm_nt(a.data(), bt.data(), c1.data(), m, n, k, true);
      CHECK(max_rel_diff(c0, c1) < 1e-12);
    }
    {
      auto at = random_vec(k * m, rng);
      auto c0 = random_vec(m * n, rng);
      auto c1 = c0;
      ref.gemm_tn(at.data(), b.data(), c0.data(), m, n, k, false);
      avx2->gemm_tn(at.data(), b.data(), c1.data(), m, n, k, false);
      CHECK(max_rel_diff(c0, c1) < 1e-12);
    }
  }
}

TEST_CASE("non-FMA kernels are bitwise identical across backends") {
  const kern::Backend* avx2 = kern::avx2_backend();
  if (!avx2) {
    MESSAGE("avx2 not available on this CPU; skipping");
    return;
  }
  const kern::Backend& ref = kern::scalar_backend();
  Rng rng = make_rng(11, 2);
  for (std::int64_t n : {1, 4, 7, 64, 129}) {
    auto src = random_vec(n, rng);
    auto d0 = random_vec(n, rng);
    auto d1 = d0;

    ref.vadd(d0.data(), src.data(), n);
    avx2->vadd(d1.data(), src.data(), n);
    CHECK(d0 == d1);

    ref.vaxpy(d0.data(), src.data(), 0.37, n);
    avx2->vaxpy(d1.data(), src.data(), 0.37, n);
    CHECK(d0 == d1);

    ref.vscale(d0.data(), -1.91, n);
    avx2->vscale(d1.data(), -1.91, n);
    CHECK(d0 == d1);
  }
}

TEST_CASE("activation kernels agree across backends for all kinds") {
  const kern::Backend* avx2 = kern::avx2_backend();
  if (!avx2) {
    MESSAGE("avx2 not available on this CPU; skipping");
    return;
  }
  const kern::Backend& ref = kern::scalar_backend();
  Rng rng = make_rng(13, 3);
  const std::int64_t n = 101;
  auto x = random_vec(n, rng, 3.0);
  x[0] = 0.0;
  x[1] = 6.0;  // relu6 boundary
  auto gy = random_vec(n, rng);
  using kern::Act;
  for (Act act : {Act::kRelu, Act::kLeakyRelu, Act::kTanh, Act::kSigmoid,
                  Act::kElu, Act::kSoftplus, Act::kRelu6, Act::kIdentity}) {
    std::vector<double> y0(n), y1(n);
    ref.act_fwd(act, x.data(), y0.data(), n);
    avx2->act_fwd(act, x.data(), y1.data(), n);
    CHECK(y0 == y1);

    auto gx0 = random_vec(n, rng);
    auto gx1 = gx0;
    ref.act_bwd(act, x.data(), gy.data(), gx0.data(), n);
    avx2->act_bwd(act, x.data(), gy.data(), gx1.data(), n);
    CHECK(gx0 == gx1);
  }
}

TEST_CASE("adam kernel is bitwise identical across backends") {
  const kern::Backend* avx2 = kern::avx2_backend();
  if (!avx2) {
    MESSAGE("avx2 not available on this CPU; skipping");
    return;
  }
  const kern::Backend& ref = kern::scalar_backend();
  Rng rng = make_rng(17, 4);
  const std::int64_t n = 77;
  auto g = random_vec(n, rng);
  auto p0 = random_vec(n, rng), p1 = p0;
  auto m0 = random_vec(n, rng, 0.1), m1 = m0;
  auto v0 = random_vec(n, rng, 0.01), v1 = v0;
  for (auto& vi : v0) vi = std::fabs(vi);
  v1 = v0;
  ref.adam_step(p0.data(), g.data(), m0.data(), v0.data(), n, 0.01, 0.9, 0.999,
                1e-8, 5e-4, 1.0 - 0.9, 1.0 - 0.999);
  avx2->adam_step(p1.data(), g.data(), m1.data(), v1.data(), n, 0.01, 0.9,
                  0.999, 1e-8, 5e-4, 1.0 - 0.9, 1.0 - 0.999);
  CHECK(p0 == p1);
  CHECK(m0 == m1);
  CHECK(v0 == v1);
}

TEST_CASE("gemm reference multiplies correctly on a hand example") {
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  const std::vector<double> a = {1, 2, 3, 4};
  const std::vector<double> b = {5, 6, 7, 8};
  std::vector<double> c(4, 0.0);
  kern::scalar_backend().gemm_nn(a.data(), b.data(), c.data(), 2, 2, 2, false);
  CHECK(c == std::vector<double>{19, 22, 43, 50});
}
