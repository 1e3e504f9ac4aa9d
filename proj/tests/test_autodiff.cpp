#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "agml/autodiff.hpp"
#include "agml/error.hpp"
#include "agml/gradcheck.hpp"
#include "agml/optim.hpp"

using namespace agml;

TEST_CASE("sum of squares has gradient 2x") {
  Tape tape;
  VarId x = tape.input(Tensor({1, 2}, {1.0, 2.0}), true);
  VarId loss = tape.sum_all(tape.hadamard(x, x));
  tape.backward(loss);
  CHECK(tape.value(loss)[0] == doctest::Approx(5.0));
  CHECK(tape.grad(x)[0] == doctest::Approx(2.0));
  CHECK(tape.grad(x)[1] == doctest::Approx(4.0));
}

TEST_CASE("branch disconnected from the loss gets zero gradient") {
  ParamStore store;
  store.add("used", Tensor({1, 2}, {1.0, -1.0}));
  store.add("unused", Tensor({1, 2}, {3.0, 4.0}));
  Tape tape;
  VarId used = tape.param(store, "used");
  VarId unused = tape.param(store, "unused");
  (void)tape.hadamard(unused, unused);  // computed but never reaching the loss
  VarId loss = tape.sum_all(tape.hadamard(used, used));
  tape.backward(loss);
  CHECK(tape.grad(unused)[0] == 0.0);
  CHECK(tape.grad(unused)[1] == 0.0);
  CHECK(tape.grad(used)[0] == doctest::Approx(2.0));
}

TEST_CASE("two-layer perceptron gradients match finite differences") {
  Rng rng = make_rng(42, 0);
  ParamStore store;
  store.add("w1", Tensor::glorot(5, 3, rng));
  store.add("b1", Tensor({5}));
  store.add("w2", Tensor::glorot(2, 5, rng));
  store.add("b2", Tensor({2}));
  Tensor x({4, 3});
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = normal(rng);
  auto labels = std::make_shared<const std::vector<std::int32_t>>(
      std::vector<std::int32_t>{0, 1, 0, 1});
  auto rows = std::make_shared<const IndexVec>(IndexVec{0, 1, 2, 3});

  auto build = [&](Tape& t, ParamStore& s) {
    VarId in = t.input(x);
    VarId h = t.activation(t.linear(in, t.param(s, "w1"), t.param(s, "b1")),
                           kern::Act::kTanh);
    VarId logits = t.linear(h, t.param(s, "w2"), t.param(s, "b2"));
    return t.cross_entropy(logits, rows, labels);
  };
  auto report = grad_check(store, build);
  CHECK(report.max_rel_err < 1e-6);
}

TEST_CASE("linear map passes grad_check tightly") {
  Rng rng = make_rng(5, 0);
  ParamStore store;
  store.add("w", Tensor::glorot(3, 4, rng));
  Tensor x({2, 4});
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = normal(rng);
  auto build = [&](Tape& t, ParamStore& s) {
    return t.sum_all(t.linear(t.input(x), t.param(s, "w")));
  };
  CHECK(grad_check(store, build).max_rel_err < 1e-8);
}

TEST_CASE("row softmax rows sum to one") {
  Rng rng = make_rng(9, 0);
  Tape tape;
  Tensor x({6, 5});
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = normal(rng) * 4.0;
  VarId y = tape.row_softmax(tape.input(x));
  const Tensor& yv = tape.value(y);
  for (std::int64_t r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (std::int64_t c = 0; c < 5; ++c) sum += yv.at(r, c);
    CHECK(std::fabs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("dropout train mode zeroes at rate p and rescales survivors") {
  Rng rng = make_rng(21, 0);
  const double p = 0.3;
  const std::int64_t n = 20000;
  Tape tape;
  VarId x = tape.input(Tensor::full({1, n}, 1.0));
  VarId y = tape.dropout(x, p, true, rng);
  const Tensor& yv = tape.value(y);
  std::int64_t zeros = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    if (yv[i] == 0.0)
      ++zeros;
    else
      CHECK(yv[i] == doctest::Approx(1.0 / (1.0 - p)));
  }
  const double rate = static_cast<double>(zeros) / static_cast<double>(n);
  CHECK(std::fabs(rate - p) < 0.02);  // ~6 sigma for n=20000
}

TEST_CASE("dropout eval mode is the identity") {
  Rng rng = make_rng(22, 0);
  Tape tape;
  Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
  VarId in = tape.input(x);
  VarId out = tape.dropout(in, 0.5, false, rng);
  CHECK(out == in);  // no node emitted at all
}

TEST_CASE("gradients are unaffected by eval-mode dropout") {
  Rng rng = make_rng(23, 0);
  ParamStore store;
  store.add("w", Tensor::glorot(3, 3, rng));
  Tensor x({2, 3});
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = normal(rng);

  auto build_with = [&](bool with_dropout) {
    return [&, with_dropout](Tape& t, ParamStore& s) {
      Rng drop_rng = make_rng(1, 1);
      VarId h = t.linear(t.input(x), t.param(s, "w"));
      if (with_dropout) h = t.dropout(h, 0.5, /*train=*/false, drop_rng);
      return t.sum_all(t.activation(h, kern::Act::kSigmoid));
    };
  };
  auto with_report = grad_check(store, build_with(true));
  auto without_report = grad_check(store, build_with(false));
  CHECK(with_report.max_rel_err == doctest::Approx(without_report.max_rel_err));
  CHECK(with_report.max_rel_err < 1e-6);
}

TEST_CASE("adam leaves parameters unchanged for zero gradient and decay") {
  ParamStore store;
  store.add("w", Tensor({2, 2}, {1.0, -2.0, 3.0, -4.0}));
  Tensor zero_grad({2, 2});
  AdamConfig cfg;
  cfg.lr = 0.1;
  adam_step(store, {{"w", &zero_grad}}, cfg);
  const Tensor& w = store.get("w");
  CHECK(w[0] == 1.0);
  CHECK(w[1] == -2.0);
  CHECK(w[2] == 3.0);
  CHECK(w[3] == -4.0);
}

TEST_CASE("first adam step moves against the gradient sign") {
  ParamStore store;
  store.add("w", Tensor({1, 3}, {0.0, 0.0, 0.0}));
  Tensor grad({1, 3}, {2.0, -0.5, 1e-3});
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step(store, {{"w", &grad}}, cfg);
  const Tensor& w = store.get("w");
  // from zero state the first step is -lr * g/(|g| + eps'), i.e. about
  // -lr*sign(g)
  for (std::int64_t i = 0; i < 3; ++i) {
    const double expected = -cfg.lr * grad[i] / (std::fabs(grad[i]) + cfg.eps);
    CHECK(w[i] == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("adam on a convex quadratic decreases the loss steadily") {
  // loss(w) = 0.5 * sum(c_i * w_i^2)
  const std::vector<double> curv = {1.0, 4.0, 0.25};
  ParamStore store;
  store.add("w", Tensor({1, 3}, {2.0, -1.5, 3.0}));
  AdamConfig cfg;
  cfg.lr = 0.05;
  auto loss_of = [&]() {
    const Tensor& w = store.get("w");
    double l = 0.0;
    for (int i = 0; i < 3; ++i) l += 0.5 * curv[i] * w[i] * w[i];
    return l;
  };
  double prev = loss_of();
  for (int step = 1; step <= 100; ++step) {
    const Tensor& w = store.get("w");
    Tensor grad({1, 3});
    for (int i = 0; i < 3; ++i) grad[i] = curv[i] * w[i];
    adam_step(store, {{"w", &grad}}, cfg);
    const double cur = loss_of();
    if (step > 5) CHECK(cur < prev);
    prev = cur;
  }
  CHECK(prev < 0.05);
}

TEST_CASE("segment max routes gradient to exactly one winner on ties") {
  auto offsets = std::make_shared<const OffsetVec>(OffsetVec{0, 3});
  Tape tape;
  // rows 0 and 2 tie; the first (lowest index) must win
  VarId x = tape.input(Tensor({3, 1}, {5.0, 1.0, 5.0}), true);
  VarId y = tape.segment_max(x, offsets);
  VarId loss = tape.sum_all(y);
  tape.backward(loss);
  CHECK(tape.value(y)[0] == 5.0);
  CHECK(tape.grad(x)[0] == 1.0);
  CHECK(tape.grad(x)[1] == 0.0);
  CHECK(tape.grad(x)[2] == 0.0);
}

TEST_CASE("shape mismatch raises a contract error naming the op") {
  Tape tape;
  VarId a = tape.input(Tensor({2, 2}));
  VarId b = tape.input(Tensor({3, 2}));
  CHECK_THROWS_WITH_AS(tape.add(a, b), "add: shape mismatch", ContractError);
}

TEST_CASE("debug checks trip on non-finite values") {
  Tape::set_debug_checks(true);
  Tape tape;
  VarId x = tape.input(Tensor({1, 1}, {1e308}));
  CHECK_THROWS_AS(tape.hadamard(tape.scale(x, 10.0), x), NumericalError);
  Tape::set_debug_checks(false);
}

TEST_CASE("checkpoint round-trips names, shapes and float32 payload") {
  Rng rng = make_rng(3, 3);
  ParamStore store;
  store.add("layer/W", Tensor::glorot(4, 7, rng));
  store.add("layer/b", Tensor({4}, {0.25, -0.5, 0.125, 2.0}));
  const auto path = std::filesystem::temp_directory_path() / "agml_ckpt_test.bin";
  save_checkpoint(store, path.string());
  ParamStore loaded = load_checkpoint(path.string());
  std::filesystem::remove(path);

  REQUIRE(loaded.contains("layer/W"));
  REQUIRE(loaded.contains("layer/b"));
  CHECK(loaded.get("layer/W").shape() == store.get("layer/W").shape());
  // exact for values representable in float32
  CHECK(loaded.get("layer/b")[0] == 0.25);
  CHECK(loaded.get("layer/b")[3] == 2.0);
  for (std::int64_t i = 0; i < store.get("layer/W").numel(); ++i) {
    const double orig = store.get("layer/W")[i];
    CHECK(std::fabs(loaded.get("layer/W")[i] - orig) <= 1e-7 * std::fabs(orig) + 1e-12);
  }
}
