#include "agml/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "agml/error.hpp"
#include "agml/optim.hpp"

namespace agml {

namespace {

std::atomic<bool> g_debug_checks = [] {
  const char* env = std::getenv("AGML_DEBUG_CHECKS");
  return env != nullptr && env[0] == '1';
}();

const kern::Backend& K() { return kern::active_backend(); }

void require(bool ok, const char* op, const char* what) {
  if (!ok) throw ContractError(std::string(op) + ": " + what);
}

}  // namespace

void Tape::set_debug_checks(bool on) { g_debug_checks = on; }
bool Tape::debug_checks() { return g_debug_checks; }

VarId Tape::push(Tensor value, bool requires_grad, const char* op) {
  if (g_debug_checks && !value.all_finite())
    throw NumericalError(std::string(op) + ": non-finite value produced");
  Var v;
  v.value = std::move(value);
  v.requires_grad = requires_grad;
  vars_.push_back(std::move(v));
  return static_cast<VarId>(vars_.size() - 1);
}

Tensor& Tape::grad_buf(VarId v) {
  Var& var = vars_[v];
  if (!var.grad_alloc) {
    var.grad = Tensor(var.value.shape());
    var.grad_alloc = true;
  }
  return var.grad;
}

const Tensor& Tape::grad(VarId v) {
  check_exists(v, "grad");
  return grad_buf(v);
}

void Tape::check_exists(VarId v, const char* op) const {
  if (v < 0 || v >= static_cast<VarId>(vars_.size()))
    throw ContractError(std::string(op) + ": unknown var id");
}

VarId Tape::input(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, "input");
}

VarId Tape::param(ParamStore& store, const std::string& name) {
  VarId id = push(store.get(name), true, "param");
  param_bindings_.emplace_back(name, id);
  return id;
}

VarId Tape::linear(VarId x, VarId w, VarId bias) {
  check_exists(x, "linear");
  check_exists(w, "linear");
  const Tensor& xv = vars_[x].value;
  const Tensor& wv = vars_[w].value;
  require(xv.rank() == 2 && wv.rank() == 2, "linear", "rank-2 inputs required");
  const std::int64_t n = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  require(wv.dim(1) == in, "linear", "weight in-dim mismatch");
  if (bias >= 0) {
    check_exists(bias, "linear");
    require(vars_[bias].value.numel() == out, "linear", "bias size mismatch");
  }

  // Materializing w^T lets gemm_nn skip zero entries of x row-wise, which is
  // the hot path for sparse input features.
  Tensor wt = wv.transposed();
  Tensor y({n, out});
  K().gemm_nn(xv.data(), wt.data(), y.data(), n, out, in, false);
  if (bias >= 0) {
    const Tensor& bv = vars_[bias].value;
    for (std::int64_t r = 0; r < n; ++r)
      K().vadd(y.data() + r * out, bv.data(), out);
  }

  bool rg = vars_[x].requires_grad || vars_[w].requires_grad ||
            (bias >= 0 && vars_[bias].requires_grad);
  VarId yid = push(std::move(y), rg, "linear");
  if (rg) {
    nodes_.push_back([this, x, w, bias, yid, n, in, out]() {
      const Tensor& gy = grad_buf(yid);
      if (vars_[w].requires_grad) {
        // dW = (x^T * gy)^T, accumulated through a temporary so the
        // zero-skip applies to x.
        Tensor dwt({in, out});
        K().gemm_tn(vars_[x].value.data(), gy.data(), dwt.data(), in, out, n,
                    false);
        Tensor& gw = grad_buf(w);
        for (std::int64_t i = 0; i < in; ++i)
          for (std::int64_t o = 0; o < out; ++o)
            gw.at(o, i) += dwt.at(i, o);
      }
      if (vars_[x].requires_grad) {
        K().gemm_nn(gy.data(), vars_[w].value.data(), grad_buf(x).data(), n,
                    in, out, true);
      }
      if (bias >= 0 && vars_[bias].requires_grad) {
        Tensor& gb = grad_buf(bias);
        for (std::int64_t r = 0; r < n; ++r)
          K().vadd(gb.data(), gy.data() + r * out, out);
      }
    });
  }
  return yid;
}

VarId Tape::matmul(VarId a, VarId b) {
  check_exists(a, "matmul");
  check_exists(b, "matmul");
  const Tensor& av = vars_[a].value;
  const Tensor& bv = vars_[b].value;
  require(av.rank() == 2 && bv.rank() == 2, "matmul", "rank-2 inputs required");
  require(av.dim(1) == bv.dim(0), "matmul", "inner dimension mismatch");
  const std::int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor y({m, n});
  K().gemm_nn(av.data(), bv.data(), y.data(), m, n, k, false);
  bool rg = vars_[a].requires_grad || vars_[b].requires_grad;
  VarId yid = push(std::move(y), rg, "matmul");
  if (rg) {
    nodes_.push_back([this, a, b, yid, m, n, k]() {
      const Tensor& gy = grad_buf(yid);
      if (vars_[a].requires_grad) {
        // dA = gy * B^T
        K().gemm_nt(gy.data(), vars_[b].value.data(), grad_buf(a).data(), m, k,
                    n, true);
      }
      if (vars_[b].requires_grad) {
        // dB = A^T * gy
        K().gemm_tn(vars_[a].value.data(), gy.data(), grad_buf(b).data(), k, n,
                    m, true);
      }
    });
  }
  return yid;
}

VarId Tape::add(VarId a, VarId b) {
  check_exists(a, "add");
  check_exists(b, "add");
  const Tensor& av = vars_[a].value;
  const Tensor& bv = vars_[b].value;
  require(av.same_shape(bv), "add", "shape mismatch");
  Tensor y = av;
  K().vadd(y.data(), bv.data(), y.numel());
  bool rg = vars_[a].requires_grad || vars_[b].requires_grad;
  VarId yid = push(std::move(y), rg, "add");
  if (rg) {
    nodes_.push_back([this, a, b, yid]() {
      const Tensor& gy = grad_buf(yid);
      if (vars_[a].requires_grad) K().vadd(grad_buf(a).data(), gy.data(), gy.numel());
      if (vars_[b].requires_grad) K().vadd(grad_buf(b).data(), gy.data(), gy.numel());
    });
  }
  return yid;
}

VarId Tape::add_bias(VarId x, VarId bias) {
  check_exists(x, "add_bias");
  check_exists(bias, "add_bias");
  const Tensor& xv = vars_[x].value;
  const Tensor& bv = vars_[bias].value;
  require(xv.rank() == 2 && bv.numel() == xv.dim(1), "add_bias",
          "bias size mismatch");
  Tensor y = xv;
  const std::int64_t n = xv.dim(0), d = xv.dim(1);
  for (std::int64_t r = 0; r < n; ++r) K().vadd(y.data() + r * d, bv.data(), d);
  bool rg = vars_[x].requires_grad || vars_[bias].requires_grad;
  VarId yid = push(std::move(y), rg, "add_bias");
  if (rg) {
    nodes_.push_back([this, x, bias, yid, n, d]() {
      const Tensor& gy = grad_buf(yid);
      if (vars_[x].requires_grad) K().vadd(grad_buf(x).data(), gy.data(), gy.numel());
      if (vars_[bias].requires_grad) {
        Tensor& gb = grad_buf(bias);
        for (std::int64_t r = 0; r < n; ++r)
          K().vadd(gb.data(), gy.data() + r * d, d);
      }
    });
  }
  return yid;
}

VarId Tape::scale(VarId a, double c) {
  check_exists(a, "scale");
  Tensor y = vars_[a].value;
  K().vscale(y.data(), c, y.numel());
  bool rg = vars_[a].requires_grad;
  VarId yid = push(std::move(y), rg, "scale");
  if (rg) {
    nodes_.push_back([this, a, yid, c]() {
      K().vaxpy(grad_buf(a).data(), grad_buf(yid).data(), c,
                vars_[a].value.numel());
    });
  }
  return yid;
}

VarId Tape::hadamard(VarId a, VarId b) {
  check_exists(a, "hadamard");
  check_exists(b, "hadamard");
  const Tensor& av = vars_[a].value;
  const Tensor& bv = vars_[b].value;
  require(av.same_shape(bv), "hadamard", "shape mismatch");
  Tensor y(av.shape());
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = av[i] * bv[i];
  bool rg = vars_[a].requires_grad || vars_[b].requires_grad;
  VarId yid = push(std::move(y), rg, "hadamard");
  if (rg) {
    nodes_.push_back([this, a, b, yid]() {
      const Tensor& gy = grad_buf(yid);
      if (vars_[a].requires_grad) {
        Tensor& ga = grad_buf(a);
        const Tensor& bv2 = vars_[b].value;
        for (std::int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i] * bv2[i];
      }
      if (vars_[b].requires_grad) {
        Tensor& gb = grad_buf(b);
        const Tensor& av2 = vars_[a].value;
        for (std::int64_t i = 0; i < gy.numel(); ++i) gb[i] += gy[i] * av2[i];
      }
    });
  }
  return yid;
}

VarId Tape::concat_cols(VarId a, VarId b) {
  check_exists(a, "concat_cols");
  check_exists(b, "concat_cols");
  const Tensor& av = vars_[a].value;
  const Tensor& bv = vars_[b].value;
  require(av.rank() == 2 && bv.rank() == 2 && av.dim(0) == bv.dim(0),
          "concat_cols", "row count mismatch");
  const std::int64_t n = av.dim(0), da = av.dim(1), db = bv.dim(1);
  Tensor y({n, da + db});
  for (std::int64_t r = 0; r < n; ++r) {
    std::copy(av.data() + r * da, av.data() + (r + 1) * da,
              y.data() + r * (da + db));
    std::copy(bv.data() + r * db, bv.data() + (r + 1) * db,
              y.data() + r * (da + db) + da);
  }
  bool rg = vars_[a].requires_grad || vars_[b].requires_grad;
  VarId yid = push(std::move(y), rg, "concat_cols");
  if (rg) {
    nodes_.push_back([this, a, b, yid, n, da, db]() {
      const Tensor& gy = grad_buf(yid);
      if (vars_[a].requires_grad) {
        Tensor& ga = grad_buf(a);
        for (std::int64_t r = 0; r < n; ++r)
          K().vadd(ga.data() + r * da, gy.data() + r * (da + db), da);
      }
      if (vars_[b].requires_grad) {
        Tensor& gb = grad_buf(b);
        for (std::int64_t r = 0; r < n; ++r)
          K().vadd(gb.data() + r * db, gy.data() + r * (da + db) + da, db);
      }
    });
  }
  return yid;
}

VarId Tape::activation(VarId x, kern::Act act) {
  check_exists(x, "activation");
  const Tensor& xv = vars_[x].value;
  Tensor y(xv.shape());
  K().act_fwd(act, xv.data(), y.data(), xv.numel());
  bool rg = vars_[x].requires_grad;
  VarId yid = push(std::move(y), rg, "activation");
  if (rg) {
    nodes_.push_back([this, x, yid, act]() {
      K().act_bwd(act, vars_[x].value.data(), grad_buf(yid).data(),
                  grad_buf(x).data(), vars_[x].value.numel());
    });
  }
  return yid;
}

VarId Tape::dropout(VarId x, double p, bool train_mode, Rng& rng) {
  check_exists(x, "dropout");
  require(p >= 0.0 && p < 1.0, "dropout", "p must be in [0,1)");
  if (!train_mode || p == 0.0) return x;  // identity in eval mode
  const Tensor& xv = vars_[x].value;
  auto mask = std::make_shared<std::vector<double>>(xv.numel());
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor y(xv.shape());
  for (std::int64_t i = 0; i < xv.numel(); ++i) {
    const double m = uniform01(rng) >= p ? keep_scale : 0.0;
    (*mask)[i] = m;
    y[i] = xv[i] * m;
  }
  bool rg = vars_[x].requires_grad;
  VarId yid = push(std::move(y), rg, "dropout");
  if (rg) {
    nodes_.push_back([this, x, yid, mask]() {
      const Tensor& gy = grad_buf(yid);
      Tensor& gx = grad_buf(x);
      for (std::int64_t i = 0; i < gy.numel(); ++i)
        gx[i] += gy[i] * (*mask)[i];
    });
  }
  return yid;
}

VarId Tape::row_softmax(VarId x) {
  check_exists(x, "row_softmax");
  const Tensor& xv = vars_[x].value;
  require(xv.rank() == 2, "row_softmax", "rank-2 input required");
  const std::int64_t n = xv.dim(0), d = xv.dim(1);
  Tensor y({n, d});
  for (std::int64_t r = 0; r < n; ++r) {
    const double* row = xv.data() + r * d;
    double* out = y.data() + r * d;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t c = 0; c < d; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::int64_t c = 0; c < d; ++c) {
      out[c] = std::exp(row[c] - mx);
      sum += out[c];
    }
    for (std::int64_t c = 0; c < d; ++c) out[c] /= sum;
  }
  bool rg = vars_[x].requires_grad;
  VarId yid = push(std::move(y), rg, "row_softmax");
  if (rg) {
    nodes_.push_back([this, x, yid, n, d]() {
      const Tensor& yv = vars_[yid].value;
      const Tensor& gy = grad_buf(yid);
      Tensor& gx = grad_buf(x);
      for (std::int64_t r = 0; r < n; ++r) {
        const double* yr = yv.data() + r * d;
        const double* gr = gy.data() + r * d;
        double dot = 0.0;
        for (std::int64_t c = 0; c < d; ++c) dot += yr[c] * gr[c];
        double* gxr = gx.data() + r * d;
        for (std::int64_t c = 0; c < d; ++c) gxr[c] += yr[c] * (gr[c] - dot);
      }
    });
  }
  return yid;
}

VarId Tape::row_sum(VarId x) {
  check_exists(x, "row_sum");
  const Tensor& xv = vars_[x].value;
  require(xv.rank() == 2, "row_sum", "rank-2 input required");
  const std::int64_t n = xv.dim(0), d = xv.dim(1);
  Tensor y({n, 1});
  for (std::int64_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::int64_t c = 0; c < d; ++c) acc += xv.at(r, c);
    y[r] = acc;
  }
  bool rg = vars_[x].requires_grad;
  VarId yid = push(std::move(y), rg, "row_sum");
  if (rg) {
    nodes_.push_back([this, x, yid, n, d]() {
      const Tensor& gy = grad_buf(yid);
      Tensor& gx = grad_buf(x);
      for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t c = 0; c < d; ++c) gx.at(r, c) += gy[r];
    });
  }
  return yid;
}

VarId Tape::sum_all(VarId x) {
  check_exists(x, "sum_all");
  const Tensor& xv = vars_[x].value;
  double acc = 0.0;
  for (std::int64_t i = 0; i < xv.numel(); ++i) acc += xv[i];
  bool rg = vars_[x].requires_grad;
  VarId yid = push(Tensor({1}, {acc}), rg, "sum_all");
  if (rg) {
    nodes_.push_back([this, x, yid]() {
      const double g = grad_buf(yid)[0];
      Tensor& gx = grad_buf(x);
      for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
    });
  }
  return yid;
}

VarId Tape::gather_rows(VarId x, IndexVecPtr idx) {
  check_exists(x, "gather_rows");
  require(idx != nullptr, "gather_rows", "null index vector");
  const Tensor& xv = vars_[x].value;
  require(xv.rank() == 2, "gather_rows", "rank-2 input required");
  const std::int64_t n = static_cast<std::int64_t>(idx->size());
  const std::int64_t d = xv.dim(1), src_rows = xv.dim(0);
  Tensor y({n, d});
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int32_t r = (*idx)[i];
    if (r < 0) continue;  // stays zero
    require(r < src_rows, "gather_rows", "index out of range");
    std::copy(xv.data() + r * d, xv.data() + (r + 1) * d, y.data() + i * d);
  }
  bool rg = vars_[x].requires_grad;
  VarId yid = push(std::move(y), rg, "gather_rows");
  if (rg) {
    nodes_.push_back([this, x, yid, idx, n, d]() {
      const Tensor& gy = grad_buf(yid);
      Tensor& gx = grad_buf(x);
      for (std::int64_t i = 0; i < n; ++i) {
        const std::int32_t r = (*idx)[i];
        if (r < 0) continue;
        K().vadd(gx.data() + r * d, gy.data() + i * d, d);
      }
    });
  }
  return yid;
}

VarId Tape::scale_rows(VarId x, VarId s) {
  check_exists(x, "scale_rows");
  check_exists(s, "scale_rows");
  const Tensor& xv = vars_[x].value;
  const Tensor& sv = vars_[s].value;
  require(xv.rank() == 2, "scale_rows", "rank-2 input required");
  require(sv.numel() == xv.dim(0), "scale_rows", "scale length mismatch");
  const std::int64_t n = xv.dim(0), d = xv.dim(1);
  Tensor y({n, d});
  for (std::int64_t r = 0; r < n; ++r) {
    const double sr = sv[r];
    for (std::int64_t c = 0; c < d; ++c) y.at(r, c) = xv.at(r, c) * sr;
  }
  bool rg = vars_[x].requires_grad || vars_[s].requires_grad;
  VarId yid = push(std::move(y), rg, "scale_rows");
  if (rg) {
    nodes_.push_back([this, x, s, yid, n, d]() {
      const Tensor& gy = grad_buf(yid);
      if (vars_[x].requires_grad) {
        Tensor& gx = grad_buf(x);
        const Tensor& sv2 = vars_[s].value;
        for (std::int64_t r = 0; r < n; ++r)
          K().vaxpy(gx.data() + r * d, gy.data() + r * d, sv2[r], d);
      }
      if (vars_[s].requires_grad) {
        Tensor& gs = grad_buf(s);
        const Tensor& xv2 = vars_[x].value;
        for (std::int64_t r = 0; r < n; ++r) {
          double acc = 0.0;
          for (std::int64_t c = 0; c < d; ++c)
            acc += gy.at(r, c) * xv2.at(r, c);
          gs[r] += acc;
        }
      }
    });
  }
  return yid;
}

namespace {

void check_offsets(const OffsetVec& off, std::int64_t rows, const char* op) {
  if (off.empty() || off.front() != 0 || off.back() != rows)
    throw ContractError(std::string(op) + ": bad segment offsets");
  for (std::size_t i = 1; i < off.size(); ++i)
    if (off[i] < off[i - 1])
      throw ContractError(std::string(op) + ": offsets not monotone");
}

}  // namespace

VarId Tape::segment_sum(VarId x, OffsetVecPtr offsets) {
  check_exists(x, "segment_sum");
  const Tensor& xv = vars_[x].value;
  require(xv.rank() == 2, "segment_sum", "rank-2 input required");
  check_offsets(*offsets, xv.dim(0), "segment_sum");
  const std::int64_t segs = static_cast<std::int64_t>(offsets->size()) - 1;
  const std::int64_t d = xv.dim(1);
  Tensor y({segs, d});
  for (std::int64_t s = 0; s < segs; ++s)
    for (std::int64_t r = (*offsets)[s]; r < (*offsets)[s + 1]; ++r)
      K().vadd(y.data() + s * d, xv.data() + r * d, d);
  bool rg = vars_[x].requires_grad;
  VarId yid = push(std::move(y), rg, "segment_sum");
  if (rg) {
    nodes_.push_back([this, x, yid, offsets, segs, d]() {
      const Tensor& gy = grad_buf(yid);
      Tensor& gx = grad_buf(x);
      for (std::int64_t s = 0; s < segs; ++s)
        for (std::int64_t r = (*offsets)[s]; r < (*offsets)[s + 1]; ++r)
          K().vadd(gx.data() + r * d, gy.data() + s * d, d);
    });
  }
  return yid;
}

VarId Tape::segment_mean(VarId x, OffsetVecPtr offsets) {
  check_exists(x, "segment_mean");
  const Tensor& xv = vars_[x].value;
  require(xv.rank() == 2, "segment_mean", "rank-2 input required");
  check_offsets(*offsets, xv.dim(0), "segment_mean");
  const std::int64_t segs = static_cast<std::int64_t>(offsets->size()) - 1;
  const std::int64_t d = xv.dim(1);
  Tensor y({segs, d});
  for (std::int64_t s = 0; s < segs; ++s) {
    const std::int64_t cnt = (*offsets)[s + 1] - (*offsets)[s];
    if (cnt == 0) continue;
    for (std::int64_t r = (*offsets)[s]; r < (*offsets)[s + 1]; ++r)
      K().vadd(y.data() + s * d, xv.data() + r * d, d);
    K().vscale(y.data() + s * d, 1.0 / static_cast<double>(cnt), d);
  }
  bool rg = vars_[x].requires_grad;
  VarId yid = push(std::move(y), rg, "segment_mean");
  if (rg) {
    nodes_.push_back([this, x, yid, offsets, segs, d]() {
      const Tensor& gy = grad_buf(yid);
      Tensor& gx = grad_buf(x);
      for (std::int64_t s = 0; s < segs; ++s) {
        const std::int64_t cnt = (*offsets)[s + 1] - (*offsets)[s];
        if (cnt == 0) continue;
        const double inv = 1.0 / static_cast<double>(cnt);
        for (std::int64_t r = (*offsets)[s]; r < (*offsets)[s + 1]; ++r)
          K().vaxpy(gx.data() + r * d, gy.data() + s * d, inv, d);
      }
    });
  }
  return yid;
}

VarId Tape::segment_max(VarId x, OffsetVecPtr offsets) {
  check_exists(x, "segment_max");
  const Tensor& xv = vars_[x].value;
  require(xv.rank() == 2, "segment_max", "rank-2 input required");
  check_offsets(*offsets, xv.dim(0), "segment_max");
  const std::int64_t segs = static_cast<std::int64_t>(offsets->size()) - 1;
  const std::int64_t d = xv.dim(1);
  Tensor y({segs, d});
  // Winner row per (segment, column); ties go to the first row in segment
  // order so the subgradient is deterministic.
  auto argmax = std::make_shared<std::vector<std::int64_t>>(
      static_cast<std::size_t>(segs * d), -1);
  for (std::int64_t s = 0; s < segs; ++s) {
    if ((*offsets)[s] == (*offsets)[s + 1]) continue;  // empty -> zeros
    for (std::int64_t c = 0; c < d; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      std::int64_t best_row = -1;
      for (std::int64_t r = (*offsets)[s]; r < (*offsets)[s + 1]; ++r) {
        const double v = xv.at(r, c);
        if (v > best) {
          best = v;
          best_row = r;
        }
      }
      y.at(s, c) = best;
      (*argmax)[s * d + c] = best_row;
    }
  }
  bool rg = vars_[x].requires_grad;
  VarId yid = push(std::move(y), rg, "segment_max");
  if (rg) {
    nodes_.push_back([this, x, yid, argmax, segs, d]() {
      const Tensor& gy = grad_buf(yid);
      Tensor& gx = grad_buf(x);
      for (std::int64_t s = 0; s < segs; ++s)
        for (std::int64_t c = 0; c < d; ++c) {
          const std::int64_t r = (*argmax)[s * d + c];
          if (r >= 0) gx.at(r, c) += gy.at(s, c);
        }
    });
  }
  return yid;
}

VarId Tape::segment_softmax(VarId x, OffsetVecPtr offsets) {
  check_exists(x, "segment_softmax");
  const Tensor& xv = vars_[x].value;
  require(xv.rank() == 2 && xv.dim(1) == 1, "segment_softmax",
          "column vector required");
  check_offsets(*offsets, xv.dim(0), "segment_softmax");
  const std::int64_t segs = static_cast<std::int64_t>(offsets->size()) - 1;
  Tensor y({xv.dim(0), 1});
  for (std::int64_t s = 0; s < segs; ++s) {
    const std::int64_t lo = (*offsets)[s], hi = (*offsets)[s + 1];
    if (lo == hi) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t r = lo; r < hi; ++r) mx = std::max(mx, xv[r]);
    double sum = 0.0;
    for (std::int64_t r = lo; r < hi; ++r) {
      y[r] = std::exp(xv[r] - mx);
      sum += y[r];
    }
    for (std::int64_t r = lo; r < hi; ++r) y[r] /= sum;
  }
  bool rg = vars_[x].requires_grad;
  VarId yid = push(std::move(y), rg, "segment_softmax");
  if (rg) {
    nodes_.push_back([this, x, yid, offsets, segs]() {
      const Tensor& yv = vars_[yid].value;
      const Tensor& gy = grad_buf(yid);
      Tensor& gx = grad_buf(x);
      for (std::int64_t s = 0; s < segs; ++s) {
        const std::int64_t lo = (*offsets)[s], hi = (*offsets)[s + 1];
        double dot = 0.0;
        for (std::int64_t r = lo; r < hi; ++r) dot += yv[r] * gy[r];
        for (std::int64_t r = lo; r < hi; ++r)
          gx[r] += yv[r] * (gy[r] - dot);
      }
    });
  }
  return yid;
}

VarId Tape::rowwise_cosine(VarId a, VarId b) {
  check_exists(a, "rowwise_cosine");
  check_exists(b, "rowwise_cosine");
  const Tensor& av = vars_[a].value;
  const Tensor& bv = vars_[b].value;
  require(av.same_shape(bv) && av.rank() == 2, "rowwise_cosine",
          "matching rank-2 inputs required");
  const std::int64_t n = av.dim(0), d = av.dim(1);
  Tensor y({n, 1});
  auto live = std::make_shared<std::vector<char>>(static_cast<std::size_t>(n), 0);
  for (std::int64_t r = 0; r < n; ++r) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::int64_t c = 0; c < d; ++c) {
      const double x = av.at(r, c), z = bv.at(r, c);
      dot += x * z;
      na += x * x;
      nb += z * z;
    }
    if (na == 0.0 || nb == 0.0) {
      ++zero_norm_events_;  // cosine undefined; emit 0
      continue;
    }
    (*live)[r] = 1;
    y[r] = dot / (std::sqrt(na) * std::sqrt(nb));
  }
  bool rg = vars_[a].requires_grad || vars_[b].requires_grad;
  VarId yid = push(std::move(y), rg, "rowwise_cosine");
  if (rg) {
    nodes_.push_back([this, a, b, yid, live, n, d]() {
      const Tensor& av2 = vars_[a].value;
      const Tensor& bv2 = vars_[b].value;
      const Tensor& yv = vars_[yid].value;
      const Tensor& gy = grad_buf(yid);
      for (std::int64_t r = 0; r < n; ++r) {
        if (!(*live)[r] || gy[r] == 0.0) continue;
        double na = 0.0, nb = 0.0;
        for (std::int64_t c = 0; c < d; ++c) {
          na += av2.at(r, c) * av2.at(r, c);
          nb += bv2.at(r, c) * bv2.at(r, c);
        }
        const double sna = std::sqrt(na), snb = std::sqrt(nb);
        const double g = gy[r], cosv = yv[r];
        if (vars_[a].requires_grad) {
          Tensor& ga = grad_buf(a);
          for (std::int64_t c = 0; c < d; ++c)
            ga.at(r, c) +=
                g * (bv2.at(r, c) / (sna * snb) - cosv * av2.at(r, c) / na);
        }
        if (vars_[b].requires_grad) {
          Tensor& gb = grad_buf(b);
          for (std::int64_t c = 0; c < d; ++c)
            gb.at(r, c) +=
                g * (av2.at(r, c) / (sna * snb) - cosv * bv2.at(r, c) / nb);
        }
      }
    });
  }
  return yid;
}

VarId Tape::cross_entropy(
    VarId logits, IndexVecPtr rows,
    std::shared_ptr<const std::vector<std::int32_t>> labels) {
  check_exists(logits, "cross_entropy");
  require(rows != nullptr && !rows->empty(), "cross_entropy",
          "non-empty row subset required");
  const Tensor& lv = vars_[logits].value;
  require(lv.rank() == 2, "cross_entropy", "rank-2 logits required");
  const std::int64_t k = lv.dim(1);
  const std::int64_t m = static_cast<std::int64_t>(rows->size());
  double loss = 0.0;
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int32_t r = (*rows)[i];
    require(r >= 0 && r < lv.dim(0), "cross_entropy", "row index out of range");
    const std::int32_t label = (*labels)[r];
    require(label >= 0 && label < k, "cross_entropy", "label out of range");
    const double* row = lv.data() + static_cast<std::int64_t>(r) * k;
    double mx = row[0];
    for (std::int64_t c = 1; c < k; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::int64_t c = 0; c < k; ++c) sum += std::exp(row[c] - mx);
    loss += mx + std::log(sum) - row[label];
  }
  loss /= static_cast<double>(m);
  bool rg = vars_[logits].requires_grad;
  VarId yid = push(Tensor({1}, {loss}), rg, "cross_entropy");
  if (rg) {
    nodes_.push_back([this, logits, yid, rows, labels, k, m]() {
      const double g = grad_buf(yid)[0] / static_cast<double>(m);
      const Tensor& lv2 = vars_[logits].value;
      Tensor& gl = grad_buf(logits);
      for (std::int64_t i = 0; i < m; ++i) {
        const std::int32_t r = (*rows)[i];
        const std::int32_t label = (*labels)[r];
        const double* row = lv2.data() + static_cast<std::int64_t>(r) * k;
        double mx = row[0];
        for (std::int64_t c = 1; c < k; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (std::int64_t c = 0; c < k; ++c) sum += std::exp(row[c] - mx);
        double* grow = gl.data() + static_cast<std::int64_t>(r) * k;
        for (std::int64_t c = 0; c < k; ++c) {
          const double p = std::exp(row[c] - mx) / sum;
          grow[c] += g * (p - (c == label ? 1.0 : 0.0));
        }
      }
    });
  }
  return yid;
}

void Tape::backward(VarId loss) {
  check_exists(loss, "backward");
  if (backward_run_) throw ContractError("backward: already run on this tape");
  backward_run_ = true;
  require(vars_[loss].value.numel() == 1, "backward", "loss must be scalar");
  grad_buf(loss)[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

}  // namespace agml
