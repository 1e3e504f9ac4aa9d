#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "agml/kernels.hpp"
#include "agml/rng.hpp"
#include "agml/tensor.hpp"

namespace agml {

class ParamStore;

using VarId = std::int32_t;
using IndexVec = std::vector<std::int32_t>;
using IndexVecPtr = std::shared_ptr<const IndexVec>;
using OffsetVec = std::vector<std::int64_t>;
using OffsetVecPtr = std::shared_ptr<const OffsetVec>;

// Reverse-mode tape over a small op vocabulary: dense linear algebra plus the
// gather/scatter and segment reductions message passing needs. A tape is
// built per forward pass and discarded after backward; index buffers are
// shared by pointer so rebuilding is cheap.
//
// Shapes are checked on every op and violations throw ContractError naming
// the op. When debug checks are enabled (AGML_DEBUG_CHECKS=1 or
// set_debug_checks), any non-finite value produced by an op throws
// NumericalError.
class Tape {
 public:
  VarId input(Tensor value, bool requires_grad = false);
  // Registers `name` from the store as a differentiable leaf and remembers
  // the binding for the optimizer.
  VarId param(ParamStore& store, const std::string& name);

  // y = x * w^T (+ bias per row); w is stored [out x in].
  VarId linear(VarId x, VarId w, VarId bias = -1);
  VarId matmul(VarId a, VarId b);  // y = a * b
  VarId add(VarId a, VarId b);
  VarId add_bias(VarId x, VarId bias);
  VarId scale(VarId a, double c);
  VarId hadamard(VarId a, VarId b);
  VarId concat_cols(VarId a, VarId b);
  VarId activation(VarId x, kern::Act act);
  // Train-mode dropout zeroes units with probability p and rescales the
  // survivors by 1/(1-p); eval mode is the identity (no node is emitted).
  VarId dropout(VarId x, double p, bool train_mode, Rng& rng);
  VarId row_softmax(VarId x);
  VarId row_sum(VarId x);        // [n x d] -> [n x 1]
  VarId sum_all(VarId x);        // -> scalar [1]
  // y[i,:] = x[idx[i],:]; idx entries of -1 produce a zero row.
  VarId gather_rows(VarId x, IndexVecPtr idx);
  // Per-row scale: y[i,:] = x[i,:] * s[i]; s is [n x 1].
  VarId scale_rows(VarId x, VarId s);
  // Segment reductions over contiguous row ranges [offsets[s], offsets[s+1]).
  VarId segment_sum(VarId x, OffsetVecPtr offsets);
  VarId segment_mean(VarId x, OffsetVecPtr offsets);
  // Ties go to the first (lowest) row of the segment; empty segments yield 0.
  VarId segment_max(VarId x, OffsetVecPtr offsets);
  // Softmax of a column vector within each segment.
  VarId segment_softmax(VarId x, OffsetVecPtr offsets);
  // Row-wise cosine between paired rows; rows where either side has zero
  // norm yield 0 and are counted in zero_norm_events().
  VarId rowwise_cosine(VarId a, VarId b);
  // Mean cross-entropy of softmax(logits[rows]) against labels[rows].
  VarId cross_entropy(VarId logits, IndexVecPtr rows,
                      std::shared_ptr<const std::vector<std::int32_t>> labels);

  void backward(VarId loss);

  const Tensor& value(VarId v) const { return vars_[v].value; }
  // Zero tensor when the var was never touched by backward.
  const Tensor& grad(VarId v);
  bool requires_grad(VarId v) const { return vars_[v].requires_grad; }

  const std::vector<std::pair<std::string, VarId>>& param_bindings() const {
    return param_bindings_;
  }

  std::int64_t zero_norm_events() const { return zero_norm_events_; }

  static void set_debug_checks(bool on);
  static bool debug_checks();

 private:
  struct Var {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_alloc = false;
  };

  VarId push(Tensor value, bool requires_grad, const char* op);
  Tensor& grad_buf(VarId v);
  void check_exists(VarId v, const char* op) const;

  std::vector<Var> vars_;
  std::vector<std::function<void()>> nodes_;
  std::vector<std::pair<std::string, VarId>> param_bindings_;
  std::int64_t zero_norm_events_ = 0;
  bool backward_run_ = false;
};

}  // namespace agml
