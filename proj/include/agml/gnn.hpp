#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "agml/autodiff.hpp"
#include "agml/descriptor.hpp"
#include "agml/graph.hpp"
#include "agml/optim.hpp"

namespace agml {

// Graph topology preprocessed for message passing: arcs sorted by (dst, src)
// so incoming neighborhoods are contiguous segments, reverse-arc lookup for
// symmetric attention, and the degree-normalized coefficients with the
// internal self-loop convention (degrees counted as |N(v)|+1, which also
// keeps isolated nodes finite).
struct CompiledTopology {
  std::int64_t num_nodes = 0;
  IndexVecPtr arc_src;
  IndexVecPtr arc_dst;
  OffsetVecPtr in_offsets;
  IndexVecPtr arc_reverse;                 // index of (v,u) for arc (u,v), -1 if absent
  std::shared_ptr<const Tensor> gcn_coeff; // [arcs x 1]
  std::int64_t num_graphs = 1;
  OffsetVecPtr graph_offsets;              // node segments per graph (graph tasks)
};

CompiledTopology compile_topology(const Graph& g);

// A whole dataset flattened into one disjoint-union forward pass: stacked
// features, per-item labels (nodes for node tasks, graphs for graph tasks).
struct GraphBatch {
  CompiledTopology topo;
  Tensor features;
  std::shared_ptr<const std::vector<std::int32_t>> labels;
  std::int64_t num_items = 0;
};

GraphBatch make_batch(const Dataset& ds);

struct TrainMeta {
  std::int64_t epochs_run = 0;
  double best_val = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::int32_t> train_indices;
};

struct TrainedModel {
  ArchitectureDescriptor descriptor;
  ParamStore params;
  TrainMeta meta;
  std::string arch_key;  // canonical descriptor JSON
  std::int64_t input_dim = 0;
  TaskSpec task;

  std::string identity_key() const {
    return arch_key + "#seed=" + std::to_string(meta.seed);
  }
};

// Allocates and initializes all parameters for the descriptor (uniform
// Glorot for weights, zeros for biases). Throws ValidationError when the
// descriptor is inconsistent with the task or input dimension, even if
// search-space validation was bypassed.
TrainedModel assemble_model(const ArchitectureDescriptor& desc,
                            const TaskSpec& task, std::int64_t input_dim,
                            std::uint64_t seed);

struct ForwardOptions {
  bool train_mode = false;
  double dropout = 0.0;
  std::uint64_t dropout_seed = 0;
};

// Builds the full forward graph and returns the logits var
// ([num items x num classes]).
VarId build_forward(Tape& tape, ParamStore& params,
                    const ArchitectureDescriptor& desc, const TaskSpec& task,
                    const CompiledTopology& topo, const Tensor& features,
                    const ForwardOptions& opts);

// Eval-mode softmax probabilities for every item.
Tensor predict_probabilities(TrainedModel& model, const GraphBatch& batch);

double accuracy(const Tensor& scores, const std::vector<std::int32_t>& labels,
                const std::vector<std::int32_t>& indices);

// Metadata for weight inheritance: which layer owns each parameter tensor
// (-1 for the classifier head).
struct ParamInfo {
  std::string name;
  std::vector<std::int64_t> shape;
  int layer = -1;
  bool is_bias = false;
};

std::vector<ParamInfo> enumerate_params(const ArchitectureDescriptor& desc,
                                        const TaskSpec& task,
                                        std::int64_t input_dim);

// Standalone per-arc score, matching the batched engine path. Attention-kind
// scores are the raw (pre-normalization) values; the engine row-softmaxes
// them over each incoming neighborhood.
struct AttentionParams {
  Tensor w_a;       // [d x f] transform applied to both endpoints
  Tensor att_dst;   // [1 x d]
  Tensor att_src;   // [1 x d]
  double gene_scale = 1.0;
};

double aggregation_weight(WeightKind kind, const std::vector<double>& h_i,
                          const std::vector<double>& h_j, double deg_i,
                          double deg_j, const AttentionParams& attn,
                          bool* zero_norm_warning = nullptr);

// Column-wise pooling of node rows into one graph vector.
Tensor readout_matrix(const Tensor& h, Readout kind);

}  // namespace agml
