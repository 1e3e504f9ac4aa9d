#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "agml/tensor.hpp"

namespace agml {

enum class TaskLevel { kNode, kGraph };

struct TaskSpec {
  TaskLevel level = TaskLevel::kNode;
  std::int64_t num_classes = 2;  // metric is accuracy throughout
};

// Immutable node/edge store. Undirected edges are kept as two directed arcs;
// arcs are sorted by (dst, src) so that in_offsets forms a CSR over incoming
// arcs, which is the layout message passing consumes.
struct Graph {
  std::int64_t num_nodes = 0;
  std::vector<std::int32_t> arc_src;
  std::vector<std::int32_t> arc_dst;
  std::vector<std::int64_t> in_offsets;  // size num_nodes+1, segments by dst
  Tensor node_features;                  // [num_nodes x f]
  Tensor arc_features;                   // optional; empty or [num_arcs x fe]
  std::vector<std::int32_t> labels;      // per node; empty when unlabeled
  std::int32_t graph_label = -1;         // per-graph label for graph tasks
  bool directed = false;

  // Loader bookkeeping: the raw row count of the source edge list vs the
  // deduplicated undirected edge count (public distributions disagree on the
  // former, so both are reported rather than guessed at).
  std::int64_t raw_edge_rows = 0;
  std::int64_t undirected_edges = 0;
  std::int64_t dropped_self_loops = 0;

  std::int64_t num_arcs() const { return static_cast<std::int64_t>(arc_src.size()); }
  std::int64_t feature_dim() const {
    return node_features.rank() == 2 ? node_features.dim(1) : 0;
  }
  // Degree in the undirected sense (= in-degree = out-degree here).
  std::int64_t degree(std::int64_t v) const {
    return in_offsets[v + 1] - in_offsets[v];
  }
};

struct DatasetSplit {
  std::vector<std::int32_t> train, val, test;
  int fold_id = -1;
};

// One learning problem: a single graph for node-level tasks, a collection for
// graph-level tasks. The split indexes nodes or graphs accordingly.
struct Dataset {
  TaskSpec task;
  std::vector<Graph> graphs;
  DatasetSplit split;

  const Graph& node_graph() const;
  std::int64_t num_items() const {
    return task.level == TaskLevel::kNode
               ? graphs.at(0).num_nodes
               : static_cast<std::int64_t>(graphs.size());
  }
  std::int32_t item_label(std::int64_t i) const {
    return task.level == TaskLevel::kNode ? graphs.at(0).labels.at(i)
                                          : graphs.at(i).graph_label;
  }
};

// Builds a canonical graph from an undirected edge list: duplicates (in either
// orientation) are merged, self-loops dropped and counted, arcs doubled and
// sorted. Endpoints are validated against num_nodes.
Graph make_undirected_graph(std::int64_t num_nodes,
                            const std::vector<std::pair<std::int32_t, std::int32_t>>& edges,
                            Tensor node_features = Tensor(),
                            std::vector<std::int32_t> labels = {});

// Throws ValidationError when any structural invariant fails.
void validate_graph(const Graph& g);

// Stratified split by label with the given fractions (remainder goes to
// test). Every class present lands in train when counts allow.
DatasetSplit stratified_split(const std::vector<std::int32_t>& labels,
                              double train_frac, double val_frac,
                              std::uint64_t seed);

// k test folds partitioning [0, n); fold sizes differ by at most one. The
// i-th split uses fold i as test, fold (i+1)%k as val, the rest as train.
std::vector<DatasetSplit> split_kfold(std::int64_t n_items, std::int64_t k,
                                      std::uint64_t seed);

// Induced-subgraph result of multi-start random-walk sampling; node_map[i] is
// the parent id of subgraph node i.
struct SampledSubgraph {
  Graph graph;
  std::vector<std::int32_t> node_map;
};

// Unions the visit sets of random walks (walk_len steps each, restarted at
// their origin on dead ends) started from num_starts seed nodes, cycling and
// re-walking until roughly target_ratio of the nodes are covered or walk
// rounds run out; returns the induced subgraph.
SampledSubgraph sample_subgraph_rw(const Graph& g, std::int64_t num_starts,
                                   std::int64_t walk_len, double target_ratio,
                                   std::uint64_t seed);

// Stochastic block model: n nodes in equal blocks, within-block edge
// probability p_in, cross-block p_out; label = block id; features = one-hot
// block signal plus Gaussian noise of scale noise.
Dataset generate_sbm(std::int64_t n, std::int64_t blocks, double p_in,
                     double p_out, std::int64_t f, double noise,
                     std::uint64_t seed);

// Binary graph-classification task: cycle graphs (label 0) vs path graphs
// (label 1) with sizes drawn from [size_min, size_max]; features are one-hot
// degrees.
Dataset generate_cycles_vs_paths(std::int64_t n_graphs, std::int64_t size_min,
                                 std::int64_t size_max, std::uint64_t seed);

}  // namespace agml
