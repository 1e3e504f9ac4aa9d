#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "agml/graph.hpp"

namespace agml {

enum class FeatureOpKind {
  kOnehotDegree,
  kPagerank,
  kEigen,
  kLocalDegreeProfile,
  kNormalizeRows,
  kOnehotId,
  kFilterConstant,
};

struct FeatureOpSpec {
  FeatureOpKind kind = FeatureOpKind::kNormalizeRows;
  std::int64_t max_degree = 10;      // onehot_degree: columns 0..max_degree, clamped
  double damping = 0.85;             // pagerank
  std::int64_t k_eigen = 4;          // eigen: leading eigenvectors, at most 8
  double variance_floor = 1e-12;     // filter_constant
  double tol = 1e-8;
  std::int64_t max_iter = 10000;
};

const char* feature_op_name(FeatureOpKind kind);
FeatureOpKind feature_op_from_name(const std::string& name);

// Generators append columns; normalize_rows rescales rows in place. The graph
// structure is never touched.
Graph generate_features(const Graph& g, const FeatureOpSpec& spec);

// Drops columns with variance below the floor; refuses to drop everything.
Graph select_features(const Graph& g, const FeatureOpSpec& spec);

// Applies generators/selectors in order.
Graph apply_feature_pipeline(const Graph& g, const std::vector<FeatureOpSpec>& pipeline);
Dataset apply_feature_pipeline(const Dataset& ds, const std::vector<FeatureOpSpec>& pipeline);

// PageRank with uniform teleport and uniform redistribution of dangling
// mass; throws NumericalError (with the residual) if max_iter is exhausted.
std::vector<double> pagerank(const Graph& g, double damping, double tol = 1e-10,
                             std::int64_t max_iter = 200);

// Six explainable whole-graph statistics.
struct GraphSignature {
  std::int64_t num_nodes = 0;
  std::int64_t num_edges = 0;
  std::int64_t num_triangles = 0;
  double global_clustering = 0.0;  // 3*triangles / wedges, 0 when no wedges
  std::int64_t max_degree = 0;
  std::int64_t num_components = 0;

  std::vector<double> to_vector() const {
    return {static_cast<double>(num_nodes),   static_cast<double>(num_edges),
            static_cast<double>(num_triangles), global_clustering,
            static_cast<double>(max_degree),  static_cast<double>(num_components)};
  }
};

GraphSignature graph_signature(const Graph& g);

std::int64_t count_triangles(const Graph& g);
std::int64_t count_components(const Graph& g);

}  // namespace agml
