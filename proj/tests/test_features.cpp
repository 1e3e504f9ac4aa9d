#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>
#include <utility>

#include "agml/error.hpp"
#include "agml/features.hpp"
#include "agml/graph.hpp"
#include "agml/rng.hpp"

using namespace agml;

namespace {

// Dense PageRank oracle: explicit power iteration on the full transition
// matrix, independent of the production sparse path.
std::vector<double> dense_pagerank_oracle(const Graph& g, double damping) {
  const auto n = static_cast<std::size_t>(g.num_nodes);
  std::vector<std::vector<double>> p(n, std::vector<double>(n, 0.0));
  for (std::size_t col = 0; col < n; ++col) {
    const auto deg = g.degree(static_cast<std::int64_t>(col));
    if (deg == 0) {
      for (std::size_t row = 0; row < n; ++row) p[row][col] = 1.0 / n;
      continue;
    }
    for (std::int64_t a = g.in_offsets[col]; a < g.in_offsets[col + 1]; ++a)
      p[g.arc_src[a]][col] = 1.0 / static_cast<double>(deg);
  }
  // note: p[row][col] = prob of moving col -> row after transpose semantics
  std::vector<double> r(n, 1.0 / n), next(n);
  for (int it = 0; it < 10000; ++it) {
    // r' = (1-d)/n + d * P r with column-stochastic P
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t jx = 0; jx < n; ++jx) acc += p[i][jx] * r[jx];
      next[i] = (1.0 - damping) / n + damping * acc;
    }
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) delta += std::fabs(next[i] - r[i]);
    r = next;
    if (delta < 1e-14) break;
  }
  return r;
}

Graph random_er_graph(std::int64_t n, double p, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0xE2);
  std::vector<std::pair<std::int32_t, std::int32_t>> edges;
  for (std::int32_t u = 0; u < n; ++u)
    for (std::int32_t v = u + 1; v < n; ++v)
      if (uniform01(rng) < p) edges.emplace_back(u, v);
  return make_undirected_graph(n, edges);
}

std::int64_t brute_force_triangles(const Graph& g) {
  std::set<std::pair<std::int32_t, std::int32_t>> arcs;
  for (std::size_t a = 0; a < g.arc_src.size(); ++a)
    arcs.emplace(g.arc_src[a], g.arc_dst[a]);
  std::int64_t count = 0;
  for (std::int32_t u = 0; u < g.num_nodes; ++u)
    for (std::int32_t v = u + 1; v < g.num_nodes; ++v)
      for (std::int32_t w = v + 1; w < g.num_nodes; ++w)
        if (arcs.count({u, v}) && arcs.count({v, w}) && arcs.count({u, w}))
          ++count;
  return count;
}

}  // namespace

TEST_CASE("pagerank on a 3-cycle is uniform") {
  Graph g = make_undirected_graph(3, {{0, 1}, {1, 2}, {2, 0}});
  auto pr = pagerank(g, 0.85);
  for (auto v : pr) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
}

TEST_CASE("pagerank on a star matches the dense oracle") {
  Graph g = make_undirected_graph(4, {{0, 1}, {0, 2}, {0, 3}});
  auto pr = pagerank(g, 0.85);
  auto oracle = dense_pagerank_oracle(g, 0.85);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(std::fabs(pr[i] - oracle[i]) < 1e-8);
  CHECK(pr[0] > pr[1]);
}

TEST_CASE("pagerank sums to one and stays non-negative") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Graph g = random_er_graph(25, 0.15, seed);
    auto pr = pagerank(g, 0.85);
    const double sum = std::accumulate(pr.begin(), pr.end(), 0.0);
    CHECK(std::fabs(sum - 1.0) < 1e-8);
    for (auto v : pr) CHECK(v >= 0.0);
  }
}

TEST_CASE("onehot degree appends the expected indicator block") {
  // node 1 in a path 0-1-2 has degree 2; with max_degree 3 the block is
  // [0,0,1,0]
  Graph g = make_undirected_graph(3, {{0, 1}, {1, 2}});
  FeatureOpSpec spec;
  spec.kind = FeatureOpKind::kOnehotDegree;
  spec.max_degree = 3;
  Graph out = generate_features(g, spec);
  CHECK(out.feature_dim() == 4);
  CHECK(out.node_features.at(1, 0) == 0.0);
  CHECK(out.node_features.at(1, 1) == 0.0);
  CHECK(out.node_features.at(1, 2) == 1.0);
  CHECK(out.node_features.at(1, 3) == 0.0);
  CHECK(out.node_features.at(0, 1) == 1.0);
  CHECK(out.num_arcs() == g.num_arcs());
}

TEST_CASE("eigen features are unit-norm and mutually orthogonal") {
  Graph g = random_er_graph(30, 0.2, 3);
  FeatureOpSpec spec;
  spec.kind = FeatureOpKind::kEigen;
  spec.k_eigen = 4;
  Graph out = generate_features(g, spec);
  REQUIRE(out.feature_dim() == 4);
  for (std::int64_t a = 0; a < 4; ++a) {
    double norm = 0.0;
    for (std::int64_t v = 0; v < 30; ++v)
      norm += out.node_features.at(v, a) * out.node_features.at(v, a);
    CHECK(std::fabs(std::sqrt(norm) - 1.0) < 1e-6);
    for (std::int64_t b = a + 1; b < 4; ++b) {
      double dot = 0.0;
      for (std::int64_t v = 0; v < 30; ++v)
        dot += out.node_features.at(v, a) * out.node_features.at(v, b);
      CHECK(std::fabs(dot) < 1e-6);
    }
  }
  FeatureOpSpec too_many = spec;
  too_many.k_eigen = 31;
  CHECK_THROWS_AS(generate_features(g, too_many), ContractError);
}

TEST_CASE("local degree profile emits five columns") {
  Graph g = make_undirected_graph(4, {{0, 1}, {0, 2}, {0, 3}});
  FeatureOpSpec spec;
  spec.kind = FeatureOpKind::kLocalDegreeProfile;
  Graph out = generate_features(g, spec);
  REQUIRE(out.feature_dim() == 5);
  // center: degree 3, all neighbors degree 1
  CHECK(out.node_features.at(0, 0) == 3.0);
  CHECK(out.node_features.at(0, 1) == 1.0);
  CHECK(out.node_features.at(0, 2) == 1.0);
  CHECK(out.node_features.at(0, 3) == 1.0);
  CHECK(out.node_features.at(0, 4) == 0.0);
  // leaf: degree 1, single neighbor of degree 3
  CHECK(out.node_features.at(1, 0) == 1.0);
  CHECK(out.node_features.at(1, 3) == 3.0);
}

TEST_CASE("filter_constant drops constant columns and only those") {
  Tensor feats({3, 2}, {1.0, 0.1, 1.0, 0.7, 1.0, 0.9});
  Graph g = make_undirected_graph(3, {{0, 1}}, feats);
  FeatureOpSpec spec;
  spec.kind = FeatureOpKind::kFilterConstant;
  spec.variance_floor = 1e-12;
  Graph out = select_features(g, spec);
  REQUIRE(out.feature_dim() == 1);
  CHECK(out.node_features.at(0, 0) == 0.1);

  // no constant columns: identity
  Graph same = select_features(out, spec);
  CHECK(same.feature_dim() == 1);

  // all columns constant: selection error
  Tensor flat({3, 1}, {2.0, 2.0, 2.0});
  Graph g2 = make_undirected_graph(3, {{0, 1}}, flat);
  CHECK_THROWS_AS(select_features(g2, spec), ValidationError);
}

TEST_CASE("column variance agrees with a two-pass oracle") {
  Rng rng = make_rng(31, 0);
  const std::int64_t n = 50;
  Tensor feats({n, 3});
  for (std::int64_t i = 0; i < feats.numel(); ++i) feats[i] = normal(rng);
  // column 2 nearly constant but above floor
  for (std::int64_t r = 0; r < n; ++r) feats.at(r, 2) = 5.0 + 1e-5 * feats.at(r, 2);
  double mean = 0.0;
  for (std::int64_t r = 0; r < n; ++r) mean += feats.at(r, 2);
  mean /= n;
  double var = 0.0;
  for (std::int64_t r = 0; r < n; ++r) {
    const double d = feats.at(r, 2) - mean;
    var += d * d;
  }
  var /= n;

  Graph g = make_undirected_graph(n, {{0, 1}}, feats);
  FeatureOpSpec spec;
  spec.kind = FeatureOpKind::kFilterConstant;
  spec.variance_floor = var * (1.0 + 1e-12);
  Graph dropped = select_features(g, spec);
  CHECK(dropped.feature_dim() == 2);  // boundary: strictly-below floor drops
  spec.variance_floor = var * (1.0 - 1e-9);
  Graph kept = select_features(g, spec);
  CHECK(kept.feature_dim() == 3);
}

TEST_CASE("normalize_rows rescales to unit l1 mass") {
  Tensor feats({2, 3}, {1.0, 1.0, 2.0, 0.0, 0.0, 0.0});
  Graph g = make_undirected_graph(2, {{0, 1}}, feats);
  FeatureOpSpec spec;
  spec.kind = FeatureOpKind::kNormalizeRows;
  Graph out = generate_features(g, spec);
  CHECK(out.node_features.at(0, 0) == doctest::Approx(0.25));
  CHECK(out.node_features.at(0, 2) == doctest::Approx(0.5));
  CHECK(out.node_features.at(1, 0) == 0.0);  // zero row untouched
}

TEST_CASE("graph signature of K4") {
  Graph g = make_undirected_graph(
      4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
  auto sig = graph_signature(g);
  CHECK(sig.num_nodes == 4);
  CHECK(sig.num_edges == 6);
  CHECK(sig.num_triangles == 4);
  CHECK(sig.global_clustering == doctest::Approx(1.0));
  CHECK(sig.max_degree == 3);
  CHECK(sig.num_components == 1);
}

TEST_CASE("graph signature of two disjoint edges") {
  Graph g = make_undirected_graph(4, {{0, 1}, {2, 3}});
  auto sig = graph_signature(g);
  CHECK(sig.num_triangles == 0);
  CHECK(sig.global_clustering == 0.0);
  CHECK(sig.num_components == 2);
}

TEST_CASE("triangle count matches the cubic oracle on random graphs") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Graph g = random_er_graph(30, 0.2, 100 + seed);
    CHECK(count_triangles(g) == brute_force_triangles(g));
  }
}

TEST_CASE("graph signature is invariant under node relabeling") {
  Rng rng = make_rng(55, 0);
  for (int trial = 0; trial < 5; ++trial) {
    Graph g = random_er_graph(20, 0.25, 200 + trial);
    std::vector<std::int32_t> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size(); i > 1; --i)
      std::swap(perm[i - 1], perm[uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1)]);
    std::vector<std::pair<std::int32_t, std::int32_t>> edges;
    for (std::size_t a = 0; a < g.arc_src.size(); ++a)
      if (g.arc_src[a] < g.arc_dst[a])
        edges.emplace_back(perm[g.arc_src[a]], perm[g.arc_dst[a]]);
    Graph h = make_undirected_graph(20, edges);
    auto s0 = graph_signature(g);
    auto s1 = graph_signature(h);
    CHECK(s0.num_edges == s1.num_edges);
    CHECK(s0.num_triangles == s1.num_triangles);
    CHECK(s0.global_clustering == doctest::Approx(s1.global_clustering));
    CHECK(s0.max_degree == s1.max_degree);
    CHECK(s0.num_components == s1.num_components);
  }
}

TEST_CASE("generators never touch node count or arcs") {
  Graph g = random_er_graph(15, 0.3, 9);
  for (auto kind : {FeatureOpKind::kOnehotDegree, FeatureOpKind::kPagerank,
                    FeatureOpKind::kLocalDegreeProfile, FeatureOpKind::kOnehotId}) {
    FeatureOpSpec spec;
    spec.kind = kind;
    Graph out = generate_features(g, spec);
    CHECK(out.num_nodes == g.num_nodes);
    CHECK(out.arc_src == g.arc_src);
    CHECK(out.arc_dst == g.arc_dst);
  }
}
