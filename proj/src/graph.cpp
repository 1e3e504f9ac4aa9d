#include "agml/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_set>

#include "agml/error.hpp"
#include "agml/rng.hpp"

namespace agml {

const Graph& Dataset::node_graph() const {
  if (task.level != TaskLevel::kNode)
    throw ContractError("dataset: node_graph() on a graph-level task");
  return graphs.at(0);
}

namespace {

void finalize_arcs(Graph& g, std::vector<std::pair<std::int32_t, std::int32_t>> arcs) {
  std::sort(arcs.begin(), arcs.end(),
            [](const auto& a, const auto& b) {
              return a.second != b.second ? a.second < b.second : a.first < b.first;
            });
  g.arc_src.reserve(arcs.size());
  g.arc_dst.reserve(arcs.size());
  for (const auto& [s, d] : arcs) {
    g.arc_src.push_back(s);
    g.arc_dst.push_back(d);
  }
  g.in_offsets.assign(static_cast<std::size_t>(g.num_nodes) + 1, 0);
  for (auto d : g.arc_dst) ++g.in_offsets[static_cast<std::size_t>(d) + 1];
  for (std::int64_t v = 0; v < g.num_nodes; ++v)
    g.in_offsets[v + 1] += g.in_offsets[v];
}

}  // namespace

Graph make_undirected_graph(
    std::int64_t num_nodes,
    const std::vector<std::pair<std::int32_t, std::int32_t>>& edges,
    Tensor node_features, std::vector<std::int32_t> labels) {
  Graph g;
  g.num_nodes = num_nodes;
  g.raw_edge_rows = static_cast<std::int64_t>(edges.size());

  std::set<std::pair<std::int32_t, std::int32_t>> canon;
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes)
      throw ValidationError("graph: edge endpoint out of range");
    if (u == v) {
      ++g.dropped_self_loops;
      continue;
    }
    canon.emplace(std::min(u, v), std::max(u, v));
  }
  g.undirected_edges = static_cast<std::int64_t>(canon.size());

  std::vector<std::pair<std::int32_t, std::int32_t>> arcs;
  arcs.reserve(canon.size() * 2);
  for (const auto& [u, v] : canon) {
    arcs.emplace_back(u, v);
    arcs.emplace_back(v, u);
  }
  finalize_arcs(g, std::move(arcs));

  if (node_features.numel() > 0) {
    if (node_features.rank() != 2 || node_features.dim(0) != num_nodes)
      throw ValidationError("graph: feature row count does not match nodes");
    g.node_features = std::move(node_features);
  } else {
    g.node_features = Tensor({num_nodes, 0});
  }
  if (!labels.empty() && static_cast<std::int64_t>(labels.size()) != num_nodes)
    throw ValidationError("graph: label count does not match nodes");
  g.labels = std::move(labels);
  return g;
}

void validate_graph(const Graph& g) {
  if (g.num_nodes < 0) throw ValidationError("graph: negative node count");
  if (g.arc_src.size() != g.arc_dst.size())
    throw ValidationError("graph: arc array size mismatch");
  if (static_cast<std::int64_t>(g.in_offsets.size()) != g.num_nodes + 1)
    throw ValidationError("graph: bad offset table size");
  std::set<std::pair<std::int32_t, std::int32_t>> arcset;
  for (std::size_t i = 0; i < g.arc_src.size(); ++i) {
    const auto s = g.arc_src[i], d = g.arc_dst[i];
    if (s < 0 || d < 0 || s >= g.num_nodes || d >= g.num_nodes)
      throw ValidationError("graph: arc endpoint out of range");
    if (s == d) throw ValidationError("graph: self-loop arc present");
    if (!arcset.emplace(s, d).second)
      throw ValidationError("graph: duplicate arc");
  }
  if (!g.directed) {
    for (const auto& [s, d] : arcset)
      if (!arcset.count({d, s}))
        throw ValidationError("graph: missing reverse arc in undirected graph");
  }
  for (std::int64_t v = 0; v < g.num_nodes; ++v) {
    for (std::int64_t a = g.in_offsets[v]; a < g.in_offsets[v + 1]; ++a)
      if (g.arc_dst[a] != v)
        throw ValidationError("graph: offset table inconsistent with arcs");
  }
  if (g.node_features.numel() > 0 && g.node_features.dim(0) != g.num_nodes)
    throw ValidationError("graph: feature row count does not match nodes");
  if (g.arc_features.numel() > 0 &&
      g.arc_features.dim(0) != g.num_arcs())
    throw ValidationError("graph: arc feature rows do not match arcs");
  if (!g.labels.empty() &&
      static_cast<std::int64_t>(g.labels.size()) != g.num_nodes)
    throw ValidationError("graph: label count does not match nodes");
}

DatasetSplit stratified_split(const std::vector<std::int32_t>& labels,
                              double train_frac, double val_frac,
                              std::uint64_t seed) {
  if (train_frac <= 0.0 || val_frac < 0.0 || train_frac + val_frac >= 1.0)
    throw ContractError("split: fractions must satisfy 0<train, 0<=val, train+val<1");
  std::int32_t num_classes = 0;
  for (auto l : labels) num_classes = std::max(num_classes, l + 1);
  std::vector<std::vector<std::int32_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class[labels[i]].push_back(static_cast<std::int32_t>(i));

  Rng rng = make_rng(seed, 0x5914);
  DatasetSplit split;
  for (auto& members : by_class) {
    for (std::size_t i = members.size(); i > 1; --i)
      std::swap(members[i - 1], members[uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1)]);
    const auto n = static_cast<std::int64_t>(members.size());
    auto n_train = static_cast<std::int64_t>(std::llround(train_frac * static_cast<double>(n)));
    auto n_val = static_cast<std::int64_t>(std::llround(val_frac * static_cast<double>(n)));
    n_train = std::max<std::int64_t>(n_train, n > 0 ? 1 : 0);
    while (n_train + n_val > n) (n_val > 0 ? n_val : n_train) -= 1;
    for (std::int64_t i = 0; i < n; ++i) {
      if (i < n_train)
        split.train.push_back(members[i]);
      else if (i < n_train + n_val)
        split.val.push_back(members[i]);
      else
        split.test.push_back(members[i]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<DatasetSplit> split_kfold(std::int64_t n_items, std::int64_t k,
                                      std::uint64_t seed) {
  if (k < 2 || k > n_items)
    throw ContractError("kfold: need 2 <= k <= n_items");
  std::vector<std::int32_t> order(static_cast<std::size_t>(n_items));
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 0xF01D);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1)]);

  // Fold f owns order[start_f, start_{f+1}); the first n%k folds get the
  // extra item.
  std::vector<std::vector<std::int32_t>> folds(static_cast<std::size_t>(k));
  std::int64_t pos = 0;
  for (std::int64_t f = 0; f < k; ++f) {
    const std::int64_t size = n_items / k + (f < n_items % k ? 1 : 0);
    for (std::int64_t i = 0; i < size; ++i) folds[f].push_back(order[pos++]);
    std::sort(folds[f].begin(), folds[f].end());
  }

  std::vector<DatasetSplit> splits;
  splits.reserve(static_cast<std::size_t>(k));
  for (std::int64_t f = 0; f < k; ++f) {
    DatasetSplit s;
    s.fold_id = static_cast<int>(f);
    s.test = folds[f];
    s.val = folds[(f + 1) % k];
    for (std::int64_t other = 0; other < k; ++other)
      if (other != f && other != (f + 1) % k)
        s.train.insert(s.train.end(), folds[other].begin(), folds[other].end());
    std::sort(s.train.begin(), s.train.end());
    splits.push_back(std::move(s));
  }
  return splits;
}

SampledSubgraph sample_subgraph_rw(const Graph& g, std::int64_t num_starts,
                                   std::int64_t walk_len, double target_ratio,
                                   std::uint64_t seed) {
  if (g.num_nodes == 0) throw ContractError("sample: empty graph");
  if (num_starts < 1 || walk_len < 0)
    throw ContractError("sample: need num_starts >= 1 and walk_len >= 0");
  if (target_ratio <= 0.0 || target_ratio > 1.0)
    throw ContractError("sample: target_ratio must be in (0, 1]");

  Rng rng = make_rng(seed, 0x3A1C);
  const auto target = static_cast<std::int64_t>(
      std::ceil(target_ratio * static_cast<double>(g.num_nodes)));

  std::vector<std::int32_t> starts;
  {
    std::unordered_set<std::int32_t> chosen;
    while (static_cast<std::int64_t>(starts.size()) < num_starts) {
      auto v = static_cast<std::int32_t>(uniform_int(rng, 0, g.num_nodes - 1));
      if (static_cast<std::int64_t>(chosen.size()) < g.num_nodes && chosen.count(v))
        continue;  // distinct starts while the graph still has unused nodes
      chosen.insert(v);
      starts.push_back(v);
    }
  }

  std::vector<char> visited(static_cast<std::size_t>(g.num_nodes), 0);
  std::int64_t visited_count = 0;
  auto visit = [&](std::int32_t v) {
    if (!visited[v]) {
      visited[v] = 1;
      ++visited_count;
    }
  };

  // Walk rounds cycle over the start set until the target is covered; the
  // cap keeps disconnected graphs from looping forever.
  const std::int64_t max_rounds = 64 * num_starts;
  for (std::int64_t round = 0; round < max_rounds && visited_count < target; ++round) {
    const std::int32_t origin = starts[round % num_starts];
    std::int32_t cur = origin;
    visit(cur);
    for (std::int64_t step = 0; step < walk_len; ++step) {
      const std::int64_t lo = g.in_offsets[cur], hi = g.in_offsets[cur + 1];
      if (lo == hi) {
        cur = origin;  // dead end: restart at the walk's origin
        continue;
      }
      cur = g.arc_src[lo + uniform_int(rng, 0, hi - lo - 1)];
      visit(cur);
      if (visited_count >= target) break;
    }
  }

  SampledSubgraph out;
  std::vector<std::int32_t> old_to_new(static_cast<std::size_t>(g.num_nodes), -1);
  for (std::int32_t v = 0; v < g.num_nodes; ++v) {
    if (!visited[v]) continue;
    old_to_new[v] = static_cast<std::int32_t>(out.node_map.size());
    out.node_map.push_back(v);
  }

  const auto sub_n = static_cast<std::int64_t>(out.node_map.size());
  std::vector<std::pair<std::int32_t, std::int32_t>> edges;
  for (std::size_t a = 0; a < g.arc_src.size(); ++a) {
    const auto s = g.arc_src[a], d = g.arc_dst[a];
    if (s < d && old_to_new[s] >= 0 && old_to_new[d] >= 0)
      edges.emplace_back(old_to_new[s], old_to_new[d]);
  }

  Tensor feats;
  if (g.node_features.numel() > 0) {
    const std::int64_t f = g.feature_dim();
    feats = Tensor({sub_n, f});
    for (std::int64_t i = 0; i < sub_n; ++i)
      std::copy(g.node_features.data() + out.node_map[i] * f,
                g.node_features.data() + (out.node_map[i] + 1) * f,
                feats.data() + i * f);
  }
  std::vector<std::int32_t> labels;
  if (!g.labels.empty()) {
    labels.reserve(static_cast<std::size_t>(sub_n));
    for (std::int64_t i = 0; i < sub_n; ++i)
      labels.push_back(g.labels[out.node_map[i]]);
  }
  out.graph = make_undirected_graph(sub_n, edges, std::move(feats), std::move(labels));
  return out;
}

Dataset generate_sbm(std::int64_t n, std::int64_t blocks, double p_in,
                     double p_out, std::int64_t f, double noise,
                     std::uint64_t seed) {
  if (n <= 0 || blocks <= 0 || n % blocks != 0)
    throw ContractError("sbm: n must be a positive multiple of blocks");
  if (!(p_out >= 0.0 && p_out <= p_in && p_in <= 1.0))
    throw ContractError("sbm: need 0 <= p_out <= p_in <= 1");
  if (f < 1) throw ContractError("sbm: need f >= 1");

  const std::int64_t per_block = n / blocks;
  std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
  for (std::int64_t v = 0; v < n; ++v)
    labels[v] = static_cast<std::int32_t>(v / per_block);

  Rng edge_rng = make_rng(seed, 0x5B31);
  std::vector<std::pair<std::int32_t, std::int32_t>> edges;
  for (std::int32_t u = 0; u < n; ++u)
    for (std::int32_t v = u + 1; v < n; ++v) {
      const double p = labels[u] == labels[v] ? p_in : p_out;
      if (p > 0.0 && uniform01(edge_rng) < p) edges.emplace_back(u, v);
    }

  Rng feat_rng = make_rng(seed, 0x5B32);
  Tensor feats({n, f});
  for (std::int64_t v = 0; v < n; ++v)
    for (std::int64_t c = 0; c < f; ++c) {
      const double signal = (c == labels[v] % f) ? 1.0 : 0.0;
      feats.at(v, c) = signal + noise * normal(feat_rng);
    }

  Dataset ds;
  ds.task = {TaskLevel::kNode, blocks};
  ds.graphs.push_back(make_undirected_graph(n, edges, std::move(feats), labels));
  ds.split = stratified_split(labels, 0.6, 0.2, seed);
  return ds;
}

Dataset generate_cycles_vs_paths(std::int64_t n_graphs, std::int64_t size_min,
                                 std::int64_t size_max, std::uint64_t seed) {
  if (n_graphs <= 0) throw ContractError("cycles_vs_paths: n_graphs must be positive");
  if (size_min < 3 || size_max < size_min)
    throw ContractError("cycles_vs_paths: need 3 <= size_min <= size_max");

  Rng rng = make_rng(seed, 0xC9C7);
  constexpr std::int64_t kMaxDegree = 4;  // one-hot degree feature width - 1

  // Balanced labels within one: even indices cycles, odd paths, then a
  // seeded shuffle of the order.
  std::vector<std::int32_t> label_of(static_cast<std::size_t>(n_graphs));
  for (std::int64_t i = 0; i < n_graphs; ++i)
    label_of[i] = static_cast<std::int32_t>(i % 2);
  for (std::size_t i = label_of.size(); i > 1; --i)
    std::swap(label_of[i - 1], label_of[uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1)]);

  Dataset ds;
  ds.task = {TaskLevel::kGraph, 2};
  std::vector<std::int32_t> graph_labels;
  for (std::int64_t i = 0; i < n_graphs; ++i) {
    const std::int64_t size = uniform_int(rng, size_min, size_max);
    const bool cycle = label_of[i] == 0;
    std::vector<std::pair<std::int32_t, std::int32_t>> edges;
    for (std::int32_t v = 0; v + 1 < size; ++v) edges.emplace_back(v, v + 1);
    if (cycle) edges.emplace_back(static_cast<std::int32_t>(size - 1), 0);

    Graph g = make_undirected_graph(size, edges);
    Tensor feats({size, kMaxDegree + 1});
    for (std::int64_t v = 0; v < size; ++v) {
      const auto deg = std::min<std::int64_t>(g.degree(v), kMaxDegree);
      feats.at(v, deg) = 1.0;
    }
    g.node_features = std::move(feats);
    g.graph_label = cycle ? 0 : 1;
    graph_labels.push_back(g.graph_label);
    ds.graphs.push_back(std::move(g));
  }
  ds.split = stratified_split(graph_labels, 0.6, 0.2, seed);
  return ds;
}

}  // namespace agml
