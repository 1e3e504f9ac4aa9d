#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "agml/dataset_io.hpp"
#include "agml/error.hpp"
#include "agml/graph.hpp"

using namespace agml;
namespace fs = std::filesystem;

namespace {

fs::path make_temp_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("agml_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream os(p, std::ios::binary);
  os << content;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("loading a 3-node edge list doubles undirected edges into arcs") {
  auto dir = make_temp_dir("load3");
  write_file(dir / "edges.csv", "0,1\n1,2\n");
  write_file(dir / "features.csv", "1.0\n0.5\n0.25\n");
  write_file(dir / "labels.csv", "0\n1\n0\n");
  write_file(dir / "splits.json",
             R"({"train":[0],"val":[1],"test":[2]})");
  Dataset ds = load_dataset(dir.string(), {TaskLevel::kNode, 0});
  const Graph& g = ds.node_graph();
  CHECK(g.num_nodes == 3);
  CHECK(g.num_arcs() == 4);
  CHECK(g.undirected_edges == 2);
  CHECK(ds.task.num_classes == 2);
  validate_graph(g);
  fs::remove_all(dir);
}

TEST_CASE("malformed rows fail with the line number") {
  auto dir = make_temp_dir("badrow");
  write_file(dir / "edges.csv", "0,1\n1,zap\n");
  write_file(dir / "features.csv", "1.0\n0.5\n");
  write_file(dir / "labels.csv", "0\n1\n");
  try {
    load_dataset(dir.string(), {TaskLevel::kNode, 0});
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("out-of-range edge endpoints are a validation error") {
  auto dir = make_temp_dir("oob");
  write_file(dir / "edges.csv", "0,5\n");
  write_file(dir / "features.csv", "1.0\n0.5\n");
  write_file(dir / "labels.csv", "0\n1\n");
  CHECK_THROWS_AS(load_dataset(dir.string(), {TaskLevel::kNode, 0}), ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("missing labels for a supervised node task is a contract error") {
  auto dir = make_temp_dir("nolabels");
  write_file(dir / "edges.csv", "0,1\n");
  write_file(dir / "features.csv", "1.0\n0.5\n");
  CHECK_THROWS_AS(load_dataset(dir.string(), {TaskLevel::kNode, 0}), ContractError);
  fs::remove_all(dir);
}

TEST_CASE("write after load reproduces a byte-identical canonical form") {
  auto dir = make_temp_dir("roundtrip");
  // unsorted, duplicated in both orientations, plus a self-loop to drop
  write_file(dir / "edges.csv", "2,1\n0,1\n1,2\n1,1\n1,0\n");
  write_file(dir / "features.csv", "1.5\n-2.25\n0.375\n");
  write_file(dir / "labels.csv", "1\n0\n1\n");
  write_file(dir / "splits.json", R"({"train":[0,1],"val":[],"test":[2]})");

  Dataset ds = load_dataset(dir.string(), {TaskLevel::kNode, 0});
  CHECK(ds.node_graph().raw_edge_rows == 5);
  CHECK(ds.node_graph().undirected_edges == 2);
  CHECK(ds.node_graph().dropped_self_loops == 1);

  auto out1 = make_temp_dir("roundtrip_out1");
  auto out2 = make_temp_dir("roundtrip_out2");
  write_dataset(ds, out1.string());
  Dataset ds2 = load_dataset(out1.string(), {TaskLevel::kNode, 0});
  write_dataset(ds2, out2.string());
  for (const char* name : {"edges.csv", "features.csv", "labels.csv", "splits.json"})
    CHECK(read_file(out1 / name) == read_file(out2 / name));
  fs::remove_all(dir);
  fs::remove_all(out1);
  fs::remove_all(out2);
}

TEST_CASE("graph dataset round-trips through graphs.jsonl") {
  Dataset ds = generate_cycles_vs_paths(6, 3, 5, 77);
  auto dir = make_temp_dir("jsonl");
  write_dataset(ds, dir.string());
  Dataset loaded = load_dataset(dir.string(), {TaskLevel::kGraph, 0});
  REQUIRE(loaded.graphs.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(loaded.graphs[i].num_nodes == ds.graphs[i].num_nodes);
    CHECK(loaded.graphs[i].num_arcs() == ds.graphs[i].num_arcs());
    CHECK(loaded.graphs[i].graph_label == ds.graphs[i].graph_label);
  }
  auto dir2 = make_temp_dir("jsonl2");
  write_dataset(loaded, dir2.string());
  CHECK(read_file(dir / "graphs.jsonl") == read_file(dir2 / "graphs.jsonl"));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("sbm with p_in=1 p_out=0 yields disjoint cliques") {
  Dataset ds = generate_sbm(6, 2, 1.0, 0.0, 4, 0.0, 3);
  const Graph& g = ds.node_graph();
  CHECK(g.num_nodes == 6);
  CHECK(g.undirected_edges == 6);  // two triangles
  validate_graph(g);
  for (auto l : g.labels) CHECK((l == 0 || l == 1));
  // no cross-block arcs
  for (std::size_t a = 0; a < g.arc_src.size(); ++a)
    CHECK(g.labels[g.arc_src[a]] == g.labels[g.arc_dst[a]]);
}

TEST_CASE("sbm edge count matches its expectation over seeds") {
  // n=100, blocks=2, p_in=0.1, p_out=0.01:
  // E = 2*C(50,2)*0.1 + 2500*0.01 = 270
  const double expected = 2 * (50.0 * 49.0 / 2.0) * 0.1 + 2500 * 0.01;
  double total = 0.0;
  double total_sq = 0.0;
  const int seeds = 100;
  for (int s = 0; s < seeds; ++s) {
    Dataset ds = generate_sbm(100, 2, 0.1, 0.01, 4, 0.1, 1000 + s);
    const double e = static_cast<double>(ds.node_graph().undirected_edges);
    total += e;
    total_sq += e * e;
  }
  const double mean = total / seeds;
  const double var = total_sq / seeds - mean * mean;
  // variance of the count ~ sum p(1-p) ~ 260; sem over 100 seeds ~ 1.6
  const double sem = std::sqrt(var / seeds);
  CHECK(std::fabs(mean - expected) < 3.0 * sem + 1e-9);
}

TEST_CASE("sbm is deterministic for fixed parameters and seed") {
  Dataset a = generate_sbm(40, 4, 0.3, 0.05, 8, 0.2, 9);
  Dataset b = generate_sbm(40, 4, 0.3, 0.05, 8, 0.2, 9);
  CHECK(a.node_graph().arc_src == b.node_graph().arc_src);
  CHECK(a.node_graph().arc_dst == b.node_graph().arc_dst);
  for (std::int64_t i = 0; i < a.node_graph().node_features.numel(); ++i)
    CHECK(a.node_graph().node_features[i] == b.node_graph().node_features[i]);
  CHECK(a.split.train == b.split.train);
}

TEST_CASE("sbm rejects invalid probabilities") {
  CHECK_THROWS_AS(generate_sbm(10, 2, 0.1, 0.5, 4, 0.0, 1), ContractError);
  CHECK_THROWS_AS(generate_sbm(10, 3, 0.5, 0.1, 4, 0.0, 1), ContractError);
}

TEST_CASE("cycles_vs_paths: degrees separate the classes") {
  Dataset ds = generate_cycles_vs_paths(10, 5, 5, 11);
  CHECK(ds.graphs.size() == 10);
  int cycles = 0;
  for (const auto& g : ds.graphs) {
    std::multiset<std::int64_t> degs;
    for (std::int64_t v = 0; v < g.num_nodes; ++v) degs.insert(g.degree(v));
    if (g.graph_label == 0) {
      ++cycles;
      CHECK(degs.count(2) == 5);  // all degree 2
    } else {
      CHECK(degs.count(1) == 2);  // exactly two endpoints
      CHECK(degs.count(2) == 3);
    }
  }
  CHECK(std::abs(cycles - 5) <= 1);  // balanced within one

  Dataset again = generate_cycles_vs_paths(10, 5, 5, 11);
  for (std::size_t i = 0; i < 10; ++i)
    CHECK(again.graphs[i].graph_label == ds.graphs[i].graph_label);
  CHECK_THROWS_AS(generate_cycles_vs_paths(0, 3, 5, 1), ContractError);
}

TEST_CASE("kfold produces disjoint covering folds of near-equal size") {
  auto splits = split_kfold(10, 5, 123);
  REQUIRE(splits.size() == 5);
  std::set<std::int32_t> all_test;
  for (const auto& s : splits) {
    CHECK(s.test.size() == 2);
    for (auto i : s.test) {
      CHECK(all_test.insert(i).second);  // pairwise disjoint
      CHECK(std::find(s.train.begin(), s.train.end(), i) == s.train.end());
    }
  }
  CHECK(all_test.size() == 10);

  auto loo = split_kfold(10, 10, 4);
  CHECK(loo.size() == 10);
  for (const auto& s : loo) CHECK(s.test.size() == 1);

  CHECK_THROWS_AS(split_kfold(10, 1, 0), ContractError);
  CHECK_THROWS_AS(split_kfold(10, 11, 0), ContractError);
}

TEST_CASE("kfold is deterministic: frozen reference fold for n=10 k=5 seed=123") {
  // Reference assignment recorded from a fixed run; guards the RNG mapping.
  auto splits = split_kfold(10, 5, 123);
  std::vector<std::vector<std::int32_t>> tests;
  for (const auto& s : splits) tests.push_back(s.test);
  auto again = split_kfold(10, 5, 123);
  for (std::size_t i = 0; i < 5; ++i) CHECK(again[i].test == tests[i]);
  // frozen: see test output at freeze time
  CHECK(splits[0].test == std::vector<std::int32_t>{3, 4});
}

TEST_CASE("single-node graph samples to itself") {
  Graph g = make_undirected_graph(1, {});
  auto sub = sample_subgraph_rw(g, 1, 5, 1.0, 7);
  CHECK(sub.graph.num_nodes == 1);
  CHECK(sub.node_map == std::vector<std::int32_t>{0});
}

TEST_CASE("walks never cross connected components") {
  // two disjoint triangles
  Graph g = make_undirected_graph(
      6, {{0, 1}, {1, 2}, {2, 0}, {3, 4}, {4, 5}, {5, 3}});
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto sub = sample_subgraph_rw(g, 1, 10, 0.5, seed);
    std::set<int> comps;
    for (auto v : sub.node_map) comps.insert(v < 3 ? 0 : 1);
    CHECK(comps.size() == 1);
  }
}

TEST_CASE("path graph P10 is fully covered with high probability") {
  std::vector<std::pair<std::int32_t, std::int32_t>> edges;
  for (std::int32_t v = 0; v + 1 < 10; ++v) edges.emplace_back(v, v + 1);
  Graph g = make_undirected_graph(10, edges);
  int covered = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto sub = sample_subgraph_rw(g, 1, 50, 1.0, seed);
    if (sub.graph.num_nodes == 10) ++covered;
  }
  CHECK(covered >= 990);
}

TEST_CASE("sampled subgraphs keep all invariants and arcs exist upstream") {
  Dataset ds = generate_sbm(60, 3, 0.3, 0.05, 6, 0.1, 5);
  const Graph& parent = ds.node_graph();
  std::set<std::pair<std::int32_t, std::int32_t>> parent_arcs;
  for (std::size_t a = 0; a < parent.arc_src.size(); ++a)
    parent_arcs.emplace(parent.arc_src[a], parent.arc_dst[a]);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto sub = sample_subgraph_rw(parent, 3, 15, 0.4, seed);
    validate_graph(sub.graph);
    for (std::size_t a = 0; a < sub.graph.arc_src.size(); ++a) {
      const auto u = sub.node_map[sub.graph.arc_src[a]];
      const auto v = sub.node_map[sub.graph.arc_dst[a]];
      CHECK(parent_arcs.count({u, v}) == 1);
    }
  }
  CHECK_THROWS_AS(sample_subgraph_rw(Graph{}, 1, 5, 0.5, 0), ContractError);
}
