#include "agml/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "agml/error.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace agml {
namespace {

[[noreturn]] void parse_fail(const std::string& file, std::int64_t line,
                             const std::string& what) {
  throw ParseError(file + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::int64_t parse_int(const std::string& file, std::int64_t line_no,
                       std::string_view tok) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    parse_fail(file, line_no, "expected integer, got '" + std::string(tok) + "'");
  return v;
}

double parse_double(const std::string& file, std::int64_t line_no,
                    std::string_view tok) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    parse_fail(file, line_no, "expected real, got '" + std::string(tok) + "'");
  return v;
}

std::vector<std::string_view> split_commas(const std::string& line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.emplace_back(line.data() + start, line.size() - start);
      return out;
    }
    out.emplace_back(line.data() + start, comma - start);
    start = comma + 1;
  }
}

std::vector<std::int32_t> split_from_json(const json& arr, std::int64_t n_items,
                                          const std::string& name) {
  std::vector<std::int32_t> out;
  for (const auto& v : arr) {
    const auto idx = v.get<std::int64_t>();
    if (idx < 0 || idx >= n_items)
      throw ValidationError("splits.json: " + name + " index out of range");
    out.push_back(static_cast<std::int32_t>(idx));
  }
  std::sort(out.begin(), out.end());
  return out;
}

DatasetSplit load_splits_json(const fs::path& path, std::int64_t n_items) {
  std::ifstream is(path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  DatasetSplit split;
  split.train = split_from_json(j.at("train"), n_items, "train");
  split.val = split_from_json(j.at("val"), n_items, "val");
  split.test = split_from_json(j.at("test"), n_items, "test");
  std::vector<char> seen(static_cast<std::size_t>(n_items), 0);
  for (const auto* part : {&split.train, &split.val, &split.test})
    for (auto idx : *part) {
      if (seen[idx]) throw ValidationError("splits.json: overlapping splits");
      seen[idx] = 1;
    }
  if (split.train.empty() || split.test.empty())
    throw ValidationError("splits.json: train and test must be non-empty");
  return split;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

Dataset load_dataset(const std::string& dir, TaskSpec task, std::uint64_t seed) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw IoError("dataset directory not found: " + dir);
  Dataset ds;
  ds.task = task;

  if (task.level == TaskLevel::kNode) {
    const std::string feat_file = (root / "features.csv").string();
    const auto feat_lines = read_lines(feat_file);
    const auto n = static_cast<std::int64_t>(feat_lines.size());
    if (n == 0) throw ParseError(feat_file + ": no rows");
    const auto first = split_commas(feat_lines[0]);
    const auto f = static_cast<std::int64_t>(first.size());
    Tensor feats({n, f});
    for (std::int64_t r = 0; r < n; ++r) {
      const auto toks = split_commas(feat_lines[r]);
      if (static_cast<std::int64_t>(toks.size()) != f)
        parse_fail(feat_file, r + 1, "inconsistent column count");
      for (std::int64_t c = 0; c < f; ++c)
        feats.at(r, c) = parse_double(feat_file, r + 1, toks[c]);
    }

    if (!fs::exists(root / "labels.csv"))
      throw ContractError("dataset: labels.csv required for supervised node task");
    const std::string label_file = (root / "labels.csv").string();
    const auto label_lines = read_lines(label_file);
    if (static_cast<std::int64_t>(label_lines.size()) != n)
      throw ValidationError("dataset: label rows do not match feature rows");
    std::vector<std::int32_t> labels;
    labels.reserve(label_lines.size());
    for (std::size_t i = 0; i < label_lines.size(); ++i)
      labels.push_back(static_cast<std::int32_t>(
          parse_int(label_file, static_cast<std::int64_t>(i) + 1, label_lines[i])));

    const std::string edge_file = (root / "edges.csv").string();
    std::vector<std::pair<std::int32_t, std::int32_t>> edges;
    const auto edge_lines = read_lines(edge_file);
    for (std::size_t i = 0; i < edge_lines.size(); ++i) {
      if (edge_lines[i].empty()) continue;
      const auto toks = split_commas(edge_lines[i]);
      const auto line_no = static_cast<std::int64_t>(i) + 1;
      if (toks.size() != 2) parse_fail(edge_file, line_no, "expected 'u,v'");
      const auto u = parse_int(edge_file, line_no, toks[0]);
      const auto v = parse_int(edge_file, line_no, toks[1]);
      if (u < 0 || v < 0 || u >= n || v >= n)
        throw ValidationError(edge_file + ":" + std::to_string(line_no) +
                              ": endpoint out of range");
      edges.emplace_back(static_cast<std::int32_t>(u), static_cast<std::int32_t>(v));
    }

    Graph g = make_undirected_graph(n, edges, std::move(feats), labels);
    std::int32_t max_label = -1;
    for (auto l : g.labels) {
      if (l < 0) throw ValidationError("dataset: negative label");
      max_label = std::max(max_label, l);
    }
    if (ds.task.num_classes == 0) ds.task.num_classes = max_label + 1;
    if (max_label >= ds.task.num_classes)
      throw ValidationError("dataset: label outside [0, num_classes)");
    ds.graphs.push_back(std::move(g));
    ds.split = fs::exists(root / "splits.json")
                   ? load_splits_json(root / "splits.json", n)
                   : stratified_split(labels, 0.6, 0.2, seed);
  } else {
    const std::string file = (root / "graphs.jsonl").string();
    const auto lines = read_lines(file);
    std::vector<std::int32_t> labels;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto line_no = static_cast<std::int64_t>(i) + 1;
      json j;
      try {
        j = json::parse(lines[i]);
      } catch (const json::exception& e) {
        parse_fail(file, line_no, e.what());
      }
      if (!j.contains("label"))
        throw ContractError("dataset: graph object without label (line " +
                            std::to_string(line_no) + ")");
      const auto& jfeat = j.at("features");
      const auto gn = static_cast<std::int64_t>(jfeat.size());
      if (gn == 0) parse_fail(file, line_no, "graph with zero nodes");
      const auto gf = static_cast<std::int64_t>(jfeat.at(0).size());
      Tensor feats({gn, gf});
      for (std::int64_t r = 0; r < gn; ++r) {
        if (static_cast<std::int64_t>(jfeat.at(r).size()) != gf)
          parse_fail(file, line_no, "ragged feature rows");
        for (std::int64_t c = 0; c < gf; ++c)
          feats.at(r, c) = jfeat.at(r).at(c).get<double>();
      }
      std::vector<std::pair<std::int32_t, std::int32_t>> edges;
      for (const auto& e : j.at("edges")) {
        const auto u = e.at(0).get<std::int64_t>();
        const auto v = e.at(1).get<std::int64_t>();
        if (u < 0 || v < 0 || u >= gn || v >= gn)
          throw ValidationError(file + ":" + std::to_string(line_no) +
                                ": endpoint out of range");
        edges.emplace_back(static_cast<std::int32_t>(u), static_cast<std::int32_t>(v));
      }
      Graph g = make_undirected_graph(gn, edges, std::move(feats));
      g.graph_label = j.at("label").get<std::int32_t>();
      if (g.graph_label < 0) throw ValidationError("dataset: negative graph label");
      labels.push_back(g.graph_label);
      ds.graphs.push_back(std::move(g));
    }
    if (ds.graphs.empty()) throw ParseError(file + ": no graphs");
    std::int32_t max_label = *std::max_element(labels.begin(), labels.end());
    if (ds.task.num_classes == 0) ds.task.num_classes = max_label + 1;
    if (max_label >= ds.task.num_classes)
      throw ValidationError("dataset: label outside [0, num_classes)");
    const auto n_items = static_cast<std::int64_t>(ds.graphs.size());
    ds.split = fs::exists(root / "splits.json")
                   ? load_splits_json(root / "splits.json", n_items)
                   : stratified_split(labels, 0.6, 0.2, seed);
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root);
  auto open = [&](const char* name) {
    std::ofstream os(root / name, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + (root / name).string());
    return os;
  };

  if (ds.task.level == TaskLevel::kNode) {
    const Graph& g = ds.node_graph();
    {
      auto os = open("edges.csv");
      for (std::size_t a = 0; a < g.arc_src.size(); ++a) {
        // one line per undirected edge, lower endpoint first
        const auto s = g.arc_src[a], d = g.arc_dst[a];
        if (s < d) continue;
        os << d << ',' << s << '\n';
      }
    }
    {
      auto os = open("features.csv");
      const std::int64_t f = g.feature_dim();
      for (std::int64_t r = 0; r < g.num_nodes; ++r) {
        for (std::int64_t c = 0; c < f; ++c) {
          if (c) os << ',';
          os << format_double(g.node_features.at(r, c));
        }
        os << '\n';
      }
    }
    {
      auto os = open("labels.csv");
      for (auto l : g.labels) os << l << '\n';
    }
  } else {
    auto os = open("graphs.jsonl");
    for (const auto& g : ds.graphs) {
      json j;
      json edges = json::array();
      for (std::size_t a = 0; a < g.arc_src.size(); ++a) {
        const auto s = g.arc_src[a], d = g.arc_dst[a];
        if (s < d) continue;
        edges.push_back(json::array({d, s}));
      }
      std::sort(edges.begin(), edges.end());
      j["edges"] = std::move(edges);
      json feats = json::array();
      for (std::int64_t r = 0; r < g.num_nodes; ++r) {
        json row = json::array();
        for (std::int64_t c = 0; c < g.feature_dim(); ++c)
          row.push_back(g.node_features.at(r, c));
        feats.push_back(std::move(row));
      }
      j["features"] = std::move(feats);
      j["label"] = g.graph_label;
      os << j.dump() << '\n';
    }
  }
  {
    auto os = open("splits.json");
    json j;
    j["train"] = ds.split.train;
    j["val"] = ds.split.val;
    j["test"] = ds.split.test;
    os << j.dump() << '\n';
  }
}

}  // namespace agml
