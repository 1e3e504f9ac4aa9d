#include "agml/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "agml/error.hpp"

namespace agml {

const char* feature_op_name(FeatureOpKind kind) {
  switch (kind) {
    case FeatureOpKind::kOnehotDegree: return "onehot_degree";
    case FeatureOpKind::kPagerank: return "pagerank";
    case FeatureOpKind::kEigen: return "eigen";
    case FeatureOpKind::kLocalDegreeProfile: return "local_degree_profile";
    case FeatureOpKind::kNormalizeRows: return "normalize_rows";
    case FeatureOpKind::kOnehotId: return "onehot_id";
    case FeatureOpKind::kFilterConstant: return "filter_constant";
  }
  return "?";
}

FeatureOpKind feature_op_from_name(const std::string& name) {
  for (auto k : {FeatureOpKind::kOnehotDegree, FeatureOpKind::kPagerank,
                 FeatureOpKind::kEigen, FeatureOpKind::kLocalDegreeProfile,
                 FeatureOpKind::kNormalizeRows, FeatureOpKind::kOnehotId,
                 FeatureOpKind::kFilterConstant})
    if (name == feature_op_name(k)) return k;
  throw ContractError("unknown feature op: " + name);
}

namespace {

Tensor append_columns(const Tensor& base, const Tensor& extra) {
  const std::int64_t n = extra.dim(0);
  const std::int64_t f0 = base.numel() > 0 ? base.dim(1) : 0;
  const std::int64_t f1 = extra.dim(1);
  Tensor out({n, f0 + f1});
  for (std::int64_t r = 0; r < n; ++r) {
    if (f0 > 0)
      std::memcpy(out.data() + r * (f0 + f1), base.data() + r * f0,
                  static_cast<std::size_t>(f0) * sizeof(double));
    std::memcpy(out.data() + r * (f0 + f1) + f0, extra.data() + r * f1,
                static_cast<std::size_t>(f1) * sizeof(double));
  }
  return out;
}

// Leading eigenvectors of D^{-1/2} A D^{-1/2} by power iteration with
// deflation; each iterate is re-orthogonalized against the converged vectors.
std::vector<std::vector<double>> normalized_adjacency_eigenvectors(
    const Graph& g, std::int64_t k, double tol, std::int64_t max_iter) {
  const std::int64_t n = g.num_nodes;
  std::vector<double> dinv_sqrt(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t v = 0; v < n; ++v) {
    const auto deg = g.degree(v);
    if (deg > 0) dinv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(deg));
  }
  auto matvec = [&](const std::vector<double>& x, std::vector<double>& y) {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t a = 0; a < g.arc_src.size(); ++a) {
      const auto s = g.arc_src[a], d = g.arc_dst[a];
      y[d] += dinv_sqrt[d] * dinv_sqrt[s] * x[s];
    }
  };

  std::vector<std::vector<double>> basis;
  Rng rng = make_rng(0xE16E, 0);
  for (std::int64_t vec = 0; vec < k; ++vec) {
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& xi : x) xi = normal(rng);
    std::vector<double> y(static_cast<std::size_t>(n));
    double lambda = 0.0;
    double residual = 0.0;
    bool converged = false;
    for (std::int64_t it = 0; it < max_iter; ++it) {
      // project out converged directions
      for (const auto& b : basis) {
        double dot = std::inner_product(x.begin(), x.end(), b.begin(), 0.0);
        for (std::int64_t i = 0; i < n; ++i) x[i] -= dot * b[i];
      }
      double norm = std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
      if (norm < 1e-300) {  // degenerate start, redraw
        for (auto& xi : x) xi = normal(rng);
        continue;
      }
      for (auto& xi : x) xi /= norm;
      matvec(x, y);
      lambda = std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
      residual = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double r = y[i] - lambda * x[i];
        residual += r * r;
      }
      residual = std::sqrt(residual);
      if (residual < tol) {
        converged = true;
        break;
      }
      x.swap(y);
    }
    if (!converged)
      throw NumericalError("eigen: power iteration did not converge", residual);
    // sign convention: first component of largest magnitude is positive
    std::int64_t pivot = 0;
    for (std::int64_t i = 1; i < n; ++i)
      if (std::fabs(x[i]) > std::fabs(x[pivot])) pivot = i;
    if (x[pivot] < 0.0)
      for (auto& xi : x) xi = -xi;
    basis.push_back(x);
  }
  return basis;
}

}  // namespace

std::vector<double> pagerank(const Graph& g, double damping, double tol,
                             std::int64_t max_iter) {
  if (damping < 0.0 || damping >= 1.0)
    throw ContractError("pagerank: damping must be in [0,1)");
  const std::int64_t n = g.num_nodes;
  if (n == 0) return {};
  const double uniform_share = 1.0 / static_cast<double>(n);
  std::vector<double> rank(static_cast<std::size_t>(n), uniform_share);
  std::vector<double> next(static_cast<std::size_t>(n));
  double residual = 0.0;
  for (std::int64_t it = 0; it < max_iter; ++it) {
    double dangling = 0.0;
    for (std::int64_t v = 0; v < n; ++v)
      if (g.degree(v) == 0) dangling += rank[v];
    std::fill(next.begin(), next.end(),
              (1.0 - damping) * uniform_share + damping * dangling * uniform_share);
    for (std::size_t a = 0; a < g.arc_src.size(); ++a) {
      const auto s = g.arc_src[a], d = g.arc_dst[a];
      next[d] += damping * rank[s] / static_cast<double>(g.degree(s));
    }
    residual = 0.0;
    for (std::int64_t v = 0; v < n; ++v) residual += std::fabs(next[v] - rank[v]);
    rank.swap(next);
    if (residual < tol) return rank;
  }
  throw NumericalError("pagerank: not converged after max_iter", residual);
}

Graph generate_features(const Graph& g, const FeatureOpSpec& spec) {
  Graph out = g;
  const std::int64_t n = g.num_nodes;
  switch (spec.kind) {
    case FeatureOpKind::kOnehotDegree: {
      if (spec.max_degree < 0) throw ContractError("onehot_degree: max_degree < 0");
      Tensor cols({n, spec.max_degree + 1});
      for (std::int64_t v = 0; v < n; ++v) {
        const auto deg = std::min<std::int64_t>(g.degree(v), spec.max_degree);
        cols.at(v, deg) = 1.0;
      }
      out.node_features = append_columns(g.node_features, cols);
      break;
    }
    case FeatureOpKind::kPagerank: {
      const auto pr = pagerank(g, spec.damping, 1e-10, 1000);
      Tensor cols({n, 1});
      for (std::int64_t v = 0; v < n; ++v) cols[v] = pr[v];
      out.node_features = append_columns(g.node_features, cols);
      break;
    }
    case FeatureOpKind::kEigen: {
      if (spec.k_eigen < 1 || spec.k_eigen > 8)
        throw ContractError("eigen: k must be in [1,8]");
      if (spec.k_eigen > n) throw ContractError("eigen: k exceeds node count");
      const auto basis =
          normalized_adjacency_eigenvectors(g, spec.k_eigen, spec.tol, spec.max_iter);
      Tensor cols({n, spec.k_eigen});
      for (std::int64_t j = 0; j < spec.k_eigen; ++j)
        for (std::int64_t v = 0; v < n; ++v) cols.at(v, j) = basis[j][v];
      out.node_features = append_columns(g.node_features, cols);
      break;
    }
    case FeatureOpKind::kLocalDegreeProfile: {
      Tensor cols({n, 5});
      for (std::int64_t v = 0; v < n; ++v) {
        const std::int64_t lo = g.in_offsets[v], hi = g.in_offsets[v + 1];
        cols.at(v, 0) = static_cast<double>(g.degree(v));
        if (lo == hi) continue;  // isolated: neighbor stats stay 0
        double mn = 1e300, mx = 0.0, sum = 0.0, sum2 = 0.0;
        for (std::int64_t a = lo; a < hi; ++a) {
          const double nd = static_cast<double>(g.degree(g.arc_src[a]));
          mn = std::min(mn, nd);
          mx = std::max(mx, nd);
          sum += nd;
          sum2 += nd * nd;
        }
        const double cnt = static_cast<double>(hi - lo);
        const double mean = sum / cnt;
        cols.at(v, 1) = mn;
        cols.at(v, 2) = mx;
        cols.at(v, 3) = mean;
        cols.at(v, 4) = std::sqrt(std::max(0.0, sum2 / cnt - mean * mean));
      }
      out.node_features = append_columns(g.node_features, cols);
      break;
    }
    case FeatureOpKind::kNormalizeRows: {
      Tensor feats = g.node_features;
      const std::int64_t f = feats.numel() > 0 ? feats.dim(1) : 0;
      for (std::int64_t r = 0; r < n; ++r) {
        double sum = 0.0;
        for (std::int64_t c = 0; c < f; ++c) sum += std::fabs(feats.at(r, c));
        if (sum == 0.0) continue;
        for (std::int64_t c = 0; c < f; ++c) feats.at(r, c) /= sum;
      }
      out.node_features = std::move(feats);
      break;
    }
    case FeatureOpKind::kOnehotId: {
      Tensor cols({n, n});
      for (std::int64_t v = 0; v < n; ++v) cols.at(v, v) = 1.0;
      out.node_features = append_columns(g.node_features, cols);
      break;
    }
    case FeatureOpKind::kFilterConstant:
      return select_features(g, spec);
  }
  return out;
}

Graph select_features(const Graph& g, const FeatureOpSpec& spec) {
  if (spec.kind != FeatureOpKind::kFilterConstant)
    throw ContractError("select_features: only filter_constant is a selector");
  const Tensor& feats = g.node_features;
  if (feats.numel() == 0) throw ContractError("filter_constant: no features present");
  const std::int64_t n = feats.dim(0), f = feats.dim(1);
  std::vector<std::int64_t> keep;
  for (std::int64_t c = 0; c < f; ++c) {
    // two-pass variance
    double mean = 0.0;
    for (std::int64_t r = 0; r < n; ++r) mean += feats.at(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::int64_t r = 0; r < n; ++r) {
      const double d = feats.at(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    if (var >= spec.variance_floor) keep.push_back(c);
  }
  if (keep.empty())
    throw ValidationError("filter_constant: all columns constant, nothing to keep");
  if (static_cast<std::int64_t>(keep.size()) == f) return g;
  Graph out = g;
  Tensor reduced({n, static_cast<std::int64_t>(keep.size())});
  for (std::int64_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < keep.size(); ++j)
      reduced.at(r, static_cast<std::int64_t>(j)) = feats.at(r, keep[j]);
  out.node_features = std::move(reduced);
  return out;
}

Graph apply_feature_pipeline(const Graph& g, const std::vector<FeatureOpSpec>& pipeline) {
  Graph cur = g;
  for (const auto& spec : pipeline) cur = generate_features(cur, spec);
  return cur;
}

Dataset apply_feature_pipeline(const Dataset& ds, const std::vector<FeatureOpSpec>& pipeline) {
  Dataset out = ds;
  for (auto& g : out.graphs) g = apply_feature_pipeline(g, pipeline);
  return out;
}

std::int64_t count_triangles(const Graph& g) {
  // forward counting over u < v < w with sorted neighbor lists
  std::vector<std::vector<std::int32_t>> fwd(static_cast<std::size_t>(g.num_nodes));
  for (std::size_t a = 0; a < g.arc_src.size(); ++a) {
    const auto s = g.arc_src[a], d = g.arc_dst[a];
    if (s < d) fwd[s].push_back(d);
  }
  for (auto& nbrs : fwd) std::sort(nbrs.begin(), nbrs.end());
  std::int64_t triangles = 0;
  for (std::int64_t u = 0; u < g.num_nodes; ++u) {
    const auto& nu = fwd[u];
    for (auto v : nu) {
      const auto& nv = fwd[v];
      std::size_t i = 0, j = 0;
      while (i < nu.size() && j < nv.size()) {
        if (nu[i] == nv[j]) {
          ++triangles;
          ++i;
          ++j;
        } else if (nu[i] < nv[j]) {
          ++i;
        } else {
          ++j;
        }
      }
    }
  }
  return triangles;
}

std::int64_t count_components(const Graph& g) {
  std::vector<std::int32_t> parent(static_cast<std::size_t>(g.num_nodes));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::int32_t(std::int32_t)> find = [&](std::int32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (std::size_t a = 0; a < g.arc_src.size(); ++a) {
    const auto ra = find(g.arc_src[a]), rb = find(g.arc_dst[a]);
    if (ra != rb) parent[ra] = rb;
  }
  std::int64_t components = 0;
  for (std::int32_t v = 0; v < g.num_nodes; ++v)
    if (find(v) == v) ++components;
  return components;
}

GraphSignature graph_signature(const Graph& g) {
  GraphSignature sig;
  sig.num_nodes = g.num_nodes;
  sig.num_edges = g.num_arcs() / 2;
  sig.num_triangles = count_triangles(g);
  std::int64_t wedges = 0;
  for (std::int64_t v = 0; v < g.num_nodes; ++v) {
    const auto deg = g.degree(v);
    sig.max_degree = std::max(sig.max_degree, deg);
    wedges += deg * (deg - 1) / 2;
  }
  sig.global_clustering =
      wedges > 0 ? 3.0 * static_cast<double>(sig.num_triangles) /
                       static_cast<double>(wedges)
                 : 0.0;
  sig.num_components = g.num_nodes > 0 ? count_components(g) : 0;
  return sig;
}

}  // namespace agml
