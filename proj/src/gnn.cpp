#include "agml/gnn.hpp"

#include <algorithm>
#include <cmath>

#include "agml/error.hpp"

namespace agml {

namespace {

std::string edge_prefix(int l, int j) {
  return "L" + std::to_string(l) + "/from" + std::to_string(j);
}

std::int64_t head_dim(const MicroChoice& m) {
  return m.combine == Combine::kConcat ? m.dim / m.heads : m.dim;
}

}  // namespace

CompiledTopology compile_topology(const Graph& g) {
  CompiledTopology topo;
  topo.num_nodes = g.num_nodes;
  auto src = std::make_shared<IndexVec>(g.arc_src);
  auto dst = std::make_shared<IndexVec>(g.arc_dst);
  auto offsets = std::make_shared<OffsetVec>(g.in_offsets);
  const auto num_arcs = static_cast<std::int64_t>(src->size());

  auto reverse = std::make_shared<IndexVec>(num_arcs, -1);
  for (std::int64_t a = 0; a < num_arcs; ++a) {
    // locate arc ((*dst)[a] <- (*src)[a]) reversed: dst segment of (*src)[a]
    const std::int32_t want_dst = (*src)[a];
    const std::int32_t want_src = (*dst)[a];
    const std::int64_t lo = (*offsets)[want_dst], hi = (*offsets)[want_dst + 1];
    auto begin = src->begin() + lo;
    auto end = src->begin() + hi;
    auto it = std::lower_bound(begin, end, want_src);
    if (it != end && *it == want_src)
      (*reverse)[a] = static_cast<std::int32_t>(lo + (it - begin));
  }

  auto coeff = std::make_shared<Tensor>(Tensor({num_arcs, 1}));
  for (std::int64_t a = 0; a < num_arcs; ++a) {
    const double di = static_cast<double>(g.degree((*dst)[a]) + 1);
    const double dj = static_cast<double>(g.degree((*src)[a]) + 1);
    (*coeff)[a] = 1.0 / std::sqrt(di * dj);
  }

  topo.arc_src = std::move(src);
  topo.arc_dst = std::move(dst);
  topo.in_offsets = std::move(offsets);
  topo.arc_reverse = std::move(reverse);
  topo.gcn_coeff = std::move(coeff);
  return topo;
}

GraphBatch make_batch(const Dataset& ds) {
  GraphBatch batch;
  if (ds.task.level == TaskLevel::kNode) {
    const Graph& g = ds.node_graph();
    batch.topo = compile_topology(g);
    batch.features = g.node_features;
    batch.labels = std::make_shared<const std::vector<std::int32_t>>(g.labels);
    batch.num_items = g.num_nodes;
    return batch;
  }

  // Disjoint union of all graphs; arcs stay sorted because node blocks are
  // assigned in graph order.
  Graph unioned;
  std::int64_t total_nodes = 0;
  const std::int64_t f = ds.graphs.empty() ? 0 : ds.graphs[0].feature_dim();
  for (const auto& g : ds.graphs) total_nodes += g.num_nodes;
  unioned.num_nodes = total_nodes;
  unioned.node_features = Tensor({total_nodes, f});
  auto offsets = std::make_shared<OffsetVec>();
  offsets->push_back(0);
  std::vector<std::int32_t> labels;
  std::int64_t base = 0;
  for (const auto& g : ds.graphs) {
    if (g.feature_dim() != f)
      throw ContractError("batch: inconsistent feature dims across graphs");
    for (std::size_t a = 0; a < g.arc_src.size(); ++a) {
      unioned.arc_src.push_back(static_cast<std::int32_t>(g.arc_src[a] + base));
      unioned.arc_dst.push_back(static_cast<std::int32_t>(g.arc_dst[a] + base));
    }
    std::copy(g.node_features.data(),
              g.node_features.data() + g.num_nodes * f,
              unioned.node_features.data() + base * f);
    labels.push_back(g.graph_label);
    base += g.num_nodes;
    offsets->push_back(base);
  }
  unioned.in_offsets.assign(static_cast<std::size_t>(total_nodes) + 1, 0);
  for (auto d : unioned.arc_dst) ++unioned.in_offsets[static_cast<std::size_t>(d) + 1];
  for (std::int64_t v = 0; v < total_nodes; ++v)
    unioned.in_offsets[v + 1] += unioned.in_offsets[v];

  batch.topo = compile_topology(unioned);
  batch.topo.num_graphs = static_cast<std::int64_t>(ds.graphs.size());
  batch.topo.graph_offsets = std::move(offsets);
  batch.features = std::move(unioned.node_features);
  batch.labels = std::make_shared<const std::vector<std::int32_t>>(std::move(labels));
  batch.num_items = batch.topo.num_graphs;
  return batch;
}

std::vector<ParamInfo> enumerate_params(const ArchitectureDescriptor& desc,
                                        const TaskSpec& task,
                                        std::int64_t input_dim) {
  std::vector<ParamInfo> out;
  auto weight = [&](std::string name, std::int64_t rows, std::int64_t cols, int layer) {
    out.push_back({std::move(name), {rows, cols}, layer, false});
  };
  auto bias = [&](std::string name, std::int64_t n, int layer) {
    out.push_back({std::move(name), {n}, layer, true});
  };
  const auto L = static_cast<int>(desc.num_layers());
  auto dim_of = [&](int j) {
    return j == 0 ? input_dim : desc.layers[static_cast<std::size_t>(j - 1)].dim;
  };
  for (const auto& [edge, op] : desc.macro) {
    const auto [j, l] = edge;
    const auto& m = desc.layers[static_cast<std::size_t>(l - 1)];
    const std::int64_t dj = dim_of(j), dl = m.dim;
    const std::string prefix = edge_prefix(l, j);
    if (op == MacroOp::kMlp) {
      weight(prefix + "/mlp_W", dl, dj, l);
      bias(prefix + "/mlp_b", dl, l);
      continue;
    }
    if (op != MacroOp::kMp) continue;
    const std::int64_t dh = head_dim(m);
    for (std::int64_t h = 0; h < m.heads; ++h) {
      const std::string hp = prefix + "/h" + std::to_string(h);
      weight(hp + "/W", dh, dj, l);
      if (m.weight_kind == WeightKind::kGat || m.weight_kind == WeightKind::kSymGat) {
        weight(hp + "/att_dst", 1, dh, l);
        weight(hp + "/att_src", 1, dh, l);
      }
      if (m.weight_kind == WeightKind::kGeneLinear) weight(hp + "/att_scale", 1, 1, l);
      if (m.agg == Agg::kMlp) {
        weight(hp + "/agg_W1", dh, dh, l);
        bias(hp + "/agg_b1", dh, l);
        weight(hp + "/agg_W2", dh, dh, l);
        bias(hp + "/agg_b2", dh, l);
      }
    }
    switch (m.combine) {
      case Combine::kAdd:
        if (dj != dl) weight(prefix + "/self_W", dl, dj, l);
        bias(prefix + "/b", dl, l);
        break;
      case Combine::kConcat:
        weight(prefix + "/comb_W", dl, dl + dj, l);
        bias(prefix + "/comb_b", dl, l);
        break;
      case Combine::kMlp:
        weight(prefix + "/comb_W1", dl, dl + dj, l);
        bias(prefix + "/comb_b1", dl, l);
        weight(prefix + "/comb_W2", dl, dl, l);
        bias(prefix + "/comb_b2", dl, l);
        break;
    }
  }
  weight("head/W", task.num_classes, dim_of(L), -1);
  bias("head/b", task.num_classes, -1);
  return out;
}

TrainedModel assemble_model(const ArchitectureDescriptor& desc,
                            const TaskSpec& task, std::int64_t input_dim,
                            std::uint64_t seed) {
  const auto violations = descriptor_violations(desc, input_dim, task);
  if (!violations.empty()) {
    std::string msg = "assemble: invalid descriptor:";
    for (const auto& v : violations) msg += " " + v;
    throw ValidationError(msg);
  }
  TrainedModel model;
  model.descriptor = desc;
  model.task = task;
  model.input_dim = input_dim;
  model.arch_key = descriptor_canonical_json(desc);
  model.meta.seed = seed;

  Rng rng = make_rng(seed, 0xA55E);
  for (const auto& info : enumerate_params(desc, task, input_dim)) {
    if (info.is_bias) {
      model.params.add(info.name, Tensor({info.shape[0]}));
    } else if (info.name.size() >= 9 &&
               info.name.compare(info.name.size() - 9, 9, "att_scale") == 0) {
      model.params.add(info.name, Tensor({1, 1}, {1.0}));
    } else {
      model.params.add(info.name, Tensor::glorot(info.shape[0], info.shape[1], rng));
    }
  }
  return model;
}

namespace {

struct EdgeContext {
  Tape& tape;
  ParamStore& params;
  const CompiledTopology& topo;
};

VarId arc_scores(EdgeContext& ctx, const MicroChoice& m, VarId z,
                 const std::string& hp) {
  Tape& t = ctx.tape;
  const CompiledTopology& topo = ctx.topo;
  switch (m.weight_kind) {
    case WeightKind::kConst:
      return -1;  // weight 1 everywhere, no scaling needed
    case WeightKind::kGcn:
      return t.input(*topo.gcn_coeff);
    case WeightKind::kGat:
    case WeightKind::kSymGat: {
      VarId zl = t.linear(z, t.param(ctx.params, hp + "/att_dst"));
      VarId zr = t.linear(z, t.param(ctx.params, hp + "/att_src"));
      VarId e = t.activation(
          t.add(t.gather_rows(zl, topo.arc_dst), t.gather_rows(zr, topo.arc_src)),
          kern::Act::kLeakyRelu);
      if (m.weight_kind == WeightKind::kSymGat)
        e = t.add(e, t.gather_rows(e, topo.arc_reverse));
      return t.segment_softmax(e, topo.in_offsets);
    }
    case WeightKind::kCos: {
      VarId c = t.rowwise_cosine(t.gather_rows(z, topo.arc_dst),
                                 t.gather_rows(z, topo.arc_src));
      return t.segment_softmax(c, topo.in_offsets);
    }
    case WeightKind::kLinear:
    case WeightKind::kGeneLinear: {
      VarId rs = t.row_sum(z);
      VarId e = t.activation(
          t.add(t.gather_rows(rs, topo.arc_dst), t.gather_rows(rs, topo.arc_src)),
          kern::Act::kTanh);
      if (m.weight_kind == WeightKind::kGeneLinear)
        e = t.matmul(e, t.param(ctx.params, hp + "/att_scale"));
      return t.segment_softmax(e, topo.in_offsets);
    }
  }
  return -1;
}

VarId mp_edge(EdgeContext& ctx, const MicroChoice& m, int l, int j,
              std::int64_t dim_j, VarId h_in) {
  Tape& t = ctx.tape;
  const CompiledTopology& topo = ctx.topo;
  const std::string prefix = edge_prefix(l, j);

  std::vector<VarId> head_outputs;
  for (std::int64_t h = 0; h < m.heads; ++h) {
    const std::string hp = prefix + "/h" + std::to_string(h);
    VarId z = t.linear(h_in, t.param(ctx.params, hp + "/W"));
    VarId scores = arc_scores(ctx, m, z, hp);
    VarId msgs = t.gather_rows(z, topo.arc_src);
    if (scores >= 0) msgs = t.scale_rows(msgs, scores);
    VarId agg = -1;
    switch (m.agg) {
      case Agg::kSum:
        agg = t.segment_sum(msgs, topo.in_offsets);
        break;
      case Agg::kMean:
        agg = t.segment_mean(msgs, topo.in_offsets);
        break;
      case Agg::kMax:
        agg = t.segment_max(msgs, topo.in_offsets);
        break;
      case Agg::kMlp: {
        VarId s = t.segment_sum(msgs, topo.in_offsets);
        VarId hidden = t.activation(
            t.linear(s, t.param(ctx.params, hp + "/agg_W1"),
                     t.param(ctx.params, hp + "/agg_b1")),
            kern::Act::kRelu);
        agg = t.linear(hidden, t.param(ctx.params, hp + "/agg_W2"),
                       t.param(ctx.params, hp + "/agg_b2"));
        break;
      }
    }
    head_outputs.push_back(agg);
  }

  VarId msg;
  if (head_outputs.size() == 1) {
    msg = head_outputs[0];
  } else if (m.combine == Combine::kConcat) {
    msg = head_outputs[0];
    for (std::size_t h = 1; h < head_outputs.size(); ++h)
      msg = t.concat_cols(msg, head_outputs[h]);
  } else {
    msg = head_outputs[0];
    for (std::size_t h = 1; h < head_outputs.size(); ++h)
      msg = t.add(msg, head_outputs[h]);
    msg = t.scale(msg, 1.0 / static_cast<double>(m.heads));
  }

  VarId pre = -1;
  switch (m.combine) {
    case Combine::kAdd: {
      VarId self = h_in;
      if (dim_j != m.dim)
        self = t.linear(h_in, t.param(ctx.params, prefix + "/self_W"));
      pre = t.add_bias(t.add(msg, self), t.param(ctx.params, prefix + "/b"));
      break;
    }
    case Combine::kConcat:
      pre = t.linear(t.concat_cols(msg, h_in),
                     t.param(ctx.params, prefix + "/comb_W"),
                     t.param(ctx.params, prefix + "/comb_b"));
      break;
    case Combine::kMlp: {
      VarId hidden = t.activation(
          t.linear(t.concat_cols(msg, h_in),
                   t.param(ctx.params, prefix + "/comb_W1"),
                   t.param(ctx.params, prefix + "/comb_b1")),
          kern::Act::kRelu);
      pre = t.linear(hidden, t.param(ctx.params, prefix + "/comb_W2"),
                     t.param(ctx.params, prefix + "/comb_b2"));
      break;
    }
  }
  return t.activation(pre, m.activation);
}

}  // namespace

VarId build_forward(Tape& tape, ParamStore& params,
                    const ArchitectureDescriptor& desc, const TaskSpec& task,
                    const CompiledTopology& topo, const Tensor& features,
                    const ForwardOptions& opts) {
  const std::int64_t input_dim = features.dim(1);
  const auto violations = descriptor_violations(desc, input_dim, task);
  if (!violations.empty())
    throw ValidationError("forward: invalid descriptor: " + violations.front());

  EdgeContext ctx{tape, params, topo};
  Rng drop_rng = make_rng(opts.dropout_seed, 0xD209);
  const auto L = static_cast<int>(desc.num_layers());
  auto dim_of = [&](int j) {
    return j == 0 ? input_dim : desc.layers[static_cast<std::size_t>(j - 1)].dim;
  };

  std::vector<VarId> rep(static_cast<std::size_t>(L) + 1, -1);
  std::vector<VarId> rep_dropped(static_cast<std::size_t>(L) + 1, -1);
  rep[0] = tape.input(features);
  rep_dropped[0] = tape.dropout(rep[0], opts.dropout, opts.train_mode, drop_rng);

  for (int l = 1; l <= L; ++l) {
    VarId acc = -1;
    for (const auto& [edge, op] : desc.macro) {
      if (edge.second != l || op == MacroOp::kZero) continue;
      const int j = edge.first;
      VarId out = -1;
      switch (op) {
        case MacroOp::kMp:
          out = mp_edge(ctx, desc.layers[static_cast<std::size_t>(l - 1)], l, j,
                        dim_of(j), rep_dropped[j]);
          break;
        case MacroOp::kIdentity:
          out = rep[j];  // residuals bypass dropout
          break;
        case MacroOp::kMlp: {
          const std::string prefix = edge_prefix(l, j);
          out = tape.activation(
              tape.linear(rep_dropped[j], tape.param(params, prefix + "/mlp_W"),
                          tape.param(params, prefix + "/mlp_b")),
              desc.layers[static_cast<std::size_t>(l - 1)].activation);
          break;
        }
        case MacroOp::kZero:
          break;
      }
      acc = acc < 0 ? out : tape.add(acc, out);
    }
    if (acc < 0) acc = tape.input(Tensor({topo.num_nodes, dim_of(l)}));
    rep[l] = acc;
    rep_dropped[l] =
        l < L ? tape.dropout(rep[l], opts.dropout, opts.train_mode, drop_rng)
              : rep[l];
  }

  VarId head_in = rep[L];
  if (task.level == TaskLevel::kGraph) {
    switch (desc.readout) {
      case Readout::kSum:
        head_in = tape.segment_sum(head_in, topo.graph_offsets);
        break;
      case Readout::kMean:
        head_in = tape.segment_mean(head_in, topo.graph_offsets);
        break;
      case Readout::kMax:
        head_in = tape.segment_max(head_in, topo.graph_offsets);
        break;
      case Readout::kNone:
        throw ValidationError("forward: graph task requires a readout");
    }
  }
  return tape.linear(head_in, tape.param(params, "head/W"),
                     tape.param(params, "head/b"));
}

Tensor predict_probabilities(TrainedModel& model, const GraphBatch& batch) {
  Tape tape;
  ForwardOptions opts;  // eval mode
  VarId logits = build_forward(tape, model.params, model.descriptor, model.task,
                               batch.topo, batch.features, opts);
  VarId probs = tape.row_softmax(logits);
  return tape.value(probs);
}

double accuracy(const Tensor& scores, const std::vector<std::int32_t>& labels,
                const std::vector<std::int32_t>& indices) {
  if (indices.empty()) throw ContractError("accuracy: empty index set");
  const std::int64_t k = scores.dim(1);
  std::int64_t hits = 0;
  for (auto idx : indices) {
    const double* row = scores.data() + static_cast<std::int64_t>(idx) * k;
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < k; ++c)
      if (row[c] > row[best]) best = c;  // ties to lowest class index
    if (best == labels[idx]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(indices.size());
}

double aggregation_weight(WeightKind kind, const std::vector<double>& h_i,
                          const std::vector<double>& h_j, double deg_i,
                          double deg_j, const AttentionParams& attn,
                          bool* zero_norm_warning) {
  auto transform = [&](const std::vector<double>& h) {
    const std::int64_t d = attn.w_a.dim(0), f = attn.w_a.dim(1);
    std::vector<double> z(static_cast<std::size_t>(d), 0.0);
    for (std::int64_t r = 0; r < d; ++r)
      for (std::int64_t c = 0; c < f; ++c)
        z[r] += attn.w_a.at(r, c) * h[static_cast<std::size_t>(c)];
    return z;
  };
  auto dot = [](const Tensor& a, const std::vector<double>& v) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) acc += a[i] * v[static_cast<std::size_t>(i)];
    return acc;
  };
  auto leaky = [](double x) { return x > 0.0 ? x : 0.2 * x; };

  switch (kind) {
    case WeightKind::kConst:
      return 1.0;
    case WeightKind::kGcn:
      if (deg_i < 1.0 || deg_j < 1.0)
        throw ContractError("aggregation_weight: gcn requires degrees >= 1");
      return 1.0 / std::sqrt(deg_i * deg_j);
    case WeightKind::kGat: {
      const auto zi = transform(h_i), zj = transform(h_j);
      return leaky(dot(attn.att_dst, zi) + dot(attn.att_src, zj));
    }
    case WeightKind::kSymGat: {
      const auto zi = transform(h_i), zj = transform(h_j);
      return leaky(dot(attn.att_dst, zi) + dot(attn.att_src, zj)) +
             leaky(dot(attn.att_dst, zj) + dot(attn.att_src, zi));
    }
    case WeightKind::kCos: {
      const auto zi = transform(h_i), zj = transform(h_j);
      double dotp = 0.0, ni = 0.0, nj = 0.0;
      for (std::size_t c = 0; c < zi.size(); ++c) {
        dotp += zi[c] * zj[c];
        ni += zi[c] * zi[c];
        nj += zj[c] * zj[c];
      }
      if (ni == 0.0 || nj == 0.0) {
        if (zero_norm_warning) *zero_norm_warning = true;
        return 0.0;
      }
      return dotp / (std::sqrt(ni) * std::sqrt(nj));
    }
    case WeightKind::kLinear:
    case WeightKind::kGeneLinear: {
      const auto zi = transform(h_i), zj = transform(h_j);
      double sum = 0.0;
      for (std::size_t c = 0; c < zi.size(); ++c) sum += zi[c] + zj[c];
      const double base = std::tanh(sum);
      return kind == WeightKind::kLinear ? base : base * attn.gene_scale;
    }
  }
  throw ContractError("aggregation_weight: unknown kind");
}

Tensor readout_matrix(const Tensor& h, Readout kind) {
  if (h.numel() == 0 || h.dim(0) == 0)
    throw ContractError("readout: empty node matrix");
  const std::int64_t n = h.dim(0), d = h.dim(1);
  Tensor out({1, d});
  for (std::int64_t c = 0; c < d; ++c) {
    double acc = kind == Readout::kMax ? h.at(0, c) : 0.0;
    for (std::int64_t r = 0; r < n; ++r) {
      const double v = h.at(r, c);
      if (kind == Readout::kMax)
        acc = std::max(acc, v);
      else
        acc += v;
    }
    if (kind == Readout::kMean) acc /= static_cast<double>(n);
    if (kind == Readout::kNone)
      throw ContractError("readout: kind none");
    out.at(0, c) = acc;
  }
  return out;
}

}  // namespace agml
