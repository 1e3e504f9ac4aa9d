#include "agml/descriptor.hpp"

#include <nlohmann/json.hpp>

#include "agml/error.hpp"

using json = nlohmann::ordered_json;

namespace agml {

const char* to_name(Agg v) {
  switch (v) {
    case Agg::kSum: return "sum";
    case Agg::kMean: return "mean";
    case Agg::kMax: return "max";
    case Agg::kMlp: return "mlp";
  }
  return "?";
}

const char* to_name(WeightKind v) {
  switch (v) {
    case WeightKind::kConst: return "const";
    case WeightKind::kGcn: return "gcn";
    case WeightKind::kGat: return "gat";
    case WeightKind::kSymGat: return "sym_gat";
    case WeightKind::kCos: return "cos";
    case WeightKind::kLinear: return "linear";
    case WeightKind::kGeneLinear: return "gene_linear";
  }
  return "?";
}

const char* to_name(Combine v) {
  switch (v) {
    case Combine::kConcat: return "concat";
    case Combine::kAdd: return "add";
    case Combine::kMlp: return "mlp";
  }
  return "?";
}

const char* to_name(Readout v) {
  switch (v) {
    case Readout::kNone: return "none";
    case Readout::kSum: return "sum";
    case Readout::kMean: return "mean";
    case Readout::kMax: return "max";
  }
  return "?";
}

const char* to_name(MacroOp v) {
  switch (v) {
    case MacroOp::kMp: return "mp";
    case MacroOp::kZero: return "zero";
    case MacroOp::kIdentity: return "identity";
    case MacroOp::kMlp: return "mlp";
  }
  return "?";
}

const char* to_name(kern::Act v) {
  switch (v) {
    case kern::Act::kRelu: return "relu";
    case kern::Act::kLeakyRelu: return "leaky_relu";
    case kern::Act::kTanh: return "tanh";
    case kern::Act::kSigmoid: return "sigmoid";
    case kern::Act::kElu: return "elu";
    case kern::Act::kSoftplus: return "softplus";
    case kern::Act::kRelu6: return "relu6";
    case kern::Act::kIdentity: return "identity";
  }
  return "?";
}

namespace {

template <typename Enum>
Enum from_name_impl(const std::string& s, std::initializer_list<Enum> all,
                    const char* what) {
  for (Enum v : all)
    if (s == to_name(v)) return v;
  throw ContractError(std::string("unknown ") + what + ": " + s);
}

}  // namespace

Agg agg_from_name(const std::string& s) {
  return from_name_impl(s, {Agg::kSum, Agg::kMean, Agg::kMax, Agg::kMlp}, "agg");
}
WeightKind weight_kind_from_name(const std::string& s) {
  return from_name_impl(s,
                        {WeightKind::kConst, WeightKind::kGcn, WeightKind::kGat,
                         WeightKind::kSymGat, WeightKind::kCos,
                         WeightKind::kLinear, WeightKind::kGeneLinear},
                        "weight kind");
}
Combine combine_from_name(const std::string& s) {
  return from_name_impl(s, {Combine::kConcat, Combine::kAdd, Combine::kMlp},
                        "combine");
}
Readout readout_from_name(const std::string& s) {
  return from_name_impl(
      s, {Readout::kNone, Readout::kSum, Readout::kMean, Readout::kMax},
      "readout");
}
MacroOp macro_op_from_name(const std::string& s) {
  return from_name_impl(
      s, {MacroOp::kMp, MacroOp::kZero, MacroOp::kIdentity, MacroOp::kMlp},
      "macro op");
}
kern::Act act_from_name(const std::string& s) {
  return from_name_impl(s,
                        {kern::Act::kRelu, kern::Act::kLeakyRelu,
                         kern::Act::kTanh, kern::Act::kSigmoid, kern::Act::kElu,
                         kern::Act::kSoftplus, kern::Act::kRelu6,
                         kern::Act::kIdentity},
                        "activation");
}

ArchitectureDescriptor sequential_descriptor(std::vector<MicroChoice> layers,
                                             Readout readout) {
  ArchitectureDescriptor desc;
  desc.layers = std::move(layers);
  for (int l = 1; l <= static_cast<int>(desc.layers.size()); ++l)
    desc.macro[{l - 1, l}] = MacroOp::kMp;
  desc.readout = readout;
  return desc;
}

std::string descriptor_canonical_json(const ArchitectureDescriptor& desc) {
  json j;
  json layers = json::array();
  for (const auto& m : desc.layers) {
    json lj;
    lj["agg"] = to_name(m.agg);
    lj["weight"] = to_name(m.weight_kind);
    lj["heads"] = m.heads;
    lj["combine"] = to_name(m.combine);
    lj["dim"] = m.dim;
    lj["act"] = to_name(m.activation);
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);
  json macro = json::array();
  for (const auto& [edge, op] : desc.macro) {  // map order: sorted by (from,to)
    json ej;
    ej["from"] = edge.first;
    ej["to"] = edge.second;
    ej["op"] = to_name(op);
    macro.push_back(std::move(ej));
  }
  j["macro"] = std::move(macro);
  j["readout"] = to_name(desc.readout);
  return j.dump();
}

ArchitectureDescriptor descriptor_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("descriptor: ") + e.what());
  }
  ArchitectureDescriptor desc;
  for (const auto& lj : j.at("layers")) {
    MicroChoice m;
    m.agg = agg_from_name(lj.at("agg").get<std::string>());
    m.weight_kind = weight_kind_from_name(lj.at("weight").get<std::string>());
    m.heads = lj.at("heads").get<std::int64_t>();
    m.combine = combine_from_name(lj.at("combine").get<std::string>());
    m.dim = lj.at("dim").get<std::int64_t>();
    m.activation = act_from_name(lj.at("act").get<std::string>());
    desc.layers.push_back(m);
  }
  for (const auto& ej : j.at("macro"))
    desc.macro[{ej.at("from").get<int>(), ej.at("to").get<int>()}] =
        macro_op_from_name(ej.at("op").get<std::string>());
  desc.readout = readout_from_name(j.at("readout").get<std::string>());
  return desc;
}

std::vector<std::string> descriptor_violations(const ArchitectureDescriptor& desc,
                                               std::int64_t input_dim,
                                               const TaskSpec& task) {
  std::vector<std::string> out;
  const auto L = desc.num_layers();
  if (L < 1) {
    out.push_back("num-layers");
    return out;
  }
  auto dim_of = [&](int j) {
    return j == 0 ? input_dim : desc.layers[static_cast<std::size_t>(j - 1)].dim;
  };
  for (std::int64_t l = 0; l < L; ++l) {
    const auto& m = desc.layers[l];
    if (m.dim <= 0) out.push_back("positive-dim");
    if (m.heads < 1) out.push_back("positive-heads");
    if (m.combine == Combine::kConcat && m.dim % m.heads != 0)
      out.push_back("heads-divide-dim");
  }
  for (const auto& [edge, op] : desc.macro) {
    const auto [j, l] = edge;
    if (!(0 <= j && j < l && l <= L)) {
      out.push_back("macro-edge-range");
      continue;
    }
    if (op == MacroOp::kIdentity && dim_of(j) != dim_of(l))
      out.push_back("identity-dim");
  }
  const bool graph_task = task.level == TaskLevel::kGraph;
  if (graph_task != (desc.readout != Readout::kNone))
    out.push_back("readout-task");
  return out;
}

}  // namespace agml
