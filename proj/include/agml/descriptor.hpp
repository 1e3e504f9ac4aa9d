#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "agml/graph.hpp"
#include "agml/kernels.hpp"

namespace agml {

enum class Agg { kSum, kMean, kMax, kMlp };
enum class WeightKind { kConst, kGcn, kGat, kSymGat, kCos, kLinear, kGeneLinear };
enum class Combine { kConcat, kAdd, kMlp };
enum class Readout { kNone, kSum, kMean, kMax };
enum class MacroOp { kMp, kZero, kIdentity, kMlp };

const char* to_name(Agg v);
const char* to_name(WeightKind v);
const char* to_name(Combine v);
const char* to_name(Readout v);
const char* to_name(MacroOp v);
const char* to_name(kern::Act v);

Agg agg_from_name(const std::string& s);
WeightKind weight_kind_from_name(const std::string& s);
Combine combine_from_name(const std::string& s);
Readout readout_from_name(const std::string& s);
MacroOp macro_op_from_name(const std::string& s);
kern::Act act_from_name(const std::string& s);

// Per-layer design choices of one message-passing layer.
struct MicroChoice {
  Agg agg = Agg::kSum;
  WeightKind weight_kind = WeightKind::kConst;
  std::int64_t heads = 1;
  Combine combine = Combine::kAdd;
  std::int64_t dim = 16;
  kern::Act activation = kern::Act::kRelu;
};

// Complete genome of one GNN: micro choices per layer, inter-layer wiring,
// and the readout for graph-level tasks. Layer 0 is the input features;
// layers 1..L carry MicroChoices. Macro edges (j, l) with j < l select how
// representation j feeds layer l.
struct ArchitectureDescriptor {
  std::vector<MicroChoice> layers;
  std::map<std::pair<int, int>, MacroOp> macro;
  Readout readout = Readout::kNone;

  std::int64_t num_layers() const { return static_cast<std::int64_t>(layers.size()); }
};

// Plain sequential wiring: (l-1, l) = MP for every layer.
ArchitectureDescriptor sequential_descriptor(std::vector<MicroChoice> layers,
                                             Readout readout = Readout::kNone);

// Canonical JSON string: fixed field order, lowercase enum names. This exact
// string is the architecture's identity key for caching and deduplication.
std::string descriptor_canonical_json(const ArchitectureDescriptor& desc);
ArchitectureDescriptor descriptor_from_json(const std::string& json_text);

// Structural violations ("identity-dim", "heads-divide-dim", ...) given the
// input feature dimension and task; empty result means valid.
std::vector<std::string> descriptor_violations(const ArchitectureDescriptor& desc,
                                               std::int64_t input_dim,
                                               const TaskSpec& task);

}  // namespace agml
