#pragma once

#include <string>

#include "agml/graph.hpp"

namespace agml {

// Directory layouts:
//   node tasks:  edges.csv ("u,v" per line), features.csv (one row of
//                comma-separated reals per node), labels.csv (one integer per
//                node), optional splits.json {"train":[...],"val":[...],
//                "test":[...]}.
//   graph tasks: graphs.jsonl, one {"edges":[[u,v],...],"features":[[...]],
//                "label":int} object per line, optional splits.json indexing
//                graphs.
// All files UTF-8 with LF line endings.
//
// When splits.json is absent a stratified 60/20/20 split is generated from
// `seed`. num_classes is inferred from the labels when task.num_classes == 0.
Dataset load_dataset(const std::string& dir, TaskSpec task,
                     std::uint64_t seed = 0);

// Writes the canonical on-disk form (sorted, deduplicated, shortest
// round-trip float formatting). load followed by write is byte-stable.
void write_dataset(const Dataset& ds, const std::string& dir);

}  // namespace agml
