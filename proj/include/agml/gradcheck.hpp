#pragma once

#include <functional>
#include <string>

#include "agml/autodiff.hpp"
#include "agml/optim.hpp"

namespace agml {

// Builds the forward graph from the current store contents and returns the
// scalar loss var. Must be deterministic for fixed store contents.
using TapeBuilder = std::function<VarId(Tape&, ParamStore&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::int64_t checked_entries = 0;
};

// Central finite differences against reverse-mode gradients, h per scalar.
// Parameters larger than max_entries_per_param are subsampled (seeded).
GradCheckReport grad_check(ParamStore& store, const TapeBuilder& build,
                           double h = 1e-5,
                           std::int64_t max_entries_per_param = 64,
                           std::uint64_t subsample_seed = 0);

}  // namespace agml
