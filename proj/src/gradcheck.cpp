#include "agml/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "agml/rng.hpp"

namespace agml {

GradCheckReport grad_check(ParamStore& store, const TapeBuilder& build,
                           double h, std::int64_t max_entries_per_param,
                           std::uint64_t subsample_seed) {
  // Analytic gradients once.
  std::map<std::string, Tensor> analytic;
  {
    Tape tape;
    VarId loss = build(tape, store);
    tape.backward(loss);
    for (const auto& [name, id] : tape.param_bindings())
      analytic.emplace(name, tape.grad(id));
  }

  auto eval_loss = [&]() -> double {
    Tape tape;
    VarId loss = build(tape, store);
    return tape.value(loss)[0];
  };

  GradCheckReport report;
  Rng rng = make_rng(subsample_seed, 0x67C0DE);
  for (auto& [name, grad] : analytic) {
    Tensor& value = store.get(name);
    std::vector<std::int64_t> entries;
    if (value.numel() <= max_entries_per_param) {
      entries.resize(static_cast<std::size_t>(value.numel()));
      for (std::int64_t i = 0; i < value.numel(); ++i) entries[i] = i;
    } else {
      for (std::int64_t i = 0; i < max_entries_per_param; ++i)
        entries.push_back(uniform_int(rng, 0, value.numel() - 1));
      std::sort(entries.begin(), entries.end());
      entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
    }
    for (std::int64_t idx : entries) {
      const double saved = value[idx];
      value[idx] = saved + h;
      const double up = eval_loss();
      value[idx] = saved - h;
      const double down = eval_loss();
      value[idx] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = grad[idx];
      const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-6});
      const double rel = std::fabs(fd - an) / denom;
      ++report.checked_entries;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
      }
    }
  }
  return report;
}

}  // namespace agml
