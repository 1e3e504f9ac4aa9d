#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "agml/tensor.hpp"

namespace agml {

class Tape;

// Named parameter tensors plus per-parameter Adam state. Owned by exactly one
// training session at a time.
class ParamStore {
 public:
  struct Slot {
    Tensor value;
    Tensor m;  // first moment
    Tensor v;  // second moment
  };

  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  Slot& slot(const std::string& name);

  // Deterministic iteration order (lexicographic by name).
  const std::map<std::string, Slot>& slots() const { return slots_; }
  std::map<std::string, Slot>& slots() { return slots_; }

  std::int64_t total_parameters() const;
  std::int64_t step_count() const { return step_; }
  void set_step_count(std::int64_t s) { step_ = s; }
  void bump_step() { ++step_; }

 private:
  std::map<std::string, Slot> slots_;
  std::int64_t step_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// One Adam update over every (name, grad) pair; grads for names missing from
// the store are a contract violation. Increments the store's step counter.
void adam_step(ParamStore& store,
               const std::vector<std::pair<std::string, const Tensor*>>& grads,
               const AdamConfig& cfg);

// Convenience: pull grads for all bound params out of a tape after backward.
std::vector<std::pair<std::string, const Tensor*>> collect_grads(Tape& tape);

// Binary checkpoint: version byte, then a name/shape table, then the packed
// float32 payload, little-endian throughout.
void save_checkpoint(const ParamStore& store, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

}  // namespace agml
