#include "agml/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "agml/autodiff.hpp"
#include "agml/error.hpp"
#include "agml/kernels.hpp"

namespace agml {

void ParamStore::add(const std::string& name, Tensor value) {
  if (slots_.count(name)) throw ContractError("param store: duplicate name " + name);
  Slot s;
  s.m = Tensor(value.shape());
  s.v = Tensor(value.shape());
  s.value = std::move(value);
  slots_.emplace(name, std::move(s));
}

bool ParamStore::contains(const std::string& name) const {
  return slots_.count(name) != 0;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw ContractError("param store: unknown name " + name);
  return it->second.value;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw ContractError("param store: unknown name " + name);
  return it->second.value;
}

ParamStore::Slot& ParamStore::slot(const std::string& name) {
  auto it = slots_.find(name);
  if (it == slots_.end()) throw ContractError("param store: unknown name " + name);
  return it->second;
}

std::int64_t ParamStore::total_parameters() const {
  std::int64_t n = 0;
  for (const auto& [name, s] : slots_) n += s.value.numel();
  return n;
}

void adam_step(ParamStore& store,
               const std::vector<std::pair<std::string, const Tensor*>>& grads,
               const AdamConfig& cfg) {
  if (cfg.lr <= 0.0) throw ContractError("adam: lr must be positive");
  store.bump_step();
  const auto t = static_cast<double>(store.step_count());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  const auto& k = kern::active_backend();
  for (const auto& [name, grad] : grads) {
    auto& slot = store.slot(name);
    if (!slot.value.same_shape(*grad))
      throw ContractError("adam: grad shape mismatch for " + name);
    k.adam_step(slot.value.data(), grad->data(), slot.m.data(), slot.v.data(),
                slot.value.numel(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps,
                cfg.weight_decay, bc1, bc2);
  }
}

std::vector<std::pair<std::string, const Tensor*>> collect_grads(Tape& tape) {
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(tape.param_bindings().size());
  for (const auto& [name, id] : tape.param_bindings())
    out.emplace_back(name, &tape.grad(id));
  return out;
}

namespace {

constexpr std::uint8_t kCheckpointVersion = 1;

void put_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ofstream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

float get_f32(std::ifstream& is) {
  std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open " + path + " for writing");
  os.put(static_cast<char>(kCheckpointVersion));
  put_u32(os, static_cast<std::uint32_t>(store.slots().size()));
  for (const auto& [name, slot] : store.slots()) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(os, static_cast<std::uint32_t>(slot.value.shape().size()));
    for (auto d : slot.value.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  }
  for (const auto& [name, slot] : store.slots())
    for (std::int64_t i = 0; i < slot.value.numel(); ++i)
      put_f32(os, static_cast<float>(slot.value[i]));
  if (!os) throw IoError("checkpoint: write failed for " + path);
}

ParamStore load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open " + path);
  const int version = is.get();
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint: unsupported format version");
  const std::uint32_t count = get_u32(is);
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = get_u32(is);
    std::vector<std::int64_t> shape(rank);
    for (auto& d : shape) d = get_u32(is);
    entries.emplace_back(std::move(name), std::move(shape));
  }
  ParamStore store;
  for (auto& [name, shape] : entries) {
    Tensor t(shape);
    for (std::int64_t i = 0; i < t.numel(); ++i)
      t[i] = static_cast<double>(get_f32(is));
    store.add(name, std::move(t));
  }
  if (!is) throw ParseError("checkpoint: truncated file " + path);
  return store;
}

}  // namespace agml
