#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

#include "agml/error.hpp"
#include "agml/rng.hpp"

namespace agml {

// Dense row-major tensor of doubles. Rank is 1 or 2 in practice (vectors and
// matrices); nothing in the compute graph needs more.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), 0.0) {}
  Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != checked_numel(shape_))
      throw ContractError("tensor: data size does not match shape");
  }

  static Tensor zeros(std::int64_t rows, std::int64_t cols) {
    return Tensor({rows, cols});
  }
  static Tensor vector(std::vector<double> v) {
    auto n = static_cast<std::int64_t>(v.size());
    return Tensor({n}, std::move(v));
  }
  static Tensor matrix(std::int64_t rows, std::int64_t cols,
                       std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
  }
  static Tensor full(std::vector<std::int64_t> shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }
  // Glorot-style uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
  static Tensor glorot(std::int64_t fan_out, std::int64_t fan_in, Rng& rng) {
    Tensor t({fan_out, fan_in});
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : t.data_) x = uniform(rng, -s, s);
    return t;
  }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::size_t i) const { return shape_.at(i); }
  std::int64_t rows() const { return rank() == 2 ? shape_[0] : shape_.at(0); }
  std::int64_t cols() const { return rank() == 2 ? shape_[1] : 1; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
  double& at(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols() + c)]; }
  double at(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  Tensor transposed() const {
    if (rank() != 2) throw ContractError("tensor: transpose needs rank 2");
    Tensor out({shape_[1], shape_[0]});
    for (std::int64_t r = 0; r < shape_[0]; ++r)
      for (std::int64_t c = 0; c < shape_[1]; ++c)
        out.at(c, r) = at(r, c);
    return out;
  }

 private:
  static std::int64_t checked_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
      if (d < 0) throw ContractError("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

}  // namespace agml
