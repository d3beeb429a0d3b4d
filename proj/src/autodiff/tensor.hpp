#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "common.hpp"

namespace entnas {

// Dense n-dimensional array, row-major. The single value carrier of the
// whole engine: activations, parameters and gradients are all Tensors.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, std::vector<real> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, real value);
  static Tensor scalar(real value) { return full({1}, value); }

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int>& shape() const { return shape_; }
  int extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
  std::size_t size() const { return data_.size(); }

  real* data() { return data_.data(); }
  const real* data() const { return data_.data(); }
  real& operator[](std::size_t i) { return data_[i]; }
  real operator[](std::size_t i) const { return data_[i]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  void fill(real value);
  void zero() { fill(0); }

  // In-place elementwise helpers used by the optimizers.
  void add_scaled(const Tensor& other, real scale);

  real item() const;  // value of a single-element tensor

  std::string shape_str() const;
  static std::string shape_str(const std::vector<int>& shape);

 private:
  std::vector<int> shape_;
  std::vector<real> data_;
};

std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace entnas
