#include "autodiff/tensor.hpp"

#include <cmath>
#include <sstream>

namespace entnas {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e <= 0) fail(ErrorKind::Contract, "tensor extent must be positive, got " + Tensor::shape_str(shape));
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)), data_(shape_numel(shape_), real(0)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size())
    fail(ErrorKind::Contract, "tensor data length " + std::to_string(data_.size()) + " does not match shape " + shape_str());
}

Tensor Tensor::full(std::vector<int> shape, real value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

bool Tensor::all_finite() const {
  for (real v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

void Tensor::fill(real value) {
  for (real& v : data_) v = value;
}

void Tensor::add_scaled(const Tensor& other, real scale) {
  if (!same_shape(other)) fail(ErrorKind::Contract, "add_scaled shape mismatch " + shape_str() + " vs " + other.shape_str());
  const real* src = other.data();
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * src[i];
}

real Tensor::item() const {
  if (data_.size() != 1) fail(ErrorKind::Contract, "item() on tensor of shape " + shape_str());
  return data_[0];
}

std::string Tensor::shape_str() const { return shape_str(shape_); }

std::string Tensor::shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

}  // namespace entnas
