#include "davsp/tensor.hpp"

#include <cmath>
#include <cstring>

namespace davsp {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_product(shape_)) {
    throw numeric_error("tensor data size does not match shape");
  }
}

Tensor Tensor::full(std::vector<std::size_t> shape, float value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

float& Tensor::at(std::size_t c, std::size_t y, std::size_t x) {
  return data_[(c * shape_[1] + y) * shape_[2] + x];
}

float Tensor::at(std::size_t c, std::size_t y, std::size_t x) const {
  return data_[(c * shape_[1] + y) * shape_[2] + x];
}

bool Tensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool Tensor::bit_equal(const Tensor& other) const {
  if (shape_ != other.shape_) return false;
  return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

ImageTensor::ImageTensor(Tensor tensor) : t(std::move(tensor)) { validate(); }

void ImageTensor::validate() const {
  if (t.rank() != 3 || t.dim(0) != 3 || t.dim(1) == 0 || t.dim(2) == 0) {
    throw numeric_error("image tensor must have shape 3xHxW with positive H, W");
  }
  for (float v : t.values()) {
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw numeric_error("image pixel values must be finite and within [0,1]");
    }
  }
}

}  // namespace davsp
