#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "davsp/error.hpp"

namespace davsp {

// Dense row-major float32 tensor. The storage type is pinned to float so that
// artifacts round-trip bit-exactly through the on-disk format.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<float> data);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, float value);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& values() { return data_; }
  const std::vector<float>& values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // 3-d accessors for the common 3xHxW case.
  float& at(std::size_t c, std::size_t y, std::size_t x);
  float at(std::size_t c, std::size_t y, std::size_t x) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  bool bit_equal(const Tensor& other) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> data_;
};

// A visual input: 3xHxW pixels in [0,1].
struct ImageTensor {
  Tensor t;

  ImageTensor() = default;
  explicit ImageTensor(Tensor tensor);
  ImageTensor(std::size_t h, std::size_t w) : ImageTensor(Tensor({3, h, w})) {}

  std::size_t height() const { return t.dim(1); }
  std::size_t width() const { return t.dim(2); }

  float& at(std::size_t c, std::size_t y, std::size_t x) { return t.at(c, y, x); }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return t.at(c, y, x); }

  // Throws numeric_error when shape or value invariants are violated.
  void validate() const;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);

}  // namespace davsp
