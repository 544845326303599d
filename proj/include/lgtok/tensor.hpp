#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lgtok::nn {

// Dense row-major float32 array. Matrices are rank-2; a scalar is shape {1}.
// Every op in this library treats the last axis as columns and folds any
// leading axes into rows.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, float fill = 0.0f);
  Tensor(std::vector<std::size_t> shape, std::vector<float> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, float fill = 0.0f) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor scalar(float v) { return Tensor({1}, std::vector<float>{v}); }
  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_, 0.0f); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }
  std::size_t rows() const noexcept { return cols() == 0 ? 0 : size() / cols(); }

  float* data() noexcept { return values_.data(); }
  const float* data() const noexcept { return values_.data(); }
  std::span<float> values() noexcept { return values_; }
  std::span<const float> values() const noexcept { return values_; }
  std::vector<float>& storage() noexcept { return values_; }

  float& operator[](std::size_t i) { return values_[i]; }
  float operator[](std::size_t i) const { return values_[i]; }
  float& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  std::span<float> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
  std::span<const float> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  bool all_finite() const noexcept;
  void fill(float v);
  // In-place this += alpha * other; shapes must match.
  void add_scaled(const Tensor& other, float alpha = 1.0f);

  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<float> values_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// max_i |a_i - b_i|; shapes must match.
float max_abs_diff(const Tensor& a, const Tensor& b);

bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace lgtok::nn
