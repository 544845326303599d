#include "lgtok/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "lgtok/error.hpp"
#include "lgtok/kernels.hpp"

namespace lgtok::nn {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, float fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<float> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != product(shape_))
    fail(ErrorKind::kShape,
         "tensor of shape " + nn::shape_string(shape_) + " given " + std::to_string(values_.size()) + " values");
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](float v) { return std::isfinite(v); });
}

void Tensor::fill(float v) { std::fill(values_.begin(), values_.end(), v); }

void Tensor::add_scaled(const Tensor& other, float alpha) {
  if (other.size() != size()) fail(ErrorKind::kShape, "add_scaled: " + shape_string() + " vs " + other.shape_string());
  kernels::active().axpy(alpha, other.data(), data(), size());
}

std::string Tensor::shape_string() const { return nn::shape_string(shape_); }

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) fail(ErrorKind::kShape, "max_abs_diff: " + a.shape_string() + " vs " + b.shape_string());
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace lgtok::nn
