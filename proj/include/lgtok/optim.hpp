#pragma once

#include <cstddef>

#include "lgtok/autograd.hpp"

namespace lgtok::nn {

struct AdamWConfig {
  float beta1 = 0.9f;
  float beta2 = 0.99f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;
};

// AdamW with decoupled weight decay and global-L2-norm gradient clipping.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  // Clips the global gradient norm to `clip` (no clipping when clip <= 0),
  // applies one update to every parameter and zeroes the gradients.
  // Returns the pre-clip global gradient norm. Throws Error{kNumeric}
  // naming the first parameter with a non-finite gradient.
  double step(ParamStore& store, float lr, float clip);

  std::size_t steps_taken() const noexcept { return steps_; }
  void set_steps_taken(std::size_t s) noexcept { steps_ = s; }
  const AdamWConfig& config() const noexcept { return config_; }

 private:
  AdamWConfig config_;
  std::size_t steps_ = 0;
};

// Step schedule: `base` until epoch floor(0.9 * total_epochs), then base * drop.
float step_lr(float base, std::size_t epoch, std::size_t total_epochs, float drop = 0.1f);

}  // namespace lgtok::nn
