#include "lgtok/optim.hpp"

#include <cmath>

#include "lgtok/error.hpp"

namespace lgtok::nn {

double AdamW::step(ParamStore& store, float lr, float clip) {
  for (const auto& p : store) {
    require(p->grad.all_finite(), ErrorKind::kNumeric,
            "non-finite gradient in parameter " + p->name);
  }
  const double norm = store.grad_norm();
  const float grad_scale = (clip > 0.0f && norm > clip) ? static_cast<float>(clip / norm) : 1.0f;

  ++steps_;
  const float b1 = config_.beta1, b2 = config_.beta2;
  const float bias1 = 1.0f - static_cast<float>(std::pow(b1, static_cast<double>(steps_)));
  const float bias2 = 1.0f - static_cast<float>(std::pow(b2, static_cast<double>(steps_)));
  for (auto& p : store) {
    float* w = p->value.data();
    float* g = p->grad.data();
    float* m = p->first_moment.data();
    float* v = p->second_moment.data();
    const std::size_t n = p->value.size();
    for (std::size_t i = 0; i < n; ++i) {
      const float gi = g[i] * grad_scale;
      m[i] = b1 * m[i] + (1.0f - b1) * gi;
      v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
      const float mhat = m[i] / bias1;
      const float vhat = v[i] / bias2;
      if (config_.weight_decay != 0.0f) w[i] -= lr * config_.weight_decay * w[i];
      w[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
      g[i] = 0.0f;
    }
  }
  return norm;
}

float step_lr(float base, std::size_t epoch, std::size_t total_epochs, float drop) {
  const auto boundary = static_cast<std::size_t>(std::floor(0.9 * static_cast<double>(total_epochs)));
  return epoch < boundary ? base : base * drop;
}

}  // namespace lgtok::nn
