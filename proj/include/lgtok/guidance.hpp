#pragma once

// Decode-time guidance in normalized feature space:
//   m = (1 + g) * D(z_hat, t) - g * D(z_hat, null)
// and per-frame text routing with an edit mask.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lgtok/tokenizer.hpp"

namespace lgtok::guidance {

struct GuidedDecode {
  nn::Tensor motion;  // normalized [F, C]
  std::vector<std::string> warnings;
};

// g must be finite and >= 0. g == 0 returns the conditional decode itself;
// an empty t returns the unconditional decode with a warning when g > 0.
GuidedDecode guided_decode(const model::Tokenizer& tok, const nn::Tensor& z_hat, const corpus::TextContext& text,
                           std::size_t frames, double g);

// Elementwise (1 + g) * conditional - g * unconditional, evaluated in double.
nn::Tensor combine(const nn::Tensor& conditional, const nn::Tensor& unconditional, double g);

// Text reaches only the frames whose flag is 1.
nn::Tensor edit_decode(const model::Tokenizer& tok, const nn::Tensor& z_hat, const corpus::TextContext& text,
                       std::size_t frames, const std::vector<std::uint8_t>& edit_mask);

// "all", "none", or half-open frame intervals "a:b[,c:d...]" inside [0, F].
std::vector<std::uint8_t> parse_edit_mask(std::string_view spec, std::size_t frames);

// Scales swept when none are given; covers the usual decode settings 1 and 2.
std::vector<double> default_guidance_scales();

}  // namespace lgtok::guidance
