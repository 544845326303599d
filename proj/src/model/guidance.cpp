#include "lgtok/guidance.hpp"

#include <charconv>
#include <cmath>

#include "lgtok/error.hpp"

namespace lgtok::guidance {

nn::Tensor combine(const nn::Tensor& conditional, const nn::Tensor& unconditional, double g) {
  require(conditional.same_shape(unconditional), ErrorKind::kShape,
          "guidance: conditional " + conditional.shape_string() + " vs unconditional " +
              unconditional.shape_string());
  nn::Tensor out = conditional;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>((1.0 + g) * conditional[i] - g * static_cast<double>(unconditional[i]));
  }
  return out;
}

GuidedDecode guided_decode(const model::Tokenizer& tok, const nn::Tensor& z_hat, const corpus::TextContext& text,
                           std::size_t frames, double g) {
  require(std::isfinite(g) && g >= 0.0, ErrorKind::kConfig, "guidance scale must be finite and >= 0");
  GuidedDecode out;
  const corpus::TextContext empty = corpus::TextContext::empty();
  if (text.is_empty) {
    if (g > 0.0) out.warnings.push_back("guidance scale ignored: empty text makes both branches identical");
    out.motion = model::detokenize(tok, z_hat, empty, frames);
    return out;
  }
  nn::Tensor conditional = model::detokenize(tok, z_hat, text, frames);
  if (g == 0.0) {
    out.motion = std::move(conditional);
    return out;
  }
  out.motion = combine(conditional, model::detokenize(tok, z_hat, empty, frames), g);
  return out;
}

nn::Tensor edit_decode(const model::Tokenizer& tok, const nn::Tensor& z_hat, const corpus::TextContext& text,
                       std::size_t frames, const std::vector<std::uint8_t>& edit_mask) {
  require(edit_mask.size() == frames, ErrorKind::kShape,
          "edit mask has " + std::to_string(edit_mask.size()) + " flags for " + std::to_string(frames) + " frames");
  return model::detokenize(tok, z_hat, text, frames, &edit_mask);
}

namespace {

std::size_t parse_index(std::string_view s, std::string_view spec) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && ptr == s.data() + s.size() && !s.empty(), ErrorKind::kSpec,
          "edit mask '" + std::string(spec) + "': '" + std::string(s) + "' is not a frame index");
  return v;
}

}  // namespace

std::vector<std::uint8_t> parse_edit_mask(std::string_view spec, std::size_t frames) {
  if (spec == "all") return std::vector<std::uint8_t>(frames, 1);
  if (spec == "none") return std::vector<std::uint8_t>(frames, 0);
  std::vector<std::uint8_t> flags(frames, 0);
  require(!spec.empty(), ErrorKind::kSpec, "empty edit mask");
  std::size_t start = 0;
  while (start <= spec.size()) {
    std::size_t end = spec.find(',', start);
    if (end == std::string_view::npos) end = spec.size();
    const std::string_view part = spec.substr(start, end - start);
    const std::size_t colon = part.find(':');
    require(colon != std::string_view::npos, ErrorKind::kSpec,
            "edit mask interval '" + std::string(part) + "' is not of the form a:b");
    const std::size_t a = parse_index(part.substr(0, colon), spec);
    const std::size_t b = parse_index(part.substr(colon + 1), spec);
    require(a < b && b <= frames, ErrorKind::kSpec,
            "edit mask interval " + std::string(part) + " must satisfy a < b <= " + std::to_string(frames));
    for (std::size_t f = a; f < b; ++f) flags[f] = 1;
    start = end + 1;
  }
  return flags;
}

std::vector<double> default_guidance_scales() { return {0.0, 0.5, 1.0, 2.0, 3.0}; }

}  // namespace lgtok::guidance
