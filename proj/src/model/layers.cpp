#include "lgtok/layers.hpp"

#include <cmath>

#include "lgtok/error.hpp"

namespace lgtok::model {

std::string_view to_string(NormKind k) { return k == NormKind::kRms ? "rms" : "layer"; }
std::string_view to_string(Activation a) { return a == Activation::kSwiGlu ? "swiglu" : "gelu"; }

NormKind parse_norm(std::string_view s) {
  if (s == "rms") return NormKind::kRms;
  if (s == "layer") return NormKind::kLayer;
  fail(ErrorKind::kConfig, "unknown normalization '" + std::string(s) + "' (rms|layer)");
}

Activation parse_activation(std::string_view s) {
  if (s == "swiglu") return Activation::kSwiGlu;
  if (s == "gelu") return Activation::kGelu;
  fail(ErrorKind::kConfig, "unknown activation '" + std::string(s) + "' (swiglu|gelu)");
}

void add_linear(nn::ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                std::mt19937_64& rng, float gain) {
  nn::Tensor w = nn::Tensor::matrix(in, out);
  std::normal_distribution<float> normal(0.0f, gain / std::sqrt(static_cast<float>(in)));
  for (float& v : w.values()) v = normal(rng);
  store.add(name, std::move(w));
}

void add_bias(nn::ParamStore& store, const std::string& name, std::size_t out) {
  store.add(name, nn::Tensor::matrix(1, out));
}

void add_embedding(nn::ParamStore& store, const std::string& name, std::size_t rows, std::size_t d,
                   std::mt19937_64& rng, float std) {
  nn::Tensor w = nn::Tensor::matrix(rows, d);
  std::normal_distribution<float> normal(0.0f, std);
  for (float& v : w.values()) v = normal(rng);
  store.add(name, std::move(w));
}

void add_norm(nn::ParamStore& store, const std::string& prefix, std::size_t d, NormKind kind) {
  store.add(prefix + ".g", nn::Tensor::matrix(1, d, 1.0f));
  if (kind == NormKind::kLayer) store.add(prefix + ".b", nn::Tensor::matrix(1, d));
}

void add_attention(nn::ParamStore& store, const std::string& prefix, std::size_t d, std::size_t d_kv,
                   std::mt19937_64& rng) {
  add_linear(store, prefix + ".wq", d, d, rng);
  add_linear(store, prefix + ".wk", d_kv, d, rng);
  add_linear(store, prefix + ".wv", d_kv, d, rng);
  add_linear(store, prefix + ".wo", d, d, rng, 0.5f);
}

void add_ffn(nn::ParamStore& store, const std::string& prefix, std::size_t d, std::size_t hidden,
             Activation act, std::mt19937_64& rng) {
  if (act == Activation::kSwiGlu) add_linear(store, prefix + ".wg", d, hidden, rng);
  add_linear(store, prefix + ".wu", d, hidden, rng);
  add_linear(store, prefix + ".wd", hidden, d, rng, 0.5f);
}

void add_skip(nn::ParamStore& store, const std::string& name, std::size_t d) {
  nn::Tensor w = nn::Tensor::matrix(2 * d, d);
  for (std::size_t i = 0; i < d; ++i) w.at(d + i, i) = 1.0f;
  store.add(name, std::move(w));
}

nn::Var norm(const Graph& g, const std::string& prefix, nn::Var x, NormKind kind) {
  if (kind == NormKind::kRms) return nn::rms_norm(x, g.param(prefix + ".g"));
  return nn::layer_norm(x, g.param(prefix + ".g"), g.param(prefix + ".b"));
}

nn::Var ffn(const Graph& g, const std::string& prefix, nn::Var x, Activation act) {
  nn::Var up = nn::linear(x, g.param(prefix + ".wu"));
  nn::Var hidden = act == Activation::kSwiGlu ? nn::mul(nn::silu(nn::linear(x, g.param(prefix + ".wg"))), up)
                                              : nn::gelu(up);
  return nn::linear(hidden, g.param(prefix + ".wd"));
}

nn::Var attend(const Graph& g, const std::string& prefix, nn::Var x_q, nn::Var x_kv, std::size_t heads,
               const nn::AttentionMask& mask, const std::optional<RopeSpec>& rope) {
  nn::Var q = nn::linear(x_q, g.param(prefix + ".wq"));
  nn::Var k = nn::linear(x_kv, g.param(prefix + ".wk"));
  nn::Var v = nn::linear(x_kv, g.param(prefix + ".wv"));
  if (rope) {
    q = nn::rope(q, rope->query_positions, heads, rope->base);
    k = nn::rope(k, rope->key_positions, heads, rope->base);
  }
  return nn::linear(nn::attention(q, k, v, heads, mask), g.param(prefix + ".wo"));
}

nn::Var skip_fuse(const Graph& g, const std::string& name, nn::Var shallow, nn::Var deep) {
  if (!(shallow.value().same_shape(deep.value())))
    fail(ErrorKind::kShape,
         "skip fuse: shallow " + shallow.value().shape_string() + " vs deep " + deep.value().shape_string());
  return nn::linear(nn::concat_cols(shallow, deep), g.param(name));
}

}  // namespace lgtok::model
