#pragma once

// Transformer sublayers over a ParamStore. Parameter names are
// prefix + "." + role, so one store can hold several stacks side by side.

#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>

#include "lgtok/attention.hpp"
#include "lgtok/autograd.hpp"
#include "lgtok/ops.hpp"

namespace lgtok::model {

enum class NormKind { kRms, kLayer };
enum class Activation { kSwiGlu, kGelu };

std::string_view to_string(NormKind k);
std::string_view to_string(Activation a);
NormKind parse_norm(std::string_view s);
Activation parse_activation(std::string_view s);

// Weights ~ N(0, gain^2 / in).
void add_linear(nn::ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                std::mt19937_64& rng, float gain = 1.0f);
void add_bias(nn::ParamStore& store, const std::string& name, std::size_t out);
void add_embedding(nn::ParamStore& store, const std::string& name, std::size_t rows, std::size_t d,
                   std::mt19937_64& rng, float std = 0.02f);
void add_norm(nn::ParamStore& store, const std::string& prefix, std::size_t d, NormKind kind);
// wq [d, d], wk/wv [d_kv, d], wo [d, d].
void add_attention(nn::ParamStore& store, const std::string& prefix, std::size_t d, std::size_t d_kv,
                   std::mt19937_64& rng);
void add_ffn(nn::ParamStore& store, const std::string& prefix, std::size_t d, std::size_t hidden,
             Activation act, std::mt19937_64& rng);
// [2d, d] projection of concat(shallow, deep), initialised to [0 | I].
void add_skip(nn::ParamStore& store, const std::string& name, std::size_t d);

// Forward context: the tape being recorded and the store it reads from.
struct Graph {
  nn::Tape& tape;
  const nn::ParamStore& store;

  nn::Var param(std::string_view name) const { return tape.param(store.get(name)); }
};

nn::Var norm(const Graph& g, const std::string& prefix, nn::Var x, NormKind kind);
// SwiGLU: (silu(x Wg) * x Wu) Wd.  GeLU: gelu(x Wu) Wd.
nn::Var ffn(const Graph& g, const std::string& prefix, nn::Var x, Activation act);

struct RopeSpec {
  std::span<const int> query_positions;
  std::span<const int> key_positions;
  float base = 100.0f;
};

// Multi-head attention of x_q over x_kv with output projection. RoPE is
// applied to the projected queries and keys when `rope` is given.
nn::Var attend(const Graph& g, const std::string& prefix, nn::Var x_q, nn::Var x_kv, std::size_t heads,
               const nn::AttentionMask& mask, const std::optional<RopeSpec>& rope);

nn::Var skip_fuse(const Graph& g, const std::string& name, nn::Var shallow, nn::Var deep);

}  // namespace lgtok::model
