#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "lgtok/autograd.hpp"

namespace lgtok::nn {

// Which keys each query row may attend to.
//
// Every mask kind reduces to a per-query prefix length over the key axis:
// a query sees keys [0, limit). Scale-wise causal masks order the sequence
// as contiguous blocks (an optional fully visible prefix first, then one
// block per scale), and a query inside block j sees every key up to the end
// of block j. Frame-edit masks route flagged query rows to all keys and
// unflagged rows to the leading null keys only. Explicit masks carry a full
// permission matrix for layouts that are not prefixes.
class AttentionMask {
 public:
  enum class Kind { kNone, kScaleCausal, kFrameEdit, kExplicit };

  static AttentionMask none() { return AttentionMask(); }
  // Blocks given as consecutive sizes; they cover the sequence in order.
  static AttentionMask scale_causal(std::span<const std::size_t> block_sizes);
  static AttentionMask frame_edit(std::vector<std::uint8_t> flags, std::size_t null_keys);
  // Dense [queries, keys] permission matrix, row-major, nonzero = visible.
  static AttentionMask explicit_mask(std::size_t queries, std::size_t keys, std::vector<std::uint8_t> allowed);

  Kind kind() const noexcept { return kind_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& blocks() const noexcept { return blocks_; }
  const std::vector<std::uint8_t>& flags() const noexcept { return flags_; }

  // Validated per-query key limits; throws Error{kConfig} for a query that
  // would see no key at all.
  std::vector<std::size_t> key_limits(std::size_t queries, std::size_t keys) const;
  // Visibility of key j for query i given the limits from key_limits.
  bool visible(std::size_t i, std::size_t j, std::size_t keys) const {
    return kind_ != Kind::kExplicit || allowed_[i * keys + j] != 0;
  }

 private:
  Kind kind_ = Kind::kNone;
  std::vector<std::pair<std::size_t, std::size_t>> blocks_;
  std::vector<std::uint8_t> flags_;
  std::size_t null_keys_ = 0;
  std::size_t explicit_queries_ = 0, explicit_keys_ = 0;
  std::vector<std::uint8_t> allowed_;
};

// Filled in debug inspection mode: softmax weights per head, [heads][q][k].
struct AttentionTrace {
  std::vector<Tensor> weights;
};

// Multi-head scaled dot-product attention over already projected q, k, v
// ([n, D] each, D divisible by heads). Scores are scaled by 1/sqrt(D/heads).
Var attention(Var q, Var k, Var v, std::size_t heads, const AttentionMask& mask,
              AttentionTrace* trace = nullptr);

// Rotary position embedding applied independently inside each head. Pair k
// of a head (dims 2k, 2k+1) rotates by position * base^(-2k/d_head).
Var rope(Var x, std::span<const int> positions, std::size_t heads, float base);

// Mirror pairing for long skip connections in an L-layer stack: layer
// L-1-i receives the output of layer i for every i < L/2. Returns, for each
// layer, the index of the shallow layer it fuses with, or -1.
std::vector<int> skip_partners(std::size_t layers);

}  // namespace lgtok::nn
