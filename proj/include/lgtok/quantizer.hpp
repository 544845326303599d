#pragma once

// Multi-scale residual vector quantization.
//
// For a latent z [T, d] and schedule (s_1..s_N), scale n quantizes the
// downsampled residual, upsamples the chosen entries back to T rows and
// subtracts them:
//   r_1 = z,  x_n = Q(down(r_n, s_n)),  e_n = up(C[x_n], T),  r_{n+1} = r_n - e_n
// and z_hat = sum_n e_n.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lgtok/tensor.hpp"

namespace lgtok::quant {

struct ScaleSchedule {
  std::vector<std::size_t> scales;

  std::size_t count() const noexcept { return scales.size(); }
  std::size_t base() const noexcept { return scales.empty() ? 0 : scales.back(); }
  std::size_t total() const noexcept;
  // Row offset of each scale in the flattened token sequence.
  std::vector<std::size_t> offsets() const;

  // 1 <= s_1 <= ... <= s_N, N >= 1. Throws Error{kConfig}.
  void validate() const;
  // "1,2,4,8"
  static ScaleSchedule parse(std::string_view text);
  std::string to_string() const;

  bool operator==(const ScaleSchedule&) const = default;
};

// Preset schedules: totals 104, 160 and 236 over N = 10 scales.
ScaleSchedule mini_schedule();
ScaleSchedule mid_schedule();
ScaleSchedule full_schedule();

// Interpolation along time as a fixed [to, from] matrix. Output row i samples
// source position i * (from - 1) / (to - 1) with linear weights, so both end
// rows are preserved. to == 1 averages every source row; from == 1
// broadcasts. from == to is the identity.
nn::Tensor interpolation_matrix(std::size_t from, std::size_t to);

nn::Tensor downsample(const nn::Tensor& z, std::size_t s);
nn::Tensor upsample(const nn::Tensor& z, std::size_t t);

struct Codebook {
  nn::Tensor entries;              // [V, d]
  std::vector<float> ema_counts;   // V
  nn::Tensor ema_sums;             // [V, d]
  std::vector<std::uint64_t> usage;                     // V, whole session
  std::vector<std::vector<std::uint64_t>> scale_usage;  // per scale index, V each
  std::vector<std::uint32_t> idle_steps;                // updates since last assignment
  std::uint64_t revivals = 0;

  std::size_t size() const noexcept { return entries.rows(); }
  std::size_t dim() const noexcept { return entries.cols(); }

  // Entries drawn from N(0, scale^2); EMA state starts at (count 1, sum = entry).
  static Codebook random(std::size_t v, std::size_t d, std::uint64_t seed, float scale = 1.0f);
  static Codebook from_entries(nn::Tensor entries);

  void record_usage(std::span<const int> indices, std::optional<std::size_t> scale = std::nullopt);
  void reset_usage();
};

struct Assignment {
  std::vector<int> indices;
  nn::Tensor embeddings;  // [s, d] = entries[indices]
};

// Nearest entry by squared Euclidean distance; ties go to the lowest index.
// The const overload leaves usage untouched; the mutable one records usage
// under `scale` when given.
Assignment quantize_nearest(const nn::Tensor& rows, const Codebook& book);
Assignment quantize_nearest(const nn::Tensor& rows, Codebook& book, std::optional<std::size_t> scale);

struct TokenSet {
  std::vector<std::size_t> scales;
  std::vector<std::vector<int>> codes;  // codes[n].size() == scales[n]

  std::size_t total() const noexcept;
  std::vector<int> flat() const;
  static TokenSet from_flat(const ScaleSchedule& schedule, std::span<const int> flat);
  // Shape and index range checks. Throws Error{kData} / Error{kShape}.
  void validate(std::size_t vocabulary) const;

  bool operator==(const TokenSet&) const = default;
};

// One codebook shared by all scales, or one per scale.
struct Quantizer {
  std::vector<Codebook> books;

  bool shared() const noexcept { return books.size() == 1; }
  Codebook& book(std::size_t scale) { return books[shared() ? 0 : scale]; }
  const Codebook& book(std::size_t scale) const { return books[shared() ? 0 : scale]; }
  std::size_t vocabulary() const { return books.front().size(); }
};

struct MultiscaleResult {
  TokenSet tokens;
  nn::Tensor z_hat;                      // [T, d]
  std::vector<nn::Tensor> per_scale;     // e_n, [T, d] each
  std::vector<nn::Tensor> scale_inputs;  // down(r_n, s_n), [s_n, d] each
  nn::Tensor residual;                   // r_{N+1}
};

MultiscaleResult multiscale_quantize(const nn::Tensor& z, const ScaleSchedule& schedule,
                                     const Quantizer& quantizer);

// Inverse map: sum_n up(C[x_n], T).
nn::Tensor dequantize(const TokenSet& tokens, const Quantizer& quantizer, std::size_t t);

struct EmaConfig {
  float decay = 0.99f;
  float epsilon = 1e-5f;
  std::uint32_t revival_steps = 256;
};

struct RevivalEvent {
  std::size_t entry;
  std::uint64_t step;
};

// One EMA step from the rows assigned in a training step. Entries idle for
// `revival_steps` consecutive updates are re-seeded from a random row of
// `rows`. With no rows at all nothing changes.
std::vector<RevivalEvent> codebook_update(Codebook& book, const nn::Tensor& rows, std::span<const int> assigned,
                                          const EmaConfig& config, std::mt19937_64& rng,
                                          std::uint64_t step = 0);

struct UsageStats {
  std::vector<std::uint64_t> counts;
  std::vector<double> frequency;
  double entropy = 0.0;  // normalized by log V
  bool empty = true;
};

UsageStats usage_stats(std::span<const std::uint64_t> counts);
UsageStats usage_stats(const Codebook& book);

// CSV rows "scale,entry,count,frequency"; scale is 1-based.
std::string usage_csv(const Quantizer& quantizer);

// "TOKS", u32 N, u32 s_1..s_N, then records of sum(s_n) u16 codes each.
std::string encode_token_sets(const ScaleSchedule& schedule, const std::vector<TokenSet>& sets);
std::vector<TokenSet> decode_token_sets(const std::string& bytes, ScaleSchedule* schedule = nullptr);
void write_token_sets(const std::filesystem::path& path, const ScaleSchedule& schedule,
                      const std::vector<TokenSet>& sets);
std::vector<TokenSet> read_token_sets(const std::filesystem::path& path, ScaleSchedule* schedule = nullptr);

}  // namespace lgtok::quant
