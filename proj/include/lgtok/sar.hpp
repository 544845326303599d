#pragma once

// Scale-wise autoregressive model over token sets.
//
// Sequence layout: [text prefix; block 1; ...; block N] under a scale-causal
// mask, where the prefix is the projected caption (or the learned null row).
// Block 1 rows start from a [sos] vector pooled from the prefix. Block n > 1
// rows are down(sum_{k<n} up(E[x_k], T), s_n) with the model's own
// embedding table E. Learned scale and in-scale position embeddings are
// added to every block row. The head predicts all s_n codes of block n.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "json.hpp"
#include "lgtok/checkpoint.hpp"
#include "lgtok/corpus.hpp"
#include "lgtok/layers.hpp"
#include "lgtok/quantizer.hpp"

namespace lgtok::model {

struct SarConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t ffn_dim = 128;
  std::size_t vocabulary = 64;
  std::size_t d_text = corpus::kDefaultTextDim;
  quant::ScaleSchedule schedule{{1, 2, 4, 8}};
  NormKind norm = NormKind::kRms;
  Activation activation = Activation::kSwiGlu;
  float temperature = 1.0f;
  std::size_t top_k = 0;  // 0 in a config means "V"; resolved by validate()
  float cond_drop = 0.0f;
  std::uint64_t tokenizer_hash = 0;

  std::size_t resolved_top_k() const { return top_k == 0 ? vocabulary : top_k; }
  void validate() const;
  nlohmann::json to_json() const;
  static SarConfig from_json(const nlohmann::json& j);
  std::uint64_t hash() const;
};

struct SarModel {
  SarConfig config;
  nn::ParamStore params;

  static SarModel init(const SarConfig& config, std::uint64_t seed);
};

// Teacher-forced logits [sum s_n, V]. Only blocks 1..upto_blocks are built
// when `upto_blocks` is given; token lists of later blocks are never read.
nn::Var sar_forward(const Graph& g, const SarConfig& config, const quant::TokenSet& tokens,
                    const corpus::TextContext& text, std::optional<std::size_t> upto_blocks = std::nullopt);
nn::Tensor sar_logits(const SarModel& model, const quant::TokenSet& tokens, const corpus::TextContext& text);

struct SarLoss {
  double nll = 0.0;         // mean per token
  double perplexity = 1.0;  // exp(nll)
};
SarLoss sar_loss(const nn::Tensor& logits, const quant::TokenSet& tokens);
SarLoss sar_loss(const SarModel& model, const std::vector<quant::TokenSet>& sets,
                 const std::vector<const corpus::TextContext*>& texts);

// Sum of per-token NLL of block n (0-based) computed from a sequence that
// ends at block n.
double block_nll(const SarModel& model, const quant::TokenSet& tokens, const corpus::TextContext& text,
                 std::size_t block);

struct SampleOptions {
  float temperature = 1.0f;  // <= 0 selects argmax
  std::size_t top_k = 0;     // 0 is rejected
  std::uint64_t seed = 0;
};

// Keeps the top_k largest logits (lowest index wins ties), applies the
// temperature, and draws with the uniform u in [0, 1).
int sample_from_logits(std::span<const float> logits, float temperature, std::size_t top_k, double u);

struct GenerateStats {
  std::size_t forward_passes = 0;
};

quant::TokenSet sar_generate(const SarModel& model, const corpus::TextContext& text, const SampleOptions& options,
                             GenerateStats* stats = nullptr);

struct SarTrainOptions {
  std::size_t epochs = 20;
  std::size_t batch = 32;
  std::size_t max_steps = 0;
  float lr = 2e-3f;
  float clip = 1.0f;
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> out_dir;  // log.csv, best.ckpt, final.ckpt
  std::function<void(const std::string&)> log;
};

struct SarEpochLog {
  std::size_t epoch;
  std::size_t step;
  double train_nll;
  double train_perplexity;
  double val_nll;
  double val_perplexity;
  float lr;
};

struct SarTrainResult {
  std::vector<SarEpochLog> epochs;
  double final_train_perplexity = 0.0;
  double final_val_perplexity = 0.0;
  std::size_t steps = 0;
};

struct TokenizedSplit {
  std::vector<quant::TokenSet> tokens;
  std::vector<const corpus::TextContext*> texts;
};

// Errors with kConfig when a token set's schedule or the tokenizer hash does
// not match the model config.
SarTrainResult train_sar(SarModel& model, const TokenizedSplit& train, const TokenizedSplit& val,
                         std::uint64_t tokenizer_hash, const SarTrainOptions& options);

nn::Checkpoint to_checkpoint(const SarModel& model);
SarModel sar_from_checkpoint(const nn::Checkpoint& ckpt);
void save_sar(const std::filesystem::path& path, const SarModel& model);
SarModel load_sar(const std::filesystem::path& path);

}  // namespace lgtok::model
