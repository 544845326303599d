#pragma once

// Language-guided transformer tokenizer E and detokenizer D.
//
// Tokenizer, in-context: [t; z_l; m] through self-attention blocks, keeping
// the T outputs at the latent positions. Cross-attention: z_l through blocks
// of self-attention, cross-attention to motion and cross-attention to text.
//
// Detokenizer, cross-attention: the first F mask tokens through blocks of
// self-attention, cross-attention to z_hat and cross-attention to the text
// keys [null; t]. In-context: [null; t; z_hat; mask tokens] under an explicit
// mask in which only mask-token rows see the text rows.
//
// A frame whose edit flag is 0 (or every frame when t is empty) attends to
// the null key alone in place of the text, so the two mask extremes reproduce
// the conditional and unconditional decodes bit for bit.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lgtok/autograd.hpp"
#include "lgtok/checkpoint.hpp"
#include "lgtok/corpus.hpp"
#include "lgtok/layers.hpp"
#include "lgtok/quantizer.hpp"

namespace lgtok::model {

enum class GuidanceLocation { kNone, kTokenizer, kDetokenizer, kBoth };
enum class Interaction { kInContext, kCrossAttention };
enum class DetokOrder { kLatentThenText, kTextThenLatent };

std::string_view to_string(GuidanceLocation g);
std::string_view to_string(Interaction i);
std::string_view to_string(DetokOrder o);
GuidanceLocation parse_guidance_location(std::string_view s);
Interaction parse_interaction(std::string_view s);
DetokOrder parse_detok_order(std::string_view s);

struct TokenizerConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t d_model = 64;
  std::size_t ffn_dim = 128;
  std::size_t latent_tokens = 8;  // T
  std::size_t max_frames = 196;
  std::size_t channels = corpus::kChannels;
  std::size_t d_text = corpus::kDefaultTextDim;
  float rope_base = 100.0f;
  bool rope_in_cross = false;
  float text_drop = 0.10f;
  GuidanceLocation guidance = GuidanceLocation::kBoth;
  Interaction tokenizer_interaction = Interaction::kInContext;
  Interaction detokenizer_interaction = Interaction::kCrossAttention;
  DetokOrder detok_order = DetokOrder::kLatentThenText;
  NormKind norm = NormKind::kRms;
  Activation activation = Activation::kSwiGlu;
  bool skip = true;
  bool shared_mask_token = false;

  quant::ScaleSchedule schedule{{1, 2, 4, 8}};
  std::size_t vocabulary = 64;
  bool shared_codebook = true;
  float commitment = 0.25f;
  quant::EmaConfig ema;

  bool text_in_tokenizer() const {
    return guidance == GuidanceLocation::kTokenizer || guidance == GuidanceLocation::kBoth;
  }
  bool text_in_detokenizer() const {
    return guidance == GuidanceLocation::kDetokenizer || guidance == GuidanceLocation::kBoth;
  }

  void validate() const;
  nlohmann::json to_json() const;
  static TokenizerConfig from_json(const nlohmann::json& j);
  // FNV-1a over the canonical JSON form.
  std::uint64_t hash() const;
};

struct Tokenizer {
  TokenizerConfig config;
  nn::ParamStore params;
  quant::Quantizer quantizer;

  static Tokenizer init(const TokenizerConfig& config, std::uint64_t seed);
};

// Motion rows are normalized features [F, C].
nn::Var tokenize(const Graph& g, const TokenizerConfig& config, const nn::Tensor& motion,
                 const corpus::TextContext& text);
nn::Tensor tokenize(const Tokenizer& tok, const nn::Tensor& motion, const corpus::TextContext& text);

// edit_mask: per-frame flags of length F; absent means every frame follows t.
nn::Var detokenize(const Graph& g, const TokenizerConfig& config, nn::Var z_hat, const corpus::TextContext& text,
                   std::size_t frames, const std::vector<std::uint8_t>* edit_mask = nullptr);
nn::Tensor detokenize(const Tokenizer& tok, const nn::Tensor& z_hat, const corpus::TextContext& text,
                      std::size_t frames, const std::vector<std::uint8_t>* edit_mask = nullptr);

// tokenize -> multiscale_quantize -> detokenize, inference only.
struct Reconstruction {
  quant::TokenSet tokens;
  nn::Tensor z;
  nn::Tensor z_hat;
  nn::Tensor motion;  // normalized [F, C]
};
Reconstruction reconstruct(const Tokenizer& tok, const nn::Tensor& motion, const corpus::TextContext& text,
                           const corpus::TextContext* decode_text = nullptr);

// smooth_l1(m_hat, m) + commitment * mean((z - sg(z_hat))^2).
struct LossParts {
  nn::Var total;
  nn::Var recon;
};
LossParts reconstruction_loss(nn::Var m_hat, const nn::Tensor& m, nn::Var z, const nn::Tensor& z_hat,
                              float commitment);

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch = 32;
  std::size_t max_steps = 0;  // 0 = no cap
  float lr = 2e-3f;
  float clip = 1.0f;
  std::uint64_t seed = 1;
  std::size_t train_limit = 0;  // use only the first N training records; 0 = all
  bool validate_each_epoch = true;
  std::optional<std::filesystem::path> out_dir;  // log.csv, best.ckpt, final.ckpt
  std::function<void(const std::string&)> log;
};

struct EpochLog {
  std::size_t epoch;
  std::size_t step;
  double train_loss;  // mean smooth-L1 over the epoch
  double val_loss;    // NaN when there is no val split
  float lr;
  double codebook_entropy;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  double final_train_loss = 0.0;
  double best_val_loss = 0.0;
  std::size_t steps = 0;
  std::uint64_t revivals = 0;
};

TrainResult train_tokenizer(Tokenizer& tok, const corpus::Corpus& data, const TrainOptions& options);

// Mean smooth-L1 reconstruction over records, decoded with the record's
// caption (or the empty context when `ablate_text`).
double reconstruction_error(const Tokenizer& tok, const std::vector<const corpus::Record*>& records,
                            bool ablate_text = false);

nn::Checkpoint to_checkpoint(const Tokenizer& tok);
Tokenizer tokenizer_from_checkpoint(const nn::Checkpoint& ckpt);
void save_tokenizer(const std::filesystem::path& path, const Tokenizer& tok);
Tokenizer load_tokenizer(const std::filesystem::path& path);

}  // namespace lgtok::model
