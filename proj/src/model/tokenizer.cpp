#include "lgtok/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "lgtok/error.hpp"
#include "lgtok/optim.hpp"

namespace lgtok::model {

using nn::Tensor;
using nn::Var;

std::string_view to_string(GuidanceLocation g) {
  switch (g) {
    case GuidanceLocation::kNone: return "none";
    case GuidanceLocation::kTokenizer: return "tokenizer";
    case GuidanceLocation::kDetokenizer: return "detokenizer";
    case GuidanceLocation::kBoth: return "both";
  }
  return "both";
}

std::string_view to_string(Interaction i) { return i == Interaction::kInContext ? "in_context" : "cross"; }
std::string_view to_string(DetokOrder o) {
  return o == DetokOrder::kLatentThenText ? "latent_text" : "text_latent";
}

GuidanceLocation parse_guidance_location(std::string_view s) {
  if (s == "none") return GuidanceLocation::kNone;
  if (s == "tokenizer") return GuidanceLocation::kTokenizer;
  if (s == "detokenizer") return GuidanceLocation::kDetokenizer;
  if (s == "both") return GuidanceLocation::kBoth;
  fail(ErrorKind::kConfig, "unknown guidance location '" + std::string(s) + "' (none|tokenizer|detokenizer|both)");
}

Interaction parse_interaction(std::string_view s) {
  if (s == "in_context") return Interaction::kInContext;
  if (s == "cross") return Interaction::kCrossAttention;
  fail(ErrorKind::kConfig, "unknown interaction '" + std::string(s) + "' (in_context|cross)");
}

DetokOrder parse_detok_order(std::string_view s) {
  if (s == "latent_text") return DetokOrder::kLatentThenText;
  if (s == "text_latent") return DetokOrder::kTextThenLatent;
  fail(ErrorKind::kConfig, "unknown detokenizer order '" + std::string(s) + "' (latent_text|text_latent)");
}

void TokenizerConfig::validate() const {
  require(layers >= 1, ErrorKind::kConfig, "tokenizer needs at least one layer");
  require(heads >= 1 && d_model % heads == 0, ErrorKind::kConfig, "heads must divide the model dimension");
  require((d_model / heads) % 2 == 0, ErrorKind::kConfig, "head dimension must be even for RoPE");
  require(ffn_dim >= 1 && channels >= 1 && d_text >= 1, ErrorKind::kConfig, "dimensions must be positive");
  require(latent_tokens >= 1, ErrorKind::kConfig, "latent token count must be positive");
  require(max_frames >= 1, ErrorKind::kConfig, "max frames must be positive");
  require(text_drop >= 0.0f && text_drop <= 1.0f, ErrorKind::kConfig, "text drop probability must lie in [0, 1]");
  require(rope_base > 0.0f, ErrorKind::kConfig, "rope base must be positive");
  schedule.validate();
  if (schedule.base() != latent_tokens)
    fail(ErrorKind::kConfig,
         "schedule " + schedule.to_string() + " must end at the latent token count " + std::to_string(latent_tokens));
  require(vocabulary >= 2 && vocabulary <= 65536, ErrorKind::kConfig, "vocabulary must lie in [2, 65536]");
  require(commitment >= 0.0f, ErrorKind::kConfig, "commitment weight must be non-negative");
  require(ema.decay > 0.0f && ema.decay < 1.0f, ErrorKind::kConfig, "EMA decay must lie in (0, 1)");
}

nlohmann::json TokenizerConfig::to_json() const {
  return {{"layers", layers},
          {"heads", heads},
          {"d_model", d_model},
          {"ffn_dim", ffn_dim},
          {"latent_tokens", latent_tokens},
          {"max_frames", max_frames},
          {"channels", channels},
          {"d_text", d_text},
          {"rope_base", rope_base},
          {"rope_in_cross", rope_in_cross},
          {"text_drop", text_drop},
          {"guidance", to_string(guidance)},
          {"tokenizer_interaction", to_string(tokenizer_interaction)},
          {"detokenizer_interaction", to_string(detokenizer_interaction)},
          {"detok_order", to_string(detok_order)},
          {"norm", to_string(norm)},
          {"activation", to_string(activation)},
          {"skip", skip},
          {"shared_mask_token", shared_mask_token},
          {"schedule", schedule.scales},
          {"vocabulary", vocabulary},
          {"shared_codebook", shared_codebook},
          {"commitment", commitment},
          {"ema_decay", ema.decay},
          {"ema_epsilon", ema.epsilon},
          {"revival_steps", ema.revival_steps}};
}

TokenizerConfig TokenizerConfig::from_json(const nlohmann::json& j) {
  TokenizerConfig c;
  try {
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.d_model = j.at("d_model");
    c.ffn_dim = j.at("ffn_dim");
    c.latent_tokens = j.at("latent_tokens");
    c.max_frames = j.at("max_frames");
    c.channels = j.at("channels");
    c.d_text = j.at("d_text");
    c.rope_base = j.at("rope_base");
    c.rope_in_cross = j.at("rope_in_cross");
    c.text_drop = j.at("text_drop");
    c.guidance = parse_guidance_location(j.at("guidance").get<std::string>());
    c.tokenizer_interaction = parse_interaction(j.at("tokenizer_interaction").get<std::string>());
    c.detokenizer_interaction = parse_interaction(j.at("detokenizer_interaction").get<std::string>());
    c.detok_order = parse_detok_order(j.at("detok_order").get<std::string>());
    c.norm = parse_norm(j.at("norm").get<std::string>());
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.skip = j.at("skip");
    c.shared_mask_token = j.at("shared_mask_token");
    c.schedule.scales = j.at("schedule").get<std::vector<std::size_t>>();
    c.vocabulary = j.at("vocabulary");
    c.shared_codebook = j.at("shared_codebook");
    c.commitment = j.at("commitment");
    c.ema.decay = j.at("ema_decay");
    c.ema.epsilon = j.at("ema_epsilon");
    c.ema.revival_steps = j.at("revival_steps");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed tokenizer config: ") + e.what());
  }
  c.validate();
  return c;
}

std::uint64_t TokenizerConfig::hash() const { return nn::json_hash(to_json()); }

namespace {

enum Segment : int { kTextSegment = 0, kLatentSegment = 1, kMotionSegment = 2 };

std::string layer_name(const char* side, std::size_t i) { return std::string(side) + ".b" + std::to_string(i); }

std::vector<int> iota_positions(std::size_t n, int start = 0) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), start);
  return p;
}

void add_self_block(nn::ParamStore& s, const std::string& p, const TokenizerConfig& c, std::mt19937_64& rng) {
  add_norm(s, p + ".n1", c.d_model, c.norm);
  add_attention(s, p + ".sa", c.d_model, c.d_model, rng);
  add_norm(s, p + ".n2", c.d_model, c.norm);
  add_ffn(s, p + ".ffn", c.d_model, c.ffn_dim, c.activation, rng);
}

void add_cross(nn::ParamStore& s, const std::string& p, const TokenizerConfig& c, std::mt19937_64& rng) {
  add_norm(s, p + ".n", c.d_model, c.norm);
  add_attention(s, p, c.d_model, c.d_model, rng);
}

// Self-attention sublayer with pre-norm and residual.
Var self_sublayer(const Graph& g, const TokenizerConfig& c, const std::string& p, Var x,
                  std::span<const int> positions, const nn::AttentionMask& mask) {
  Var h = norm(g, p + ".n1", x, c.norm);
  return nn::add(x, attend(g, p + ".sa", h, h, c.heads, mask, RopeSpec{positions, positions, c.rope_base}));
}

Var ffn_sublayer(const Graph& g, const TokenizerConfig& c, const std::string& p, Var x) {
  return nn::add(x, ffn(g, p + ".ffn", norm(g, p + ".n2", x, c.norm), c.activation));
}

Var cross_sublayer(const Graph& g, const TokenizerConfig& c, const std::string& p, Var x, Var kv,
                   std::span<const int> q_pos, std::span<const int> k_pos, const nn::AttentionMask& mask) {
  Var h = norm(g, p + ".n", x, c.norm);
  std::optional<RopeSpec> rope;
  if (c.rope_in_cross) rope = RopeSpec{q_pos, k_pos, c.rope_base};
  return nn::add(x, attend(g, p, h, kv, c.heads, mask, rope));
}

// Text rows projected to the model width, preceded by the learned null row.
// An empty context yields the null row alone.
Var text_keys(const Graph& g, const std::string& side, const corpus::TextContext& text, std::vector<int>& positions) {
  Var null_row = g.param(side + ".null");
  positions.assign(1, 0);
  if (text.is_empty) return null_row;
  Var proj = nn::linear(g.tape.constant(text.embeddings), g.param(side + ".text_in"));
  for (std::size_t i = 0; i < text.tokens(); ++i) positions.push_back(static_cast<int>(i) + 1);
  return nn::concat_rows({null_row, proj});
}

void check_text(const TokenizerConfig& c, const corpus::TextContext& text) {
  if (!text.is_empty) {
    if (text.embeddings.cols() != c.d_text)
      fail(ErrorKind::kShape, "text embedding width " + std::to_string(text.embeddings.cols()) +
                                  " differs from d_text " + std::to_string(c.d_text));
  }
}

// A model trained with drop probability 1 never saw a caption; it decodes
// every caption as the empty context.
const corpus::TextContext& effective_text(const TokenizerConfig& c, const corpus::TextContext& text) {
  static const corpus::TextContext kEmpty;
  return c.text_drop >= 1.0f ? kEmpty : text;
}

Var embed_motion(const Graph& g, const TokenizerConfig& c, const Tensor& motion) {
  require(motion.rows() >= 1, ErrorKind::kShape, "tokenize: empty motion");
  if (!(motion.rows() <= c.max_frames))
    fail(ErrorKind::kBounds,
         "motion of " + std::to_string(motion.rows()) + " frames exceeds max_frames " + std::to_string(c.max_frames));
  if (motion.cols() != c.channels)
    fail(ErrorKind::kShape,
         "motion has " + std::to_string(motion.cols()) + " channels, tokenizer expects " + std::to_string(c.channels));
  return nn::linear(g.tape.constant(motion), g.param("enc.motion_in"), g.param("enc.motion_in_b"));
}

Var add_segments(const Graph& g, const std::string& side, Var x, const std::vector<int>& ids) {
  return nn::add(x, nn::gather_rows(g.param(side + ".seg"), ids));
}

}  // namespace

Tokenizer Tokenizer::init(const TokenizerConfig& config, std::uint64_t seed) {
  config.validate();
  Tokenizer tok;
  tok.config = config;
  const TokenizerConfig& c = config;
  std::mt19937_64 rng(corpus::mix_seed(seed, 0x746f6b));
  nn::ParamStore& s = tok.params;
  const std::size_t d = c.d_model;

  // Encoder.
  add_linear(s, "enc.motion_in", c.channels, d, rng);
  add_bias(s, "enc.motion_in_b", d);
  add_embedding(s, "enc.latent", c.latent_tokens, d, rng, 1.0f);
  if (c.text_in_tokenizer()) {
    add_linear(s, "enc.text_in", c.d_text, d, rng);
    add_embedding(s, "enc.null", 1, d, rng, 1.0f);
  }
  if (c.tokenizer_interaction == Interaction::kInContext) {
    add_embedding(s, "enc.seg", 3, d, rng, 1.0f);
  } else {
    add_embedding(s, "enc.frame_pos", c.max_frames, d, rng, 1.0f);
  }
  const std::vector<int> partners = nn::skip_partners(c.layers);
  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::string p = layer_name("enc", i);
    add_self_block(s, p, c, rng);
    if (c.tokenizer_interaction == Interaction::kCrossAttention) {
      add_cross(s, p + ".cm", c, rng);
      if (c.text_in_tokenizer()) add_cross(s, p + ".ct", c, rng);
    }
    if (c.skip && partners[i] >= 0) add_skip(s, p + ".skip", d);
  }
  add_norm(s, "enc.out", d, c.norm);

  // Detokenizer.
  add_embedding(s, "dec.mask", c.shared_mask_token ? 1 : c.max_frames, d, rng, 1.0f);
  add_linear(s, "dec.z_in", d, d, rng);
  if (c.text_in_detokenizer()) {
    add_linear(s, "dec.text_in", c.d_text, d, rng);
    add_embedding(s, "dec.null", 1, d, rng, 1.0f);
  }
  if (c.detokenizer_interaction == Interaction::kInContext) {
    add_embedding(s, "dec.seg", 3, d, rng, 1.0f);
  } else {
    add_embedding(s, "dec.z_pos", c.latent_tokens, d, rng, 1.0f);
  }
  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::string p = layer_name("dec", i);
    add_self_block(s, p, c, rng);
    if (c.detokenizer_interaction == Interaction::kCrossAttention) {
      add_cross(s, p + ".cz", c, rng);
      if (c.text_in_detokenizer()) add_cross(s, p + ".ct", c, rng);
    }
    if (c.skip && partners[i] >= 0) add_skip(s, p + ".skip", d);
  }
  add_norm(s, "dec.out", d, c.norm);
  add_linear(s, "dec.head", d, c.channels, rng, 0.5f);
  add_bias(s, "dec.head_b", c.channels);

  const std::size_t books = c.shared_codebook ? 1 : c.schedule.count();
  for (std::size_t b = 0; b < books; ++b) {
    tok.quantizer.books.push_back(quant::Codebook::random(c.vocabulary, d, corpus::mix_seed(seed, 0x636200 + b)));
  }
  return tok;
}

Var tokenize(const Graph& g, const TokenizerConfig& c, const Tensor& motion, const corpus::TextContext& caption) {
  const corpus::TextContext& text = effective_text(c, caption);
  check_text(c, text);
  const std::size_t f = motion.rows();
  Var m = embed_motion(g, c, motion);
  Var latent = g.param("enc.latent");
  const std::size_t t = c.latent_tokens;
  const std::vector<int> partners = nn::skip_partners(c.layers);
  const bool use_text = c.text_in_tokenizer();

  std::vector<Var> stream_inputs;
  auto run_blocks = [&](Var x, auto&& block) {
    for (std::size_t i = 0; i < c.layers; ++i) {
      const std::string p = layer_name("enc", i);
      if (c.skip && partners[i] >= 0) x = skip_fuse(g, p + ".skip", stream_inputs[static_cast<std::size_t>(partners[i])], x);
      stream_inputs.push_back(x);
      x = block(p, x);
    }
    return x;
  };

  if (c.tokenizer_interaction == Interaction::kInContext) {
    std::vector<Var> parts;
    std::vector<int> positions, segments;
    std::size_t text_rows = 0;
    if (use_text) {
      std::vector<int> tp;
      if (text.is_empty) {
        parts.push_back(g.param("enc.null"));
        tp = {0};
      } else {
        parts.push_back(nn::linear(g.tape.constant(text.embeddings), g.param("enc.text_in")));
        tp = iota_positions(text.tokens());
      }
      text_rows = tp.size();
      positions.insert(positions.end(), tp.begin(), tp.end());
      segments.insert(segments.end(), text_rows, kTextSegment);
    }
    parts.push_back(latent);
    const auto lp = iota_positions(t);
    positions.insert(positions.end(), lp.begin(), lp.end());
    segments.insert(segments.end(), t, kLatentSegment);
    parts.push_back(m);
    const auto mp = iota_positions(f);
    positions.insert(positions.end(), mp.begin(), mp.end());
    segments.insert(segments.end(), f, kMotionSegment);

    Var x = add_segments(g, "enc", nn::concat_rows(parts), segments);
    const nn::AttentionMask none = nn::AttentionMask::none();
    x = run_blocks(x, [&](const std::string& p, Var h) {
      h = self_sublayer(g, c, p, h, positions, none);
      return ffn_sublayer(g, c, p, h);
    });
    return norm(g, "enc.out", nn::slice_rows(x, text_rows, t), c.norm);
  }

  // Cross-attention tokenizer: latent queries, motion and text as keys.
  Var frame_pos = nn::slice_rows(g.param("enc.frame_pos"), 0, f);
  Var motion_keys = nn::add(m, frame_pos);
  std::vector<int> text_pos;
  std::optional<Var> tkeys;
  if (use_text) tkeys = text_keys(g, "enc", text, text_pos);
  const auto lp = iota_positions(t);
  const auto mp = iota_positions(f);
  const nn::AttentionMask none = nn::AttentionMask::none();
  Var x = run_blocks(latent, [&](const std::string& p, Var h) {
    h = self_sublayer(g, c, p, h, lp, none);
    h = cross_sublayer(g, c, p + ".cm", h, motion_keys, lp, mp, none);
    if (tkeys) h = cross_sublayer(g, c, p + ".ct", h, *tkeys, lp, text_pos, none);
    return ffn_sublayer(g, c, p, h);
  });
  return norm(g, "enc.out", x, c.norm);
}

Var detokenize(const Graph& g, const TokenizerConfig& c, Var z_hat, const corpus::TextContext& caption,
               std::size_t frames, const std::vector<std::uint8_t>* edit_mask) {
  const corpus::TextContext& text = effective_text(c, caption);
  check_text(c, text);
  require(frames >= 1, ErrorKind::kShape, "detokenize: zero frames requested");
  if (!(frames <= c.max_frames))
    fail(ErrorKind::kBounds,
         "detokenize: " + std::to_string(frames) + " frames exceeds max_frames " + std::to_string(c.max_frames));
  if (!(z_hat.rows() == c.latent_tokens && z_hat.cols() == c.d_model))
    fail(ErrorKind::kShape, "detokenize: z_hat " + z_hat.value().shape_string() + " does not match the latent shape");
  if (edit_mask) {
    if (edit_mask->size() != frames)
      fail(ErrorKind::kShape,
           "edit mask has " + std::to_string(edit_mask->size()) + " flags for " + std::to_string(frames) + " frames");
  }
  const std::size_t t = c.latent_tokens;
  const bool use_text = c.text_in_detokenizer();
  const std::vector<int> partners = nn::skip_partners(c.layers);
  Var queries = c.shared_mask_token ? nn::repeat_row(g.param("dec.mask"), frames)
                                    : nn::slice_rows(g.param("dec.mask"), 0, frames);
  Var z = nn::linear(z_hat, g.param("dec.z_in"));
  const auto fp = iota_positions(frames);
  const auto lp = iota_positions(t);

  std::vector<Var> stream_inputs;
  auto run_blocks = [&](Var x, auto&& block) {
    for (std::size_t i = 0; i < c.layers; ++i) {
      const std::string p = layer_name("dec", i);
      if (c.skip && partners[i] >= 0) x = skip_fuse(g, p + ".skip", stream_inputs[static_cast<std::size_t>(partners[i])], x);
      stream_inputs.push_back(x);
      x = block(p, x);
    }
    return x;
  };

  Var out;
  if (c.detokenizer_interaction == Interaction::kCrossAttention) {
    Var z_keys = nn::add(z, g.param("dec.z_pos"));
    std::vector<int> text_pos;
    std::optional<Var> tkeys;
    nn::AttentionMask text_mask = nn::AttentionMask::none();
    if (use_text) {
      tkeys = text_keys(g, "dec", text, text_pos);
      if (edit_mask && !text.is_empty) text_mask = nn::AttentionMask::frame_edit(*edit_mask, 1);
    }
    const nn::AttentionMask none = nn::AttentionMask::none();
    out = run_blocks(queries, [&](const std::string& p, Var h) {
      h = self_sublayer(g, c, p, h, fp, none);
      auto latent = [&](Var v) { return cross_sublayer(g, c, p + ".cz", v, z_keys, fp, lp, none); };
      auto textual = [&](Var v) { return tkeys ? cross_sublayer(g, c, p + ".ct", v, *tkeys, fp, text_pos, text_mask) : v; };
      if (c.detok_order == DetokOrder::kLatentThenText) {
        h = textual(latent(h));
      } else {
        h = latent(textual(h));
      }
      return ffn_sublayer(g, c, p, h);
    });
  } else {
    // [null; text; z; mask tokens]. Rows outside the mask-token segment never
    // see mask tokens, so text reaches the output only through frames that
    // are allowed to read it.
    std::vector<Var> parts;
    std::vector<int> positions, segments;
    std::size_t text_rows = 0;
    if (use_text) {
      std::vector<int> tp;
      parts.push_back(text_keys(g, "dec", text, tp));
      text_rows = tp.size();
      positions = tp;
      segments.assign(text_rows, kTextSegment);
    }
    parts.push_back(z);
    positions.insert(positions.end(), lp.begin(), lp.end());
    segments.insert(segments.end(), t, kLatentSegment);
    parts.push_back(queries);
    positions.insert(positions.end(), fp.begin(), fp.end());
    segments.insert(segments.end(), frames, kMotionSegment);
    const std::size_t n = positions.size();
    const std::size_t m_begin = text_rows + t;
    std::vector<std::uint8_t> allowed(n * n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        bool ok;
        const bool key_is_text = use_text && j >= 1 && j < text_rows;
        if (i >= m_begin) {
          const bool reads_text = !text.is_empty && (!edit_mask || (*edit_mask)[i - m_begin]);
          ok = !key_is_text || reads_text;
        } else if (use_text && i >= 1 && i < text_rows) {
          ok = j < text_rows;  // text rows: null and text
        } else {
          ok = j < m_begin && !key_is_text;  // null and latent rows: null and latent
        }
        allowed[i * n + j] = ok ? 1 : 0;
      }
    }
    const nn::AttentionMask mask = nn::AttentionMask::explicit_mask(n, n, std::move(allowed));
    Var x = add_segments(g, "dec", nn::concat_rows(parts), segments);
    x = run_blocks(x, [&](const std::string& p, Var h) {
      h = self_sublayer(g, c, p, h, positions, mask);
      return ffn_sublayer(g, c, p, h);
    });
    out = nn::slice_rows(x, m_begin, frames);
  }
  return nn::linear(norm(g, "dec.out", out, c.norm), g.param("dec.head"), g.param("dec.head_b"));
}

Tensor tokenize(const Tokenizer& tok, const Tensor& motion, const corpus::TextContext& text) {
  nn::Tape tape(false);
  const Graph g{tape, tok.params};
  return tokenize(g, tok.config, motion, text).value();
}

Tensor detokenize(const Tokenizer& tok, const Tensor& z_hat, const corpus::TextContext& text, std::size_t frames,
                  const std::vector<std::uint8_t>* edit_mask) {
  nn::Tape tape(false);
  const Graph g{tape, tok.params};
  return detokenize(g, tok.config, tape.constant(z_hat), text, frames, edit_mask).value();
}

Reconstruction reconstruct(const Tokenizer& tok, const Tensor& motion, const corpus::TextContext& text,
                           const corpus::TextContext* decode_text) {
  Reconstruction r;
  r.z = tokenize(tok, motion, text);
  quant::MultiscaleResult q = quant::multiscale_quantize(r.z, tok.config.schedule, tok.quantizer);
  r.tokens = std::move(q.tokens);
  r.z_hat = std::move(q.z_hat);
  r.motion = detokenize(tok, r.z_hat, decode_text ? *decode_text : text, motion.rows());
  return r;
}

LossParts reconstruction_loss(Var m_hat, const Tensor& m, Var z, const Tensor& z_hat, float commitment) {
  if (!(m_hat.value().same_shape(m)))
    fail(ErrorKind::kShape,
         "reconstruction loss: prediction " + m_hat.value().shape_string() + " vs target " + m.shape_string());
  LossParts parts;
  parts.recon = nn::smooth_l1(m_hat, m, 1.0f);
  parts.total = commitment > 0.0f ? nn::add(parts.recon, nn::scale(nn::mse(z, z_hat), commitment)) : parts.recon;
  return parts;
}

double reconstruction_error(const Tokenizer& tok, const std::vector<const corpus::Record*>& records,
                            bool ablate_text) {
  require(!records.empty(), ErrorKind::kSampleSize, "reconstruction error over zero records");
  double total = 0.0;
  const corpus::TextContext empty = corpus::TextContext::empty();
  for (const corpus::Record* r : records) {
    Reconstruction rec = reconstruct(tok, r->features, r->text, ablate_text ? &empty : nullptr);
    nn::Tape tape(false);
    total += nn::smooth_l1(tape.constant(rec.motion), r->features).value()[0];
  }
  return total / static_cast<double>(records.size());
}

namespace {

double codebook_entropy(const quant::Quantizer& q) {
  double sum = 0.0;
  for (const auto& b : q.books) sum += quant::usage_stats(b).entropy;
  return sum / static_cast<double>(q.books.size());
}

// k-means style start: entries drawn from the first batch's scale inputs.
void seed_codebooks(quant::Quantizer& q, const std::vector<std::vector<Tensor>>& rows_per_book, std::mt19937_64& rng) {
  for (std::size_t b = 0; b < q.books.size(); ++b) {
    const auto& pool = rows_per_book[b];
    std::size_t total = 0;
    for (const auto& t : pool) total += t.rows();
    if (total == 0) continue;
    quant::Codebook& book = q.books[b];
    std::vector<const float*> rows;
    rows.reserve(total);
    for (const auto& t : pool) {
      for (std::size_t i = 0; i < t.rows(); ++i) rows.push_back(t.data() + i * t.cols());
    }
    std::uniform_int_distribution<std::size_t> pick(0, rows.size() - 1);
    std::normal_distribution<float> jitter(0.0f, 0.01f);
    Tensor entries = Tensor::matrix(book.size(), book.dim());
    for (std::size_t k = 0; k < book.size(); ++k) {
      const float* src = rows[pick(rng)];
      for (std::size_t j = 0; j < book.dim(); ++j) entries.at(k, j) = src[j] + jitter(rng);
    }
    book = quant::Codebook::from_entries(std::move(entries));
  }
}

}  // namespace

TrainResult train_tokenizer(Tokenizer& tok, const corpus::Corpus& data, const TrainOptions& options) {
  const TokenizerConfig& c = tok.config;
  std::vector<const corpus::Record*> train = data.split(corpus::Split::kTrain);
  if (options.train_limit > 0 && train.size() > options.train_limit) train.resize(options.train_limit);
  const std::vector<const corpus::Record*> val = data.split(corpus::Split::kVal);
  require(!train.empty(), ErrorKind::kSampleSize, "tokenizer training needs at least one training record");
  require(options.batch >= 1 && options.epochs >= 1, ErrorKind::kConfig, "batch and epochs must be positive");

  std::mt19937_64 rng(corpus::mix_seed(options.seed, 0x747261696e));
  std::bernoulli_distribution drop(c.text_drop);
  nn::AdamW optimizer;
  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  const corpus::TextContext empty = corpus::TextContext::empty();
  const std::size_t books = tok.quantizer.books.size();
  for (auto& b : tok.quantizer.books) b.reset_usage();

  std::ofstream log_csv;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    log_csv.open(*options.out_dir / "log.csv", std::ios::trunc);
    require(static_cast<bool>(log_csv), ErrorKind::kIo, "cannot write training log");
    log_csv << "epoch,step,train_loss,val_loss,lr,codebook_entropy\n";
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  bool stop = false;
  for (std::size_t epoch = 0; epoch < options.epochs && !stop; ++epoch) {
    const float lr = nn::step_lr(options.lr, epoch, options.epochs);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_recon = 0.0;
    std::size_t epoch_records = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch) {
      if (options.max_steps > 0 && step >= options.max_steps) {
        stop = true;
        break;
      }
      const std::size_t end = std::min(order.size(), start + options.batch);
      nn::Tape tape(true);
      const Graph g{tape, tok.params};
      std::vector<Var> losses;
      std::vector<std::vector<Tensor>> ema_rows(books);
      std::vector<std::vector<int>> ema_codes(books);
      std::vector<std::pair<std::size_t, std::vector<int>>> usage;
      double batch_recon = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const corpus::Record& r = *train[order[b]];
        const corpus::TextContext& text = drop(rng) ? empty : r.text;
        Var z = tokenize(g, c, r.features, text);
        quant::MultiscaleResult q = quant::multiscale_quantize(z.value(), c.schedule, tok.quantizer);
        Var zq = nn::straight_through(z, q.z_hat);
        Var m_hat = detokenize(g, c, zq, text, r.features.rows());
        LossParts lp = reconstruction_loss(m_hat, r.features, z, q.z_hat, c.commitment);
        losses.push_back(lp.total);
        batch_recon += lp.recon.value()[0];
        for (std::size_t n = 0; n < c.schedule.count(); ++n) {
          const std::size_t bi = tok.quantizer.shared() ? 0 : n;
          ema_rows[bi].push_back(q.scale_inputs[n]);
          ema_codes[bi].insert(ema_codes[bi].end(), q.tokens.codes[n].begin(), q.tokens.codes[n].end());
          usage.emplace_back(n, q.tokens.codes[n]);
        }
      }
      if (step == 0) {
        // The first forward pass only supplies rows for data-dependent codebook
        // seeding; its assignments came from the random initial entries.
        seed_codebooks(tok.quantizer, ema_rows, rng);
      }
      Var loss = losses.front();
      for (std::size_t i = 1; i < losses.size(); ++i) loss = nn::add(loss, losses[i]);
      loss = nn::scale(loss, 1.0f / static_cast<float>(losses.size()));
      const float lv = loss.value()[0];
      if (!std::isfinite(lv)) {
        fail(ErrorKind::kNumeric, "non-finite tokenizer loss at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(step));
      }
      tape.backward(loss);
      optimizer.step(tok.params, lr, options.clip);
      if (step > 0) {
        for (std::size_t bi = 0; bi < books; ++bi) {
          if (ema_rows[bi].empty()) continue;
          std::size_t rows = 0;
          for (const auto& t : ema_rows[bi]) rows += t.rows();
          Tensor pooled = Tensor::matrix(rows, c.d_model);
          std::size_t at = 0;
          for (const auto& t : ema_rows[bi]) {
            std::copy(t.values().begin(), t.values().end(), pooled.data() + at * c.d_model);
            at += t.rows();
          }
          const auto events =
              quant::codebook_update(tok.quantizer.books[bi], pooled, ema_codes[bi], c.ema, rng, step);
          result.revivals += events.size();
        }
        for (const auto& [n, codes] : usage) tok.quantizer.book(n).record_usage(codes, n);
      }
      epoch_recon += batch_recon;
      epoch_records += end - start;
      ++step;
    }
    if (epoch_records == 0) break;
    EpochLog e{};
    e.epoch = epoch;
    e.step = step;
    e.train_loss = epoch_recon / static_cast<double>(epoch_records);
    e.val_loss = std::numeric_limits<double>::quiet_NaN();
    if (!val.empty() && (options.validate_each_epoch || epoch + 1 == options.epochs || stop)) {
      e.val_loss = reconstruction_error(tok, val);
    }
    e.lr = lr;
    e.codebook_entropy = codebook_entropy(tok.quantizer);
    result.epochs.push_back(e);
    result.final_train_loss = e.train_loss;
    if (std::isfinite(e.val_loss) && e.val_loss < result.best_val_loss) {
      result.best_val_loss = e.val_loss;
      if (options.out_dir) save_tokenizer(*options.out_dir / "best.ckpt", tok);
    }
    if (log_csv.is_open()) {
      log_csv << e.epoch << ',' << e.step << ',' << e.train_loss << ',' << e.val_loss << ',' << e.lr << ','
              << e.codebook_entropy << '\n';
    }
    if (options.log) {
      options.log("epoch " + std::to_string(epoch) + " step " + std::to_string(step) + " train " +
                  std::to_string(e.train_loss) + " val " + std::to_string(e.val_loss));
    }
  }
  result.steps = step;
  if (options.out_dir) save_tokenizer(*options.out_dir / "final.ckpt", tok);
  return result;
}

nn::Checkpoint to_checkpoint(const Tokenizer& tok) {
  nn::Checkpoint ckpt;
  ckpt.meta["kind"] = "tokenizer";
  ckpt.meta["config"] = tok.config.to_json();
  ckpt.meta["config_hash"] = nn::hex64(tok.config.hash());
  ckpt.add_params(tok.params, "p/");
  nlohmann::json books = nlohmann::json::array();
  for (std::size_t b = 0; b < tok.quantizer.books.size(); ++b) {
    const quant::Codebook& book = tok.quantizer.books[b];
    const std::string p = "codebook/" + std::to_string(b) + "/";
    ckpt.add(p + "entries", book.entries);
    ckpt.add(p + "ema_sums", book.ema_sums);
    ckpt.add(p + "ema_counts", Tensor({book.size()}, book.ema_counts));
    books.push_back({{"usage", book.usage},
                     {"scale_usage", book.scale_usage},
                     {"idle_steps", book.idle_steps},
                     {"revivals", book.revivals}});
  }
  ckpt.meta["codebooks"] = books;
  return ckpt;
}

Tokenizer tokenizer_from_checkpoint(const nn::Checkpoint& ckpt) {
  require(ckpt.meta.value("kind", "") == "tokenizer", ErrorKind::kFormat, "checkpoint is not a tokenizer");
  Tokenizer tok = Tokenizer::init(TokenizerConfig::from_json(ckpt.meta.at("config")), 0);
  require(ckpt.meta.value("config_hash", "") == nn::hex64(tok.config.hash()), ErrorKind::kConfig,
          "tokenizer checkpoint config hash does not match its config");
  ckpt.load_params(tok.params, "p/");
  const auto& books = ckpt.meta.at("codebooks");
  require(books.size() == tok.quantizer.books.size(), ErrorKind::kFormat, "codebook count mismatch");
  for (std::size_t b = 0; b < books.size(); ++b) {
    const std::string p = "codebook/" + std::to_string(b) + "/";
    quant::Codebook book = quant::Codebook::from_entries(ckpt.get(p + "entries"));
    book.ema_sums = ckpt.get(p + "ema_sums");
    const Tensor& counts = ckpt.get(p + "ema_counts");
    book.ema_counts.assign(counts.values().begin(), counts.values().end());
    require(book.ema_sums.same_shape(book.entries) && book.ema_counts.size() == book.size(), ErrorKind::kFormat,
            "codebook EMA state has the wrong shape");
    try {
      book.usage = books[b].at("usage").get<std::vector<std::uint64_t>>();
      book.scale_usage = books[b].at("scale_usage").get<std::vector<std::vector<std::uint64_t>>>();
      book.idle_steps = books[b].at("idle_steps").get<std::vector<std::uint32_t>>();
      book.revivals = books[b].at("revivals").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, std::string("malformed codebook metadata: ") + e.what());
    }
    require(book.usage.size() == book.size() && book.idle_steps.size() == book.size(), ErrorKind::kFormat,
            "codebook metadata has the wrong length");
    require(book.entries.rows() == tok.config.vocabulary && book.entries.cols() == tok.config.d_model,
            ErrorKind::kFormat, "codebook shape does not match the config");
    tok.quantizer.books[b] = std::move(book);
  }
  return tok;
}

void save_tokenizer(const std::filesystem::path& path, const Tokenizer& tok) {
  nn::write_checkpoint(path, to_checkpoint(tok));
}

Tokenizer load_tokenizer(const std::filesystem::path& path) { return tokenizer_from_checkpoint(nn::read_checkpoint(path)); }

}  // namespace lgtok::model
