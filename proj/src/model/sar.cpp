#include "lgtok/sar.hpp"

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

void SarConfig::validate() const {
  require(layers >= 1 && heads >= 1 && d_model % heads == 0, ErrorKind::kConfig,
          "SAR: layers must be positive and heads must divide the model dimension");
  require(ffn_dim >= 1 && d_text >= 1, ErrorKind::kConfig, "SAR: dimensions must be positive");
  require(vocabulary >= 2, ErrorKind::kConfig, "SAR: vocabulary must be at least 2");
  schedule.validate();
  require(top_k <= vocabulary, ErrorKind::kConfig, "SAR: top_k exceeds the vocabulary");
  require(std::isfinite(temperature) && temperature >= 0.0f, ErrorKind::kConfig, "SAR: temperature must be >= 0");
  require(cond_drop >= 0.0f && cond_drop <= 1.0f, ErrorKind::kConfig, "SAR: condition drop must lie in [0, 1]");
}

nlohmann::json SarConfig::to_json() const {
  return {{"layers", layers},         {"heads", heads},
          {"d_model", d_model},       {"ffn_dim", ffn_dim},
          {"vocabulary", vocabulary}, {"d_text", d_text},
          {"schedule", schedule.scales},
          {"norm", to_string(norm)},  {"activation", to_string(activation)},
          {"temperature", temperature},
          {"top_k", top_k},           {"cond_drop", cond_drop},
          {"tokenizer_hash", nn::hex64(tokenizer_hash)}};
}

SarConfig SarConfig::from_json(const nlohmann::json& j) {
  SarConfig c;
  try {
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.d_model = j.at("d_model");
    c.ffn_dim = j.at("ffn_dim");
    c.vocabulary = j.at("vocabulary");
    c.d_text = j.at("d_text");
    c.schedule.scales = j.at("schedule").get<std::vector<std::size_t>>();
    c.norm = parse_norm(j.at("norm").get<std::string>());
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.temperature = j.at("temperature");
    c.top_k = j.at("top_k");
    c.cond_drop = j.at("cond_drop");
    c.tokenizer_hash = std::stoull(j.at("tokenizer_hash").get<std::string>(), nullptr, 16);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed SAR config: ") + e.what());
  } catch (const std::logic_error& e) {
    fail(ErrorKind::kFormat, std::string("malformed SAR tokenizer hash: ") + e.what());
  }
  c.validate();
  return c;
}

std::uint64_t SarConfig::hash() const { return nn::json_hash(to_json()); }

SarModel SarModel::init(const SarConfig& config, std::uint64_t seed) {
  config.validate();
  SarModel m;
  m.config = config;
  const SarConfig& c = config;
  std::mt19937_64 rng(corpus::mix_seed(seed, 0x736172));
  nn::ParamStore& s = m.params;
  const std::size_t d = c.d_model;
  add_linear(s, "sar.text_in", c.d_text, d, rng);
  add_embedding(s, "sar.null", 1, d, rng, 1.0f);
  add_linear(s, "sar.sos", d, d, rng);
  add_bias(s, "sar.sos_b", d);
  add_embedding(s, "sar.embed", c.vocabulary, d, rng, 1.0f);
  add_embedding(s, "sar.scale_emb", c.schedule.count(), d, rng, 1.0f);
  add_embedding(s, "sar.pos_emb", c.schedule.base(), d, rng, 1.0f);
  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::string p = "sar.b" + std::to_string(i);
    add_norm(s, p + ".n1", d, c.norm);
    add_attention(s, p + ".sa", d, d, rng);
    add_norm(s, p + ".n2", d, c.norm);
    add_ffn(s, p + ".ffn", d, c.ffn_dim, c.activation, rng);
  }
  add_norm(s, "sar.out", d, c.norm);
  add_linear(s, "sar.head", d, c.vocabulary, rng, 0.5f);
  add_bias(s, "sar.head_b", c.vocabulary);
  return m;
}

Var sar_forward(const Graph& g, const SarConfig& c, const quant::TokenSet& tokens, const corpus::TextContext& text,
                std::optional<std::size_t> upto_blocks) {
  const std::size_t n_scales = c.schedule.count();
  const std::size_t upto = upto_blocks.value_or(n_scales);
  if (tokens.scales != c.schedule.scales)
    fail(ErrorKind::kConfig, "SAR: token schedule does not match the model schedule " + c.schedule.to_string());
  require(upto >= 1 && upto <= n_scales, ErrorKind::kBounds, "SAR: block count outside [1, N]");
  require(tokens.codes.size() + 1 >= upto, ErrorKind::kShape, "SAR: too few token blocks for the requested prefix");
  for (std::size_t k = 0; k + 1 < upto; ++k) {
    require(tokens.codes[k].size() == tokens.scales[k], ErrorKind::kShape, "SAR: token block has the wrong length");
    for (int code : tokens.codes[k]) {
      if (!(code >= 0 && static_cast<std::size_t>(code) < c.vocabulary))
        fail(ErrorKind::kData, "SAR: token index " + std::to_string(code) + " outside vocabulary");
    }
  }
  if (!text.is_empty) {
    require(text.embeddings.cols() == c.d_text, ErrorKind::kShape, "SAR: text width differs from d_text");
  }

  Var prefix = text.is_empty ? g.param("sar.null")
                             : nn::linear(g.tape.constant(text.embeddings), g.param("sar.text_in"));
  const std::size_t w = prefix.rows();
  Var sos = nn::linear(nn::mean_rows(prefix), g.param("sar.sos"), g.param("sar.sos_b"));
  Var embed = g.param("sar.embed");
  Var scale_emb = g.param("sar.scale_emb");
  Var pos_emb = g.param("sar.pos_emb");
  const std::size_t t = c.schedule.base();

  std::vector<Var> parts{prefix};
  std::vector<std::size_t> blocks{w};
  std::optional<Var> cumulative;  // sum_{k<n} up(E[x_k], T)
  for (std::size_t n = 0; n < upto; ++n) {
    const std::size_t sn = c.schedule.scales[n];
    Var base;
    if (n == 0) {
      base = nn::repeat_row(sos, sn);
    } else {
      Var up = nn::matmul_const(quant::interpolation_matrix(c.schedule.scales[n - 1], t),
                                nn::gather_rows(embed, tokens.codes[n - 1]));
      cumulative = cumulative ? nn::add(*cumulative, up) : up;
      base = nn::matmul_const(quant::interpolation_matrix(t, sn), *cumulative);
    }
    const std::vector<int> scale_ids(sn, static_cast<int>(n));
    Var rows = nn::add(nn::add(base, nn::gather_rows(scale_emb, scale_ids)), nn::slice_rows(pos_emb, 0, sn));
    parts.push_back(rows);
    blocks.push_back(sn);
  }
  const nn::AttentionMask mask = nn::AttentionMask::scale_causal(blocks);
  Var x = nn::concat_rows(parts);
  for (std::size_t i = 0; i < c.layers; ++i) {
    const std::string p = "sar.b" + std::to_string(i);
    Var h = norm(g, p + ".n1", x, c.norm);
    x = nn::add(x, attend(g, p + ".sa", h, h, c.heads, mask, std::nullopt));
    x = nn::add(x, ffn(g, p + ".ffn", norm(g, p + ".n2", x, c.norm), c.activation));
  }
  Var body = nn::slice_rows(x, w, x.rows() - w);
  return nn::linear(norm(g, "sar.out", body, c.norm), g.param("sar.head"), g.param("sar.head_b"));
}

Tensor sar_logits(const SarModel& model, const quant::TokenSet& tokens, const corpus::TextContext& text) {
  nn::Tape tape(false);
  return sar_forward(Graph{tape, model.params}, model.config, tokens, text).value();
}

namespace {

// Sum over rows of -log softmax(row)[target], in double.
double summed_nll(const Tensor& logits, std::span<const int> targets, std::size_t row_offset = 0) {
  const std::size_t v = logits.cols();
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const int tgt = targets[i];
    if (!(tgt >= 0 && static_cast<std::size_t>(tgt) < v))
      fail(ErrorKind::kData, "token index " + std::to_string(tgt) + " >= V=" + std::to_string(v));
    const float* row = logits.data() + (row_offset + i) * v;
    const double mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    total += mx + std::log(z) - row[tgt];
  }
  return total;
}

}  // namespace

SarLoss sar_loss(const Tensor& logits, const quant::TokenSet& tokens) {
  const std::vector<int> flat = tokens.flat();
  if (logits.rows() != flat.size())
    fail(ErrorKind::kShape,
         "SAR loss: " + std::to_string(logits.rows()) + " logit rows for " + std::to_string(flat.size()) + " tokens");
  SarLoss l;
  l.nll = summed_nll(logits, flat) / static_cast<double>(flat.size());
  l.perplexity = std::exp(l.nll);
  return l;
}

SarLoss sar_loss(const SarModel& model, const std::vector<quant::TokenSet>& sets,
                 const std::vector<const corpus::TextContext*>& texts) {
  require(!sets.empty() && sets.size() == texts.size(), ErrorKind::kSampleSize,
          "SAR loss needs a non-empty, aligned set of token sets and texts");
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const Tensor logits = sar_logits(model, sets[i], *texts[i]);
    const std::vector<int> flat = sets[i].flat();
    total += summed_nll(logits, flat);
    count += flat.size();
  }
  SarLoss l;
  l.nll = total / static_cast<double>(count);
  l.perplexity = std::exp(l.nll);
  return l;
}

double block_nll(const SarModel& model, const quant::TokenSet& tokens, const corpus::TextContext& text,
                 std::size_t block) {
  nn::Tape tape(false);
  const Tensor logits = sar_forward(Graph{tape, model.params}, model.config, tokens, text, block + 1).value();
  const std::size_t offset = model.config.schedule.offsets()[block];
  return summed_nll(logits, tokens.codes[block], offset);
}

int sample_from_logits(std::span<const float> logits, float temperature, std::size_t top_k, double u) {
  require(top_k >= 1, ErrorKind::kConfig, "top_k must be at least 1");
  require(!logits.empty(), ErrorKind::kShape, "sampling from empty logits");
  const std::size_t v = logits.size();
  const std::size_t k = std::min(top_k, v);
  std::vector<int> order(v);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), [&](int a, int b) {
    return logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)] ||
           (logits[static_cast<std::size_t>(a)] == logits[static_cast<std::size_t>(b)] && a < b);
  });
  if (temperature <= 0.0f || k == 1) return order[0];
  const double mx = logits[static_cast<std::size_t>(order[0])];
  std::vector<double> p(k);
  double z = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    p[i] = std::exp((logits[static_cast<std::size_t>(order[i])] - mx) / temperature);
    z += p[i];
  }
  double acc = 0.0;
  const double target = u * z;
  for (std::size_t i = 0; i < k; ++i) {
    acc += p[i];
    if (target < acc) return order[i];
  }
  return order[k - 1];
}

quant::TokenSet sar_generate(const SarModel& model, const corpus::TextContext& text, const SampleOptions& options,
                             GenerateStats* stats) {
  const SarConfig& c = model.config;
  require(options.top_k >= 1, ErrorKind::kConfig, "top_k = 0 is not a valid truncation");
  quant::TokenSet out;
  out.scales = c.schedule.scales;
  const auto offsets = c.schedule.offsets();
  for (std::size_t n = 0; n < c.schedule.count(); ++n) {
    nn::Tape tape(false);
    const Tensor logits = sar_forward(Graph{tape, model.params}, c, out, text, n + 1).value();
    if (stats) ++stats->forward_passes;
    std::vector<int> codes(c.schedule.scales[n]);
    for (std::size_t i = 0; i < codes.size(); ++i) {
      const std::size_t row = offsets[n] + i;
      // Each position draws from its own stream so the block could be sampled in any order.
      const std::uint64_t bits = corpus::mix_seed(options.seed, row);
      const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
      codes[i] = sample_from_logits(logits.row(row), options.temperature, options.top_k, u);
    }
    out.codes.push_back(std::move(codes));
  }
  return out;
}

SarTrainResult train_sar(SarModel& model, const TokenizedSplit& train, const TokenizedSplit& val,
                         std::uint64_t tokenizer_hash, const SarTrainOptions& options) {
  const SarConfig& c = model.config;
  if (c.tokenizer_hash != tokenizer_hash)
    fail(ErrorKind::kConfig, "SAR config was built for tokenizer " + nn::hex64(c.tokenizer_hash) +
                                 ", data comes from " + nn::hex64(tokenizer_hash));
  require(!train.tokens.empty() && train.tokens.size() == train.texts.size(), ErrorKind::kSampleSize,
          "SAR training needs aligned, non-empty token sets and texts");
  require(val.tokens.size() == val.texts.size(), ErrorKind::kShape, "SAR validation split is misaligned");
  for (const auto* split : {&train, &val}) {
    for (const auto& t : split->tokens) {
      if (t.scales != c.schedule.scales)
        fail(ErrorKind::kConfig, "token schedule does not match the SAR schedule " + c.schedule.to_string());
      t.validate(c.vocabulary);
    }
  }
  std::mt19937_64 rng(corpus::mix_seed(options.seed, 0x73617274));
  std::bernoulli_distribution drop(c.cond_drop);
  const corpus::TextContext empty = corpus::TextContext::empty();
  nn::AdamW optimizer;
  SarTrainResult result;

  std::ofstream log_csv;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    log_csv.open(*options.out_dir / "log.csv", std::ios::trunc);
    require(static_cast<bool>(log_csv), ErrorKind::kIo, "cannot write SAR training log");
    log_csv << "epoch,step,train_nll,train_perplexity,val_nll,val_perplexity,lr\n";
  }
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train.tokens.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t step = 0;
  bool stop = false;
  for (std::size_t epoch = 0; epoch < options.epochs && !stop; ++epoch) {
    const float lr = nn::step_lr(options.lr, epoch, options.epochs);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_nll = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch) {
      if (options.max_steps > 0 && step >= options.max_steps) {
        stop = true;
        break;
      }
      const std::size_t end = std::min(order.size(), start + options.batch);
      nn::Tape tape(true);
      const Graph g{tape, model.params};
      std::optional<Var> loss;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const corpus::TextContext& text = drop(rng) ? empty : *train.texts[i];
        const std::vector<int> flat = train.tokens[i].flat();
        Var ce = nn::cross_entropy(sar_forward(g, c, train.tokens[i], text), flat);
        epoch_nll += static_cast<double>(ce.value()[0]) * static_cast<double>(flat.size());
        epoch_tokens += flat.size();
        loss = loss ? nn::add(*loss, ce) : ce;
      }
      Var mean = nn::scale(*loss, 1.0f / static_cast<float>(end - start));
      if (!std::isfinite(mean.value()[0])) {
        fail(ErrorKind::kNumeric, "non-finite SAR loss at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(step));
      }
      tape.backward(mean);
      optimizer.step(model.params, lr, options.clip);
      ++step;
    }
    if (epoch_tokens == 0) break;
    SarEpochLog e{};
    e.epoch = epoch;
    e.step = step;
    e.train_nll = epoch_nll / static_cast<double>(epoch_tokens);
    e.train_perplexity = std::exp(e.train_nll);
    e.val_nll = std::numeric_limits<double>::quiet_NaN();
    e.val_perplexity = std::numeric_limits<double>::quiet_NaN();
    if (!val.tokens.empty()) {
      const SarLoss vl = sar_loss(model, val.tokens, val.texts);
      e.val_nll = vl.nll;
      e.val_perplexity = vl.perplexity;
    }
    e.lr = lr;
    result.epochs.push_back(e);
    result.final_train_perplexity = e.train_perplexity;
    result.final_val_perplexity = e.val_perplexity;
    if (std::isfinite(e.val_nll) && e.val_nll < best_val) {
      best_val = e.val_nll;
      if (options.out_dir) save_sar(*options.out_dir / "best.ckpt", model);
    }
    if (log_csv.is_open()) {
      log_csv << e.epoch << ',' << e.step << ',' << e.train_nll << ',' << e.train_perplexity << ',' << e.val_nll << ','
              << e.val_perplexity << ',' << e.lr << '\n';
    }
    if (options.log) {
      options.log("epoch " + std::to_string(epoch) + " step " + std::to_string(step) + " train ppl " +
                  std::to_string(e.train_perplexity) + " val ppl " + std::to_string(e.val_perplexity));
    }
  }
  result.steps = step;
  if (options.out_dir) save_sar(*options.out_dir / "final.ckpt", model);
  return result;
}

nn::Checkpoint to_checkpoint(const SarModel& model) {
  nn::Checkpoint ckpt;
  ckpt.meta["kind"] = "sar";
  ckpt.meta["config"] = model.config.to_json();
  ckpt.meta["config_hash"] = nn::hex64(model.config.hash());
  ckpt.add_params(model.params, "p/");
  return ckpt;
}

SarModel sar_from_checkpoint(const nn::Checkpoint& ckpt) {
  require(ckpt.meta.value("kind", "") == "sar", ErrorKind::kFormat, "checkpoint is not a SAR model");
  SarModel m = SarModel::init(SarConfig::from_json(ckpt.meta.at("config")), 0);
  require(ckpt.meta.value("config_hash", "") == nn::hex64(m.config.hash()), ErrorKind::kConfig,
          "SAR checkpoint config hash does not match its config");
  ckpt.load_params(m.params, "p/");
  return m;
}

void save_sar(const std::filesystem::path& path, const SarModel& model) {
  nn::write_checkpoint(path, to_checkpoint(model));
}

SarModel load_sar(const std::filesystem::path& path) { return sar_from_checkpoint(nn::read_checkpoint(path)); }

}  // namespace lgtok::model
