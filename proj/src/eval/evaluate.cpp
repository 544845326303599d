#include "lgtok/evaluate.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "lgtok/error.hpp"
#include "lgtok/guidance.hpp"

namespace lgtok::eval {

Statistic summarize(std::vector<double> values) {
  require(!values.empty(), ErrorKind::kSampleSize, "summary over zero values");
  Statistic s;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / n;
  if (values.size() > 1) {
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.ci95 = 1.96 * std::sqrt(var / (n - 1.0)) / std::sqrt(n);
  }
  s.values = std::move(values);
  return s;
}

namespace {

nlohmann::json stat_json(const Statistic& s) { return {{"mean", s.mean}, {"ci95", s.ci95}, {"values", s.values}}; }

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(10) << v;
  return out.str();
}

void check_pair(const model::Tokenizer& tok, const model::SarModel& sar) {
  require(sar.config.tokenizer_hash == tok.config.hash(), ErrorKind::kConfig,
          "SAR checkpoint was trained on tokenizer " + nn::hex64(sar.config.tokenizer_hash) +
              " but the given tokenizer hashes to " + nn::hex64(tok.config.hash()));
  require(sar.config.schedule.scales == tok.config.schedule.scales && sar.config.vocabulary == tok.config.vocabulary,
          ErrorKind::kConfig, "SAR and tokenizer schedules or vocabularies differ");
}

struct ReconStats {
  double smooth_l1 = 0.0;
  double rmse = 0.0;
  std::vector<nn::Tensor> raw;
  std::vector<quant::TokenSet> tokens;
};

// Round trip with the caption, decoded under guidance scale g.
ReconStats round_trip(const model::Tokenizer& tok, const std::vector<const corpus::Record*>& records,
                      const corpus::Normalizer& normalizer, double g, std::vector<std::string>& warnings) {
  ReconStats r;
  double l1 = 0.0, sq = 0.0;
  std::size_t elements = 0;
  for (const corpus::Record* rec : records) {
    const nn::Tensor z = model::tokenize(tok, rec->features, rec->text);
    quant::MultiscaleResult q = quant::multiscale_quantize(z, tok.config.schedule, tok.quantizer);
    guidance::GuidedDecode d = guidance::guided_decode(tok, q.z_hat, rec->text, rec->features.rows(), g);
    for (auto& w : d.warnings) warnings.push_back(std::move(w));
    double rec_l1 = 0.0;
    for (std::size_t i = 0; i < d.motion.size(); ++i) {
      const double diff = static_cast<double>(d.motion[i]) - rec->features[i];
      const double a = std::fabs(diff);
      rec_l1 += a < 1.0 ? 0.5 * diff * diff : a - 0.5;
      sq += diff * diff;
    }
    l1 += rec_l1 / static_cast<double>(d.motion.size());
    elements += d.motion.size();
    r.raw.push_back(normalizer.denormalize(d.motion));
    r.tokens.push_back(std::move(q.tokens));
  }
  r.smooth_l1 = l1 / static_cast<double>(records.size());
  r.rmse = std::sqrt(sq / static_cast<double>(elements));
  return r;
}

std::vector<double> scale_entropies(const std::vector<quant::TokenSet>& sets, std::size_t vocabulary) {
  if (sets.empty()) return {};
  const std::size_t n = sets.front().scales.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::uint64_t> counts(vocabulary, 0);
    for (const auto& t : sets) {
      for (int c : t.codes[s]) ++counts[static_cast<std::size_t>(c)];
    }
    out[s] = quant::usage_stats(counts).entropy;
  }
  return out;
}

}  // namespace

GeneratedSet generate_set(const model::Tokenizer& tok, const model::SarModel& sar,
                          const std::vector<const corpus::Record*>& records, const corpus::Normalizer& normalizer,
                          double g, std::uint64_t seed, const model::SampleOptions& sampling) {
  check_pair(tok, sar);
  GeneratedSet out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const corpus::Record& rec = *records[i];
    model::SampleOptions opt = sampling;
    opt.seed = corpus::mix_seed(seed, i);
    quant::TokenSet tokens = model::sar_generate(sar, rec.text, opt);
    const nn::Tensor z_hat = quant::dequantize(tokens, tok.quantizer, tok.config.latent_tokens);
    guidance::GuidedDecode d = guidance::guided_decode(tok, z_hat, rec.text, rec.features.rows(), g);
    for (auto& w : d.warnings) out.warnings.push_back(std::move(w));
    out.raw.push_back(normalizer.denormalize(d.motion));
    out.normalized.push_back(std::move(d.motion));
    out.tokens.push_back(std::move(tokens));
  }
  return out;
}

MetricReport evaluate_pipeline(const model::Tokenizer& tok, const model::SarModel* sar,
                               const std::vector<const corpus::Record*>& records,
                               const corpus::Normalizer& normalizer, const EvalOptions& options) {
  require(options.repeats >= 1, ErrorKind::kUsage, "evaluation needs at least one repeat");
  require(records.size() >= 2, ErrorKind::kSampleSize,
          "evaluation needs at least 2 records, got " + std::to_string(records.size()));
  require(std::isfinite(options.g) && options.g >= 0.0, ErrorKind::kConfig, "guidance scale must be finite and >= 0");
  if (sar) check_pair(tok, *sar);

  MetricReport report;
  report.mode = sar ? "generation" : "reconstruction";
  report.g = options.g;
  report.seed = options.seed;
  report.repeats = options.repeats;
  report.samples = records.size();

  std::vector<metrics::FeatureVector> reference;
  std::vector<std::string> captions;
  for (const corpus::Record* r : records) {
    reference.push_back(metrics::motion_features(r->motion.data));
    captions.push_back(r->motion.caption);
  }

  ReconStats recon = round_trip(tok, records, normalizer, options.g, report.warnings);
  report.codebook_entropy = scale_entropies(recon.tokens, tok.config.vocabulary);

  std::vector<double> l1s, rmses, fids, accs;
  model::SampleOptions sampling;
  if (sar) {
    sampling.temperature = options.temperature;
    sampling.top_k = options.top_k == 0 ? sar->config.resolved_top_k() : options.top_k;
    std::vector<const corpus::TextContext*> texts;
    for (const corpus::Record* r : records) texts.push_back(&r->text);
    const model::SarLoss loss = model::sar_loss(*sar, recon.tokens, texts);
    report.perplexity = summarize({loss.perplexity});
  }
  for (std::size_t rep = 0; rep < options.repeats; ++rep) {
    std::vector<nn::Tensor> motions;
    if (sar) {
      GeneratedSet gen = generate_set(tok, *sar, records, normalizer, options.g,
                                      corpus::mix_seed(options.seed, rep), sampling);
      motions = std::move(gen.raw);
      if (rep == 0) {
        for (auto& w : gen.warnings) report.warnings.push_back(std::move(w));
      }
    } else {
      motions = recon.raw;
    }
    std::vector<metrics::FeatureVector> feats;
    for (const nn::Tensor& m : motions) feats.push_back(metrics::motion_features(m));
    fids.push_back(metrics::toy_fid(feats, reference));
    const metrics::SemanticScore s = metrics::semantic_accuracy(motions, captions);
    if (rep == 0) {
      for (const auto& c : s.unparsable) report.warnings.push_back("unparsable caption counted as mismatch: " + c);
    }
    accs.push_back(s.accuracy);
    l1s.push_back(recon.smooth_l1);
    rmses.push_back(recon.rmse);
  }
  report.recon_smooth_l1 = summarize(std::move(l1s));
  report.recon_rmse = summarize(std::move(rmses));
  report.toy_fid = summarize(std::move(fids));
  report.semantic_accuracy = summarize(std::move(accs));
  return report;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = {{"mode", mode},
                      {"g", g},
                      {"seed", seed},
                      {"repeats", repeats},
                      {"samples", samples},
                      {"recon_smooth_l1", stat_json(recon_smooth_l1)},
                      {"recon_rmse", stat_json(recon_rmse)},
                      {"toy_fid", stat_json(toy_fid)},
                      {"semantic_accuracy", stat_json(semantic_accuracy)},
                      {"codebook_entropy", codebook_entropy},
                      {"warnings", warnings}};
  if (perplexity) j["perplexity"] = stat_json(*perplexity);
  // Proxy names keep these numbers apart from learned-evaluator metrics.
  j["proxies"] = {{"toy_fid", "Frechet distance of fixed motion statistics"},
                  {"semantic_accuracy", "rule-based classifier against the caption grammar"}};
  return j;
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out << "metric,mean,ci95\n";
  auto row = [&](const std::string& name, const Statistic& s) {
    out << name << ',' << fmt(s.mean) << ',' << fmt(s.ci95) << '\n';
  };
  row("recon_smooth_l1", recon_smooth_l1);
  row("recon_rmse", recon_rmse);
  row("toy_fid", toy_fid);
  row("semantic_accuracy", semantic_accuracy);
  if (perplexity) row("perplexity", *perplexity);
  for (std::size_t s = 0; s < codebook_entropy.size(); ++s) {
    out << "codebook_entropy_scale" << s + 1 << ',' << fmt(codebook_entropy[s]) << ",0\n";
  }
  return out.str();
}

std::vector<SweepRow> sweep_guidance(const model::Tokenizer& tok, const model::SarModel* sar,
                                     const std::vector<const corpus::Record*>& records,
                                     const corpus::Normalizer& normalizer, const std::vector<double>& scales,
                                     const EvalOptions& options) {
  require(!scales.empty(), ErrorKind::kUsage, "guidance sweep needs at least one g value");
  std::vector<SweepRow> rows;
  for (double g : scales) {
    EvalOptions o = options;
    o.g = g;
    const MetricReport r = evaluate_pipeline(tok, sar, records, normalizer, o);
    rows.push_back({g, r.toy_fid.mean, r.recon_smooth_l1.mean, r.semantic_accuracy.mean});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "g,toy_fid,recon,semantic_accuracy\n";
  for (const SweepRow& r : rows) {
    out << fmt(r.g) << ',' << fmt(r.toy_fid) << ',' << fmt(r.recon) << ',' << fmt(r.semantic_accuracy) << '\n';
  }
  return out.str();
}

}  // namespace lgtok::eval
