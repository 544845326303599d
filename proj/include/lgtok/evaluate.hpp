#pragma once

// End-to-end evaluation: generation (SAR -> dequantize -> guided decode) or
// reconstruction only, repeated with derived seeds and summarized as
// mean +/- 1.96 * std / sqrt(repeats).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lgtok/corpus.hpp"
#include "lgtok/metrics.hpp"
#include "lgtok/sar.hpp"
#include "lgtok/tokenizer.hpp"

namespace lgtok::eval {

inline constexpr std::size_t kDefaultRepeats = 20;

struct Statistic {
  double mean = 0.0;
  double ci95 = 0.0;  // 0 for a single value
  std::vector<double> values;
};
// Sample standard deviation (n - 1); throws kSampleSize on an empty list.
Statistic summarize(std::vector<double> values);

struct MetricReport {
  std::string mode;  // "generation" or "reconstruction"
  double g = 0.0;
  std::uint64_t seed = 0;
  std::size_t repeats = 0;
  std::size_t samples = 0;
  Statistic recon_smooth_l1;
  Statistic recon_rmse;
  Statistic toy_fid;
  Statistic semantic_accuracy;
  std::optional<Statistic> perplexity;  // generation mode only
  std::vector<double> codebook_entropy;  // per scale, from the evaluated records' tokens
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  // "metric,mean,ci95" rows.
  std::string to_csv() const;
};

struct EvalOptions {
  double g = 2.0;
  std::uint64_t seed = 1;
  std::size_t repeats = kDefaultRepeats;
  float temperature = 1.0f;
  std::size_t top_k = 0;  // 0 uses the SAR config's default
};

// One generated motion per record, conditioned on its caption and frame
// count. Record i of repeat r samples with seed mix(mix(seed, r), i).
struct GeneratedSet {
  std::vector<nn::Tensor> normalized;
  std::vector<nn::Tensor> raw;
  std::vector<quant::TokenSet> tokens;
  std::vector<std::string> warnings;
};
GeneratedSet generate_set(const model::Tokenizer& tok, const model::SarModel& sar,
                          const std::vector<const corpus::Record*>& records, const corpus::Normalizer& normalizer,
                          double g, std::uint64_t seed, const model::SampleOptions& sampling);

// `sar` may be null for reconstruction mode. A SAR built for another
// tokenizer is rejected with kConfig.
MetricReport evaluate_pipeline(const model::Tokenizer& tok, const model::SarModel* sar,
                               const std::vector<const corpus::Record*>& records,
                               const corpus::Normalizer& normalizer, const EvalOptions& options);

struct SweepRow {
  double g;
  double toy_fid;
  double recon;
  double semantic_accuracy;
};
// One evaluation per g with shared seeds; an empty list is a usage error.
std::vector<SweepRow> sweep_guidance(const model::Tokenizer& tok, const model::SarModel* sar,
                                     const std::vector<const corpus::Record*>& records,
                                     const corpus::Normalizer& normalizer, const std::vector<double>& scales,
                                     const EvalOptions& options);
// Header "g,toy_fid,recon,semantic_accuracy".
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace lgtok::eval
