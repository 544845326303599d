#include <doctest.h>

#include <cmath>
#include <sstream>

#include "checks.hpp"
#include "lgtok/evaluate.hpp"
#include "test_util.hpp"

using namespace lgtok;

namespace {

struct Setup {
  corpus::Corpus data;
  model::Tokenizer tok;
  model::SarModel sar;
  std::vector<const corpus::Record*> records;

  Setup()
      : data(make()),
        tok(model::Tokenizer::init(checks::tiny_tokenizer_config(), 5)),
        sar(model::SarModel::init(checks::tiny_sar_config(tok), 6)) {
    checks::jitter(tok.params, 7);
    checks::jitter(sar.params, 8);
    records = data.split(corpus::Split::kTest);
  }

  static corpus::Corpus make() {
    corpus::CorpusConfig c;
    c.size = 40;
    c.seed = 4;
    return corpus::make_corpus(c);
  }
};

}  // namespace

TEST_SUITE("evaluate") {
  TEST_CASE("summary statistics") {
    const auto one = eval::summarize({3.5});
    CHECK(one.mean == 3.5);
    CHECK(one.ci95 == 0.0);
    const auto s = eval::summarize({1.0, 2.0, 3.0, 6.0});
    // Sample std of {1,2,3,6} is sqrt(14/3).
    CHECK(s.mean == doctest::Approx(3.0));
    CHECK(s.ci95 == doctest::Approx(1.96 * std::sqrt(14.0 / 3.0) / 2.0));
    CHECK(s.values.size() == 4);
    CHECK_ERROR_KIND(eval::summarize({}), ErrorKind::kSampleSize);
  }

  TEST_CASE("default repeat count is twenty") {
    CHECK(eval::kDefaultRepeats == 20);
    CHECK(eval::EvalOptions{}.repeats == 20);
  }

  TEST_CASE("generation report with repeats and a single repeat") {
    Setup s;
    eval::EvalOptions o;
    o.repeats = 3;
    const auto r = eval::evaluate_pipeline(s.tok, &s.sar, s.records, s.data.manifest.normalization, o);
    CHECK(r.mode == "generation");
    CHECK(r.samples == s.records.size());
    CHECK(r.toy_fid.values.size() == 3);
    CHECK(r.semantic_accuracy.values.size() == 3);
    REQUIRE(r.perplexity.has_value());
    CHECK(r.perplexity->mean >= 1.0);
    CHECK(r.codebook_entropy.size() == 4);
    CHECK(r.toy_fid.ci95 >= 0.0);

    o.repeats = 1;
    const auto single = eval::evaluate_pipeline(s.tok, &s.sar, s.records, s.data.manifest.normalization, o);
    CHECK(single.toy_fid.ci95 == 0.0);
    CHECK(single.semantic_accuracy.ci95 == 0.0);
    // Repeat 0 uses the same derived seed regardless of the repeat count.
    CHECK(single.toy_fid.values[0] == r.toy_fid.values[0]);

    std::istringstream csv(r.to_csv());
    std::string line;
    std::getline(csv, line);
    CHECK(line == "metric,mean,ci95");
    CHECK(r.to_json()["repeats"] == 3);
  }

  TEST_CASE("reconstruction mode is deterministic across repeats") {
    Setup s;
    eval::EvalOptions o;
    o.repeats = 4;
    o.g = 0.0;
    const auto r = eval::evaluate_pipeline(s.tok, nullptr, s.records, s.data.manifest.normalization, o);
    CHECK(r.mode == "reconstruction");
    CHECK_FALSE(r.perplexity.has_value());
    CHECK(r.toy_fid.ci95 == 0.0);
    CHECK(r.recon_smooth_l1.ci95 == 0.0);
    CHECK(r.recon_smooth_l1.mean == doctest::Approx(model::reconstruction_error(s.tok, s.records, false)).epsilon(1e-4));
  }

  TEST_CASE("argument errors") {
    Setup s;
    eval::EvalOptions o;
    o.repeats = 0;
    CHECK_ERROR_KIND(eval::evaluate_pipeline(s.tok, nullptr, s.records, s.data.manifest.normalization, o),
                     ErrorKind::kUsage);
    o.repeats = 1;
    CHECK_ERROR_KIND(eval::evaluate_pipeline(s.tok, nullptr, {s.records[0]}, s.data.manifest.normalization, o),
                     ErrorKind::kSampleSize);
    o.g = -1.0;
    CHECK_ERROR_KIND(eval::evaluate_pipeline(s.tok, nullptr, s.records, s.data.manifest.normalization, o),
                     ErrorKind::kConfig);
    o.g = 1.0;
    auto foreign = s.sar;
    foreign.config.tokenizer_hash ^= 1;
    CHECK_ERROR_KIND(eval::evaluate_pipeline(s.tok, &foreign, s.records, s.data.manifest.normalization, o),
                     ErrorKind::kConfig);
  }

  TEST_CASE("sweep rows match single evaluations") {
    Setup s;
    eval::EvalOptions o;
    o.repeats = 2;
    const auto rows =
        eval::sweep_guidance(s.tok, &s.sar, s.records, s.data.manifest.normalization, {0.0, 1.5}, o);
    REQUIRE(rows.size() == 2);
    o.g = 0.0;
    const auto at0 = eval::evaluate_pipeline(s.tok, &s.sar, s.records, s.data.manifest.normalization, o);
    CHECK(rows[0].g == 0.0);
    CHECK(rows[0].toy_fid == at0.toy_fid.mean);
    CHECK(rows[0].recon == at0.recon_smooth_l1.mean);
    CHECK(rows[0].semantic_accuracy == at0.semantic_accuracy.mean);

    const std::string csv = eval::sweep_csv(rows);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "g,toy_fid,recon,semantic_accuracy");
    while (std::getline(in, line)) CHECK(std::count(line.begin(), line.end(), ',') == 3);
    CHECK_ERROR_KIND(eval::sweep_guidance(s.tok, &s.sar, s.records, s.data.manifest.normalization, {}, o),
                     ErrorKind::kUsage);
  }
}
