#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "lgtok/metrics.hpp"
#include "test_util.hpp"

using namespace lgtok;
using metrics::FeatureVector;
using nn::Tensor;

namespace {

std::vector<FeatureVector> gaussian_set(std::size_t n, std::size_t dim, double shift, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<FeatureVector> out(n, FeatureVector(dim));
  for (auto& v : out) {
    for (std::size_t j = 0; j < dim; ++j) v[j] = normal(rng) * (1.0 + 0.3 * static_cast<double>(j)) + shift;
  }
  return out;
}

std::vector<Tensor> raw_motions(const corpus::Corpus& c) {
  std::vector<Tensor> out;
  for (const auto& r : c.records) out.push_back(r.motion.data);
  return out;
}

std::vector<std::string> captions(const corpus::Corpus& c) {
  std::vector<std::string> out;
  for (const auto& r : c.records) out.push_back(r.motion.caption);
  return out;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("motion features of a ramp") {
    Tensor m = Tensor::matrix(4, 2);
    for (std::size_t t = 0; t < 4; ++t) {
      m.at(t, 0) = static_cast<float>(t);
      m.at(t, 1) = 5.0f;
    }
    const auto f = metrics::motion_features(m);
    REQUIRE(f.size() == 8);
    CHECK(f[0] == doctest::Approx(1.5));
    CHECK(f[1] == doctest::Approx(std::sqrt(1.25)));
    CHECK(f[2] == doctest::Approx(1.0));
    CHECK(f[3] == doctest::Approx(3.0));
    CHECK(f[4] == 5.0);
    CHECK(f[5] == 0.0);
    CHECK(f[6] == 0.0);
    CHECK(f[7] == 0.0);
    CHECK_ERROR_KIND(metrics::motion_features(Tensor::matrix(1, 8)), ErrorKind::kData);
  }

  TEST_CASE("toy FID of a set with itself is zero") {
    const auto a = gaussian_set(50, 6, 0.0, 1);
    CHECK(std::fabs(metrics::toy_fid(a, a)) <= 1e-6);
  }

  TEST_CASE("toy FID is symmetric and translation invariant") {
    const auto a = gaussian_set(60, 5, 0.0, 2), b = gaussian_set(40, 5, 0.7, 3);
    const double ab = metrics::toy_fid(a, b);
    CHECK(ab > 0.0);
    CHECK(std::fabs(ab - metrics::toy_fid(b, a)) < 1e-6);
    auto a2 = a, b2 = b;
    for (auto& v : a2) for (double& x : v) x += 10.0;
    for (auto& v : b2) for (double& x : v) x += 10.0;
    CHECK(std::fabs(ab - metrics::toy_fid(a2, b2)) < 1e-6);
  }

  TEST_CASE("toy FID closed forms") {
    // Two points at +-1/sqrt(2) have sample variance exactly 1.
    const double h = std::sqrt(0.5);
    const std::vector<FeatureVector> a = {{-h}, {h}}, b = {{3.0 - h}, {3.0 + h}};
    CHECK(metrics::toy_fid(a, b) == doctest::Approx(9.0).epsilon(1e-9));

    // Diagonal covariances: |dmu|^2 + sum (sigma_a - sigma_b)^2, both loaded by 1e-6.
    const std::vector<FeatureVector> c = {{-1.0, -2.0}, {1.0, 2.0}, {-1.0, 2.0}, {1.0, -2.0}};
    const std::vector<FeatureVector> d = {{0.5, 4.0}, {1.5, 4.0}, {0.5, 4.0}, {1.5, 4.0}};
    const double va0 = 4.0 / 3.0 + 1e-6, va1 = 16.0 / 3.0 + 1e-6, vb0 = 1.0 / 3.0 + 1e-6, vb1 = 1e-6;
    const double expected = 1.0 + 16.0 + std::pow(std::sqrt(va0) - std::sqrt(vb0), 2) +
                            std::pow(std::sqrt(va1) - std::sqrt(vb1), 2);
    CHECK(metrics::toy_fid(c, d) == doctest::Approx(expected).epsilon(1e-9));

    CHECK_ERROR_KIND(metrics::toy_fid({{1.0}}, b), ErrorKind::kSampleSize);
  }

  TEST_CASE("classifier recovers ground-truth labels") {
    corpus::CorpusConfig cfg;
    cfg.size = 1000;
    cfg.seed = 17;
    cfg.frames_max = 196;
    const auto c = corpus::make_corpus(cfg);
    const auto s = metrics::semantic_accuracy(raw_motions(c), captions(c));
    CHECK(s.total == 1000);
    CHECK(s.accuracy >= 0.99);
  }

  TEST_CASE("permuted captions score near chance") {
    corpus::CorpusConfig cfg;
    cfg.size = 3000;
    cfg.seed = 18;
    const auto c = corpus::make_corpus(cfg);
    auto caps = captions(c);
    std::mt19937_64 rng(5);
    std::shuffle(caps.begin(), caps.end(), rng);
    const double chance = 1.0 / corpus::label_count();
    const double acc = metrics::semantic_accuracy(raw_motions(c), caps).accuracy;
    CHECK(acc >= 0.5 * chance);
    CHECK(acc <= 1.5 * chance);
  }

  TEST_CASE("unparsable captions count as mismatches") {
    const auto m = corpus::generate_motion(corpus::ActionClass::kWalk, 0.6f, 0.0f, 1.0f, 50, 2);
    const auto s = metrics::semantic_accuracy({m.data, m.data}, {m.caption, "someone dances"});
    CHECK(s.matched == 1);
    CHECK(s.accuracy == 0.5);
    CHECK(s.unparsable == std::vector<std::string>{"someone dances"});
    CHECK_ERROR_KIND(metrics::semantic_accuracy({}, {}), ErrorKind::kSampleSize);
  }

  TEST_CASE("features ignore the caption") {
    const auto m = corpus::generate_motion(corpus::ActionClass::kJump, 1.5f, 0.2f, 1.0f, 50, 9);
    auto other = m;
    other.caption = "a person walks slowly backward";
    CHECK(metrics::motion_features(m.data) == metrics::motion_features(other.data));
  }
}
