#pragma once

// Desk-scale metric proxies: fixed motion statistics, a Frechet distance
// between Gaussian fits of those statistics, and a rule-based classifier
// scored against the caption grammar.

#include <string>
#include <vector>

#include "lgtok/corpus.hpp"

namespace lgtok::metrics {

using FeatureVector = std::vector<double>;

// Per channel: temporal mean, population std, mean |first difference|,
// last minus first. Layout is channel-major, 4C values. F < 2 is rejected.
FeatureVector motion_features(const nn::Tensor& motion);

// Mean and covariance fits (sample covariance, diagonal loaded by 1e-6).
// Needs at least 2 vectors per set; the result is clamped at 0.
double toy_fid(const std::vector<FeatureVector>& a, const std::vector<FeatureVector>& b);

// Thresholds in raw units sit between the generator's class ranges.
inline constexpr double kTurnYawRate = 0.5;      // rad/s over the whole clip
inline constexpr double kJumpVerticalStd = 0.07;
inline constexpr double kRunLimbAmplitude = 0.7;
inline constexpr std::size_t kHeadingFrames = 8;

corpus::SemanticLabel classify_motion(const nn::Tensor& raw_motion);

struct SemanticScore {
  double accuracy = 0.0;
  std::size_t matched = 0;
  std::size_t total = 0;
  std::vector<std::string> unparsable;  // captions counted as mismatches
};

// Motions are raw-unit tensors; captions are parsed with the grammar oracle.
SemanticScore semantic_accuracy(const std::vector<nn::Tensor>& raw_motions, const std::vector<std::string>& captions);

}  // namespace lgtok::metrics
