#pragma once

// Procedural motion corpus: an 8-channel generator with templated captions,
// the caption grammar oracle, the frozen hash-table text embedder, and the
// on-disk corpus format.
//
// Channel layout (raw units, 20 frames per second):
//   0 root x      integrated from speed and yaw
//   1 root z
//   2 root yaw    radians, unwrapped
//   3 limb phase  A sin(w t + phi)
//   4 limb phase  A cos(w t + phi)
//   5 vertical    hop height for jumps, small bob otherwise
//   6 root speed
//   7 yaw rate    radians per second
// Every channel carries N(0, (0.005 * amplitude)^2) noise.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lgtok/tensor.hpp"

namespace lgtok::corpus {

inline constexpr std::size_t kChannels = 8;
inline constexpr std::size_t kMinFrames = 40;
inline constexpr std::size_t kMaxFrames = 196;
inline constexpr double kFps = 20.0;
inline constexpr std::size_t kMaxTextTokens = 77;
inline constexpr std::size_t kEmbeddingRows = 4096;
inline constexpr std::size_t kDefaultTextDim = 32;
inline constexpr std::string_view kGeneratorVersion = "lgtok-motion-gen-1";
inline constexpr std::string_view kCorpusVersion = "lgtok-corpus-1";

enum class ActionClass : int { kWalk = 0, kRun, kJump, kTurnLeft, kTurnRight };
enum class SpeedBucket : int { kSlow = 0, kFast };
enum class DirectionBucket : int { kForward = 0, kLeftward, kBackward, kRightward };

inline constexpr int kActionClassCount = 5;
inline constexpr int kSpeedBucketCount = 2;
inline constexpr int kDirectionBucketCount = 4;

struct SemanticLabel {
  ActionClass action = ActionClass::kWalk;
  SpeedBucket speed = SpeedBucket::kSlow;
  DirectionBucket direction = DirectionBucket::kForward;

  bool operator==(const SemanticLabel&) const = default;
  int index() const;  // dense id in [0, label_count())
};

inline constexpr int label_count() {
  return kActionClassCount * kSpeedBucketCount * kDirectionBucketCount;
}

struct MotionParams {
  ActionClass action = ActionClass::kWalk;
  float speed = 1.0f;
  float direction = 0.0f;  // initial heading, radians
  float amplitude = 1.0f;
  std::size_t frames = 64;
  std::uint64_t seed = 0;
};

struct MotionSequence {
  nn::Tensor data;  // [frames, channels]
  std::string caption;
  std::optional<MotionParams> params;

  std::size_t frames() const { return data.rows(); }
  std::size_t channels() const { return data.cols(); }
};

// Speed ranges sampled for each bucket; the classifier threshold sits in the gap.
inline constexpr float kSlowSpeedMin = 0.4f, kSlowSpeedMax = 0.8f;
inline constexpr float kFastSpeedMin = 1.4f, kFastSpeedMax = 2.0f;

SpeedBucket speed_bucket(float speed);
DirectionBucket direction_bucket(float radians);

MotionSequence generate_motion(ActionClass action, float speed, float direction, float amplitude,
                               std::size_t frames, std::uint64_t seed);
MotionSequence generate_motion(const MotionParams& params);

// "a person <verb> <speed> <direction>", e.g. "a person walks quickly forward".
std::string make_caption(const SemanticLabel& label);
SemanticLabel label_for(const MotionParams& params);
// Exact inverse of make_caption (case and whitespace insensitive).
std::optional<SemanticLabel> parse_caption(std::string_view caption);

// ---------------------------------------------------------------------------
// Text context

struct TextContext {
  nn::Tensor embeddings;  // [tokens, d_text]; empty when is_empty
  bool is_empty = true;

  std::size_t tokens() const { return is_empty ? 0 : embeddings.rows(); }
  static TextContext empty() { return {}; }
};

// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view bytes);

// Frozen stand-in for a language model: lowercase whitespace tokens, each
// mapped by fnv1a64 % 4096 into a fixed table of N(0,1) rows drawn once from
// a constant seed. Sequences are truncated to 77 tokens.
TextContext embed_text(std::string_view caption, std::size_t d_text = kDefaultTextDim);
std::vector<std::string> tokenize_caption(std::string_view caption);

// ---------------------------------------------------------------------------
// Corpus

struct Normalizer {
  std::vector<float> mean;
  std::vector<float> stddev;

  nn::Tensor normalize(const nn::Tensor& raw) const;
  nn::Tensor denormalize(const nn::Tensor& normalized) const;
};

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};

// 80/5/15 split: val and test are floored, the remainder goes to train.
SplitCounts split_counts(std::size_t count);

struct CorpusConfig {
  std::size_t size = 512;
  std::uint64_t seed = 1;
  std::size_t frames_min = 40;
  std::size_t frames_max = 64;
  std::size_t d_text = kDefaultTextDim;
};

struct CorpusManifest {
  std::string version = std::string(kCorpusVersion);
  std::size_t count = 0;
  std::size_t channels = kChannels;
  Normalizer normalization;
  std::uint64_t seed = 0;
  SplitCounts splits;
  std::size_t frames_min = 0, frames_max = 0;
  std::size_t d_text = kDefaultTextDim;
};

enum class Split { kTrain, kVal, kTest, kAll };
std::optional<Split> parse_split(std::string_view name);

struct Record {
  MotionSequence motion;   // raw units, exactly as stored
  nn::Tensor features;     // normalized [frames, channels]
  TextContext text;
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<Record> records;

  std::vector<const Record*> split(Split which) const;
};

// Pure function of the config: record i uses seed mix(config.seed, i).
std::vector<MotionSequence> generate_records(const CorpusConfig& config);
// Per-channel mean/population std over every frame of the given records;
// std is floored at 1e-6.
Normalizer fit_normalizer(const std::vector<const MotionSequence*>& records);

// Generates and writes manifest.json, motions.bin and captions.txt.
CorpusManifest build_corpus(const CorpusConfig& config, const std::filesystem::path& dir);
void write_corpus(const std::filesystem::path& dir, const CorpusManifest& manifest,
                  const std::vector<MotionSequence>& records);
Corpus load_corpus(const std::filesystem::path& dir);
// In-memory corpus with the same normalization and split rules as build_corpus.
Corpus make_corpus(const CorpusConfig& config);
Corpus assemble_corpus(CorpusManifest manifest, std::vector<MotionSequence> motions);

// motions.bin encoder/decoder ("MOTN", version byte, then per record
// u32 frames, u32 channels, f32 row-major data).
std::string encode_motions(const std::vector<MotionSequence>& records);
std::vector<nn::Tensor> decode_motions(const std::string& bytes, std::size_t expected_count);
void write_motions(const std::filesystem::path& path, const std::vector<nn::Tensor>& motions);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace lgtok::corpus
