#pragma once

// Key=value run configuration shared by every CLI stage.
//
//   # comment
//   preset = tiny
//   tok.layers = 2
//   tok.schedule = 1,2,4,8
//
// A preset, when named, is expanded first; later keys override it. Unknown
// keys and malformed values are config errors.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lgtok/corpus.hpp"
#include "lgtok/sar.hpp"
#include "lgtok/tokenizer.hpp"

namespace lgtok::pipeline {

struct StageTraining {
  std::size_t epochs = 20;
  std::size_t batch = 32;
  std::size_t max_steps = 0;
  float lr = 2e-3f;
  float clip = 1.0f;
};

struct RunConfig {
  std::string preset = "tiny";
  std::uint64_t seed = 1;
  corpus::CorpusConfig data;
  model::TokenizerConfig tok;
  StageTraining tok_train;
  model::SarConfig sar;
  StageTraining sar_train;
  double g = 2.0;
  std::size_t eval_repeats = 20;
  std::string eval_split = "test";
  std::filesystem::path data_dir = "data";
  std::filesystem::path tokenizer_path = "tok/final.ckpt";
  std::filesystem::path sar_path = "sar/final.ckpt";

  // Preset values with the SAR vocabulary, schedule and text width tied to
  // the tokenizer.
  static RunConfig from_preset(std::string_view name);

  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  // Parses text in the format above on top of *this.
  void apply_text(std::string_view text, std::string_view origin = "config");
  void apply_file(const std::filesystem::path& path);

  // Every key in canonical order, one "key = value" line each.
  std::string to_text() const;
  // FNV-1a over to_text().
  std::uint64_t hash() const;

  // Copies the tokenizer-owned fields into the SAR config and validates both.
  void finalize();
};

const std::vector<std::string>& preset_names();

}  // namespace lgtok::pipeline
