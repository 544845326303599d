#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"
#include "lgtok/corpus.hpp"
#include "lgtok/error.hpp"

namespace lgtok::corpus {

namespace {

constexpr char kMotionMagic[4] = {'M', 'O', 'T', 'N'};
constexpr std::uint8_t kMotionFormatVersion = 1;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing " + path.string());
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

void put_tensor_f32(std::string& out, const nn::Tensor& t) {
  for (float f : t.values()) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    put_u32(out, bits);
  }
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

nn::Tensor Normalizer::normalize(const nn::Tensor& raw) const {
  const std::size_t c = raw.cols();
  require(mean.size() == c && stddev.size() == c, ErrorKind::kShape,
          "normalizer has " + std::to_string(mean.size()) + " channels, data has " + std::to_string(c));
  nn::Tensor out = nn::Tensor::zeros_like(raw);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::size_t ch = i % c;
    out[i] = static_cast<float>((static_cast<double>(raw[i]) - mean[ch]) / stddev[ch]);
  }
  return out;
}

nn::Tensor Normalizer::denormalize(const nn::Tensor& normalized) const {
  const std::size_t c = normalized.cols();
  require(mean.size() == c && stddev.size() == c, ErrorKind::kShape,
          "normalizer has " + std::to_string(mean.size()) + " channels, data has " + std::to_string(c));
  nn::Tensor out = nn::Tensor::zeros_like(normalized);
  for (std::size_t i = 0; i < normalized.size(); ++i) {
    const std::size_t ch = i % c;
    out[i] = static_cast<float>(static_cast<double>(normalized[i]) * stddev[ch] + mean[ch]);
  }
  return out;
}

SplitCounts split_counts(std::size_t count) {
  SplitCounts s;
  s.val = count * 5 / 100;
  s.test = count * 15 / 100;
  s.train = count - s.val - s.test;
  return s;
}

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  if (name == "all") return Split::kAll;
  return std::nullopt;
}

std::vector<const Record*> Corpus::split(Split which) const {
  const SplitCounts& s = manifest.splits;
  std::size_t begin = 0, end = records.size();
  switch (which) {
    case Split::kTrain: end = s.train; break;
    case Split::kVal: begin = s.train; end = s.train + s.val; break;
    case Split::kTest: begin = s.train + s.val; end = s.train + s.val + s.test; break;
    case Split::kAll: break;
  }
  std::vector<const Record*> out;
  for (std::size_t i = begin; i < end && i < records.size(); ++i) out.push_back(&records[i]);
  return out;
}

std::vector<MotionSequence> generate_records(const CorpusConfig& config) {
  require(config.size >= 1, ErrorKind::kBounds, "corpus size must be >= 1");
  require(config.frames_min >= kMinFrames && config.frames_max <= kMaxFrames &&
              config.frames_min <= config.frames_max,
          ErrorKind::kBounds, "corpus frame range must lie within [40, 196]");
  std::vector<MotionSequence> out;
  out.reserve(config.size);
  constexpr double pi = std::numbers::pi;
  for (std::size_t i = 0; i < config.size; ++i) {
    std::mt19937_64 rng(mix_seed(config.seed, i));
    std::uniform_int_distribution<int> cls(0, kActionClassCount - 1);
    std::uniform_int_distribution<int> spd(0, kSpeedBucketCount - 1);
    std::uniform_int_distribution<int> dir(0, kDirectionBucketCount - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> frames(config.frames_min, config.frames_max);

    MotionParams p;
    p.action = static_cast<ActionClass>(cls(rng));
    const auto sb = static_cast<SpeedBucket>(spd(rng));
    const auto db = dir(rng);
    p.speed = sb == SpeedBucket::kSlow
                  ? static_cast<float>(kSlowSpeedMin + (kSlowSpeedMax - kSlowSpeedMin) * unit(rng))
                  : static_cast<float>(kFastSpeedMin + (kFastSpeedMax - kFastSpeedMin) * unit(rng));
    // Bucket centres 0, pi/2, pi, -pi/2 with +-pi/8 jitter.
    const double centre = std::remainder(db * pi / 2.0, 2.0 * pi);
    p.direction = static_cast<float>(std::remainder(centre + (unit(rng) - 0.5) * pi / 4.0, 2.0 * pi));
    p.amplitude = static_cast<float>(0.8 + 0.4 * unit(rng));
    p.frames = frames(rng);
    p.seed = rng();
    out.push_back(generate_motion(p));
  }
  return out;
}

Normalizer fit_normalizer(const std::vector<const MotionSequence*>& records) {
  require(!records.empty(), ErrorKind::kSampleSize, "cannot fit normalization on zero records");
  const std::size_t c = records.front()->channels();
  std::vector<double> sum(c, 0.0), sq(c, 0.0);
  double n = 0.0;
  for (const MotionSequence* m : records) {
    for (std::size_t f = 0; f < m->frames(); ++f) {
      for (std::size_t ch = 0; ch < c; ++ch) sum[ch] += m->data.at(f, ch);
    }
    n += static_cast<double>(m->frames());
  }
  Normalizer norm;
  norm.mean.resize(c);
  norm.stddev.resize(c);
  for (std::size_t ch = 0; ch < c; ++ch) norm.mean[ch] = static_cast<float>(sum[ch] / n);
  for (const MotionSequence* m : records) {
    for (std::size_t f = 0; f < m->frames(); ++f) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double d = m->data.at(f, ch) - static_cast<double>(norm.mean[ch]);
        sq[ch] += d * d;
      }
    }
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    norm.stddev[ch] = static_cast<float>(std::max(std::sqrt(sq[ch] / n), 1e-6));
  }
  return norm;
}

Corpus assemble_corpus(CorpusManifest manifest, std::vector<MotionSequence> motions) {
  Corpus corpus;
  corpus.manifest = std::move(manifest);
  corpus.records.reserve(motions.size());
  for (auto& m : motions) {
    Record r;
    r.features = corpus.manifest.normalization.normalize(m.data);
    r.text = embed_text(m.caption, corpus.manifest.d_text);
    r.motion = std::move(m);
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

Corpus make_corpus(const CorpusConfig& config) {
  std::vector<MotionSequence> motions = generate_records(config);
  CorpusManifest manifest;
  manifest.count = motions.size();
  manifest.seed = config.seed;
  manifest.splits = split_counts(motions.size());
  manifest.frames_min = config.frames_min;
  manifest.frames_max = config.frames_max;
  manifest.d_text = config.d_text;
  std::vector<const MotionSequence*> train;
  for (std::size_t i = 0; i < manifest.splits.train; ++i) train.push_back(&motions[i]);
  manifest.normalization = fit_normalizer(train);
  return assemble_corpus(std::move(manifest), std::move(motions));
}

std::string encode_motions(const std::vector<MotionSequence>& records) {
  std::string out(kMotionMagic, sizeof kMotionMagic);
  out.push_back(static_cast<char>(kMotionFormatVersion));
  for (const auto& m : records) {
    put_u32(out, static_cast<std::uint32_t>(m.frames()));
    put_u32(out, static_cast<std::uint32_t>(m.channels()));
    put_tensor_f32(out, m.data);
  }
  return out;
}

void write_motions(const std::filesystem::path& path, const std::vector<nn::Tensor>& motions) {
  std::vector<MotionSequence> records;
  for (const auto& t : motions) records.push_back(MotionSequence{t, "", std::nullopt});
  write_file(path, encode_motions(records));
}

std::vector<nn::Tensor> decode_motions(const std::string& bytes, std::size_t expected_count) {
  require(bytes.size() >= 5 && std::memcmp(bytes.data(), kMotionMagic, 4) == 0, ErrorKind::kFormat,
          "motions file does not start with MOTN magic");
  require(static_cast<std::uint8_t>(bytes[4]) == kMotionFormatVersion, ErrorKind::kVersion,
          "motions file version " + std::to_string(static_cast<int>(static_cast<std::uint8_t>(bytes[4]))) +
              " is not supported");
  std::vector<nn::Tensor> out;
  std::size_t pos = 5;
  while (pos < bytes.size()) {
    require(pos + 8 <= bytes.size(), ErrorKind::kTruncated, "motions file truncated in record header");
    const std::uint32_t frames = get_u32(bytes, pos);
    const std::uint32_t channels = get_u32(bytes, pos + 4);
    pos += 8;
    require(frames > 0 && channels > 0 && frames <= 1u << 20 && channels <= 4096, ErrorKind::kFormat,
            "motions file has an implausible record header");
    const std::size_t n = static_cast<std::size_t>(frames) * channels;
    require(pos + 4 * n <= bytes.size(), ErrorKind::kTruncated, "motions file truncated in record data");
    std::vector<float> values(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t bits = get_u32(bytes, pos + 4 * i);
      std::memcpy(&values[i], &bits, sizeof bits);
    }
    pos += 4 * n;
    out.emplace_back(std::vector<std::size_t>{frames, channels}, std::move(values));
  }
  require(out.size() == expected_count, ErrorKind::kCountMismatch,
          "motions file holds " + std::to_string(out.size()) + " records, manifest declares " +
              std::to_string(expected_count));
  return out;
}

void write_corpus(const std::filesystem::path& dir, const CorpusManifest& manifest,
                  const std::vector<MotionSequence>& records) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json j;
  j["version"] = manifest.version;
  j["count"] = manifest.count;
  j["channels"] = manifest.channels;
  j["mean"] = manifest.normalization.mean;
  j["std"] = manifest.normalization.stddev;
  j["seed"] = manifest.seed;
  j["splits"] = {{"train", manifest.splits.train}, {"val", manifest.splits.val}, {"test", manifest.splits.test}};
  j["frames_min"] = manifest.frames_min;
  j["frames_max"] = manifest.frames_max;
  j["d_text"] = manifest.d_text;
  j["generator"] = kGeneratorVersion;
  write_file(dir / "manifest.json", j.dump(2) + "\n");
  write_file(dir / "motions.bin", encode_motions(records));
  std::string captions;
  for (const auto& m : records) {
    std::string line = m.caption;
    for (char& c : line) {
      if (c == '\n' || c == '\r') c = ' ';
    }
    captions += line + "\n";
  }
  write_file(dir / "captions.txt", captions);
}

CorpusManifest build_corpus(const CorpusConfig& config, const std::filesystem::path& dir) {
  Corpus corpus = make_corpus(config);
  std::vector<MotionSequence> motions;
  motions.reserve(corpus.records.size());
  for (const auto& r : corpus.records) motions.push_back(r.motion);
  write_corpus(dir, corpus.manifest, motions);
  return corpus.manifest;
}

Corpus load_corpus(const std::filesystem::path& dir) {
  CorpusManifest manifest;
  try {
    const auto j = nlohmann::json::parse(read_file(dir / "manifest.json"));
    manifest.version = j.at("version").get<std::string>();
    require(manifest.version == kCorpusVersion, ErrorKind::kVersion,
            "corpus version " + manifest.version + " does not match " + std::string(kCorpusVersion));
    manifest.count = j.at("count").get<std::size_t>();
    manifest.channels = j.at("channels").get<std::size_t>();
    manifest.normalization.mean = j.at("mean").get<std::vector<float>>();
    manifest.normalization.stddev = j.at("std").get<std::vector<float>>();
    manifest.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("splits")) {
      manifest.splits.train = j["splits"].at("train").get<std::size_t>();
      manifest.splits.val = j["splits"].at("val").get<std::size_t>();
      manifest.splits.test = j["splits"].at("test").get<std::size_t>();
    } else {
      manifest.splits = split_counts(manifest.count);
    }
    manifest.frames_min = j.value("frames_min", std::size_t{0});
    manifest.frames_max = j.value("frames_max", std::size_t{0});
    manifest.d_text = j.value("d_text", kDefaultTextDim);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("malformed corpus manifest: ") + e.what());
  }
  require(manifest.normalization.mean.size() == manifest.channels &&
              manifest.normalization.stddev.size() == manifest.channels,
          ErrorKind::kFormat, "manifest normalization does not match channel count");
  for (float s : manifest.normalization.stddev) {
    require(s > 0.0f, ErrorKind::kFormat, "manifest std values must be strictly positive");
  }
  require(manifest.splits.train + manifest.splits.val + manifest.splits.test == manifest.count,
          ErrorKind::kFormat, "manifest split counts do not sum to count");

  std::vector<nn::Tensor> data = decode_motions(read_file(dir / "motions.bin"), manifest.count);
  std::istringstream captions(read_file(dir / "captions.txt"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(captions, line);) lines.push_back(line);
  require(lines.size() == manifest.count, ErrorKind::kCountMismatch,
          "captions.txt holds " + std::to_string(lines.size()) + " lines, manifest declares " +
              std::to_string(manifest.count));

  std::vector<MotionSequence> motions;
  motions.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    require(data[i].cols() == manifest.channels, ErrorKind::kFormat,
            "record " + std::to_string(i) + " has " + std::to_string(data[i].cols()) + " channels");
    motions.push_back(MotionSequence{std::move(data[i]), std::move(lines[i]), std::nullopt});
  }
  return assemble_corpus(std::move(manifest), std::move(motions));
}

}  // namespace lgtok::corpus
