#include "lgtok/quantizer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include "lgtok/error.hpp"
#include "lgtok/kernels.hpp"

namespace lgtok::quant {

std::size_t ScaleSchedule::total() const noexcept {
  return std::accumulate(scales.begin(), scales.end(), std::size_t{0});
}

std::vector<std::size_t> ScaleSchedule::offsets() const {
  std::vector<std::size_t> out(scales.size());
  std::size_t at = 0;
  for (std::size_t n = 0; n < scales.size(); ++n) {
    out[n] = at;
    at += scales[n];
  }
  return out;
}

void ScaleSchedule::validate() const {
  require(!scales.empty(), ErrorKind::kConfig, "scale schedule is empty");
  require(scales.front() >= 1, ErrorKind::kConfig, "scale schedule must start at >= 1");
  for (std::size_t n = 1; n < scales.size(); ++n) {
    if (!(scales[n - 1] <= scales[n])) fail(ErrorKind::kConfig, "scale schedule " + to_string() + " is not ascending");
  }
}

ScaleSchedule ScaleSchedule::parse(std::string_view text) {
  ScaleSchedule s;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      fail(ErrorKind::kConfig, "scale schedule entry '" + item + "' is not an integer");
    }
    while (used < item.size() && item[used] == ' ') ++used;
    if (!(used == item.size() && v > 0))
      fail(ErrorKind::kConfig, "scale schedule entry '" + item + "' is not a positive integer");
    s.scales.push_back(static_cast<std::size_t>(v));
  }
  s.validate();
  return s;
}

std::string ScaleSchedule::to_string() const {
  std::string out;
  for (std::size_t n = 0; n < scales.size(); ++n) {
    if (n) out += ',';
    out += std::to_string(scales[n]);
  }
  return out;
}

ScaleSchedule mini_schedule() { return {{1, 2, 3, 4, 6, 9, 13, 17, 24, 25}}; }
ScaleSchedule mid_schedule() { return {{2, 4, 6, 8, 10, 14, 20, 26, 34, 36}}; }
ScaleSchedule full_schedule() { return {{3, 6, 9, 13, 18, 24, 31, 40, 43, 49}}; }

namespace {

nn::Tensor build_interpolation(std::size_t from, std::size_t to) {
  nn::Tensor m = nn::Tensor::matrix(to, from);
  if (from == to) {
    for (std::size_t i = 0; i < to; ++i) m.at(i, i) = 1.0f;
  } else if (to == 1) {
    for (std::size_t k = 0; k < from; ++k) m.at(0, k) = 1.0f / static_cast<float>(from);
  } else if (from == 1) {
    for (std::size_t i = 0; i < to; ++i) m.at(i, 0) = 1.0f;
  } else {
    for (std::size_t i = 0; i < to; ++i) {
      const double pos = static_cast<double>(i) * static_cast<double>(from - 1) / static_cast<double>(to - 1);
      std::size_t lo = static_cast<std::size_t>(std::floor(pos));
      if (lo >= from - 1) lo = from - 1;
      const double frac = pos - static_cast<double>(lo);
      m.at(i, lo) += static_cast<float>(1.0 - frac);
      if (frac > 0.0) m.at(i, lo + 1) += static_cast<float>(frac);
    }
  }
  return m;
}

nn::Tensor apply(const nn::Tensor& m, const nn::Tensor& z) {
  nn::Tensor out = nn::Tensor::matrix(m.rows(), z.cols());
  kernels::active().gemm_nn(m.rows(), z.cols(), m.cols(), m.data(), m.cols(), z.data(), z.cols(), out.data(),
                            z.cols(), false);
  return out;
}

}  // namespace

nn::Tensor interpolation_matrix(std::size_t from, std::size_t to) {
  require(from >= 1 && to >= 1, ErrorKind::kBounds, "interpolation needs at least one row on each side");
  static std::mutex mu;
  static std::map<std::pair<std::size_t, std::size_t>, nn::Tensor> cache;
  std::lock_guard lock(mu);
  auto it = cache.find({from, to});
  if (it == cache.end()) it = cache.emplace(std::make_pair(from, to), build_interpolation(from, to)).first;
  return it->second;
}

nn::Tensor downsample(const nn::Tensor& z, std::size_t s) {
  const std::size_t t = z.rows();
  require(t >= 1, ErrorKind::kShape, "downsample: empty input");
  if (!(s >= 1 && s <= t))
    fail(ErrorKind::kBounds, "downsample: target " + std::to_string(s) + " outside [1, " + std::to_string(t) + "]");
  if (s == t) return z;
  return apply(interpolation_matrix(t, s), z);
}

nn::Tensor upsample(const nn::Tensor& z, std::size_t t) {
  const std::size_t s = z.rows();
  require(s >= 1, ErrorKind::kShape, "upsample: empty input");
  if (!(t >= s))
    fail(ErrorKind::kBounds, "upsample: target " + std::to_string(t) + " below source " + std::to_string(s));
  if (s == t) return z;
  return apply(interpolation_matrix(s, t), z);
}

Codebook Codebook::random(std::size_t v, std::size_t d, std::uint64_t seed, float scale) {
  require(v >= 2 && d >= 1, ErrorKind::kConfig, "codebook needs V >= 2 entries of dimension >= 1");
  nn::Tensor e = nn::Tensor::matrix(v, d);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, scale);
  for (float& x : e.values()) x = normal(rng);
  return from_entries(std::move(e));
}

Codebook Codebook::from_entries(nn::Tensor entries) {
  require(entries.rank() == 2 && entries.rows() >= 1 && entries.cols() >= 1, ErrorKind::kConfig,
          "codebook entries must be a non-empty matrix");
  require(entries.all_finite(), ErrorKind::kNumeric, "codebook entries must be finite");
  Codebook b;
  b.ema_sums = entries;
  b.entries = std::move(entries);
  const std::size_t v = b.entries.rows();
  b.ema_counts.assign(v, 1.0f);
  b.usage.assign(v, 0);
  b.idle_steps.assign(v, 0);
  return b;
}

void Codebook::record_usage(std::span<const int> indices, std::optional<std::size_t> scale) {
  std::vector<std::uint64_t>* per_scale = nullptr;
  if (scale) {
    if (scale_usage.size() <= *scale) scale_usage.resize(*scale + 1);
    per_scale = &scale_usage[*scale];
    if (per_scale->size() != size()) per_scale->assign(size(), 0);
  }
  for (int i : indices) {
    ++usage[static_cast<std::size_t>(i)];
    if (per_scale) ++(*per_scale)[static_cast<std::size_t>(i)];
  }
}

void Codebook::reset_usage() {
  usage.assign(size(), 0);
  scale_usage.clear();
}

Assignment quantize_nearest(const nn::Tensor& rows, const Codebook& book) {
  const std::size_t v = book.size(), d = book.dim();
  require(v > 0, ErrorKind::kConfig, "quantize_nearest: empty codebook");
  if (rows.cols() != d)
    fail(ErrorKind::kShape,
         "quantize_nearest: rows " + rows.shape_string() + " against codebook " + book.entries.shape_string());
  const auto& K = kernels::active();
  Assignment out;
  out.indices.resize(rows.rows());
  out.embeddings = nn::Tensor::matrix(rows.rows(), d);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const float* r = rows.data() + i * d;
    int best = 0;
    float best_dist = K.squared_distance(r, book.entries.data(), d);
    for (std::size_t k = 1; k < v; ++k) {
      const float dist = K.squared_distance(r, book.entries.data() + k * d, d);
      if (dist < best_dist) {
        best_dist = dist;
        best = static_cast<int>(k);
      }
    }
    out.indices[i] = best;
    const auto src = book.entries.row(static_cast<std::size_t>(best));
    std::copy(src.begin(), src.end(), out.embeddings.row(i).begin());
  }
  return out;
}

Assignment quantize_nearest(const nn::Tensor& rows, Codebook& book, std::optional<std::size_t> scale) {
  Assignment a = quantize_nearest(rows, static_cast<const Codebook&>(book));
  book.record_usage(a.indices, scale);
  return a;
}

std::size_t TokenSet::total() const noexcept {
  return std::accumulate(scales.begin(), scales.end(), std::size_t{0});
}

std::vector<int> TokenSet::flat() const {
  std::vector<int> out;
  out.reserve(total());
  for (const auto& c : codes) out.insert(out.end(), c.begin(), c.end());
  return out;
}

TokenSet TokenSet::from_flat(const ScaleSchedule& schedule, std::span<const int> flat) {
  if (flat.size() != schedule.total())
    fail(ErrorKind::kShape, "token sequence of " + std::to_string(flat.size()) + " codes for schedule total " +
                                std::to_string(schedule.total()));
  TokenSet t;
  t.scales = schedule.scales;
  std::size_t at = 0;
  for (std::size_t s : schedule.scales) {
    t.codes.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(at),
                         flat.begin() + static_cast<std::ptrdiff_t>(at + s));
    at += s;
  }
  return t;
}

void TokenSet::validate(std::size_t vocabulary) const {
  require(codes.size() == scales.size(), ErrorKind::kShape, "token set has a code list per scale mismatch");
  for (std::size_t n = 0; n < scales.size(); ++n) {
    if (codes[n].size() != scales[n])
      fail(ErrorKind::kShape, "scale " + std::to_string(n + 1) + " holds " + std::to_string(codes[n].size()) +
                                  " codes, expected " + std::to_string(scales[n]));
    for (int c : codes[n]) {
      if (!(c >= 0 && static_cast<std::size_t>(c) < vocabulary))
        fail(ErrorKind::kData,
             "token index " + std::to_string(c) + " outside vocabulary of " + std::to_string(vocabulary));
    }
  }
}

MultiscaleResult multiscale_quantize(const nn::Tensor& z, const ScaleSchedule& schedule,
                                     const Quantizer& quantizer) {
  schedule.validate();
  const std::size_t t = z.rows();
  if (t != schedule.base())
    fail(ErrorKind::kShape,
         "latent has " + std::to_string(t) + " rows, schedule ends at " + std::to_string(schedule.base()));
  if (!(quantizer.shared() || quantizer.books.size() == schedule.count()))
    fail(ErrorKind::kConfig, "per-scale quantizer has " + std::to_string(quantizer.books.size()) + " codebooks for " +
                                 std::to_string(schedule.count()) + " scales");
  MultiscaleResult out;
  out.tokens.scales = schedule.scales;
  out.z_hat = nn::Tensor::zeros_like(z);
  nn::Tensor residual = z;
  for (std::size_t n = 0; n < schedule.count(); ++n) {
    nn::Tensor down = downsample(residual, schedule.scales[n]);
    Assignment a = quantize_nearest(down, quantizer.book(n));
    nn::Tensor up = upsample(a.embeddings, t);
    residual.add_scaled(up, -1.0f);
    out.z_hat.add_scaled(up);
    out.tokens.codes.push_back(std::move(a.indices));
    out.per_scale.push_back(std::move(up));
    out.scale_inputs.push_back(std::move(down));
  }
  out.residual = std::move(residual);
  return out;
}

nn::Tensor dequantize(const TokenSet& tokens, const Quantizer& quantizer, std::size_t t) {
  tokens.validate(quantizer.vocabulary());
  const std::size_t d = quantizer.books.front().dim();
  nn::Tensor z_hat = nn::Tensor::matrix(t, d);
  for (std::size_t n = 0; n < tokens.scales.size(); ++n) {
    const Codebook& book = quantizer.book(n);
    nn::Tensor emb = nn::Tensor::matrix(tokens.scales[n], d);
    for (std::size_t i = 0; i < tokens.scales[n]; ++i) {
      const auto src = book.entries.row(static_cast<std::size_t>(tokens.codes[n][i]));
      std::copy(src.begin(), src.end(), emb.row(i).begin());
    }
    z_hat.add_scaled(upsample(emb, t));
  }
  return z_hat;
}

std::vector<RevivalEvent> codebook_update(Codebook& book, const nn::Tensor& rows, std::span<const int> assigned,
                                          const EmaConfig& config, std::mt19937_64& rng, std::uint64_t step) {
  require(assigned.size() == rows.rows(), ErrorKind::kShape, "codebook_update: one assignment per row required");
  require(config.decay > 0.0f && config.decay < 1.0f, ErrorKind::kConfig, "EMA decay must lie in (0, 1)");
  std::vector<RevivalEvent> events;
  if (rows.rows() == 0) return events;
  const std::size_t v = book.size(), d = book.dim();
  require(rows.cols() == d, ErrorKind::kShape, "codebook_update: row width differs from codebook");

  std::vector<double> n(v, 0.0);
  std::vector<double> sums(v * d, 0.0);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const std::size_t k = static_cast<std::size_t>(assigned[i]);
    require(k < v, ErrorKind::kData, "codebook_update: assignment outside codebook");
    n[k] += 1.0;
    for (std::size_t j = 0; j < d; ++j) sums[k * d + j] += rows.at(i, j);
  }
  const double decay = config.decay;
  double total = 0.0;
  for (std::size_t k = 0; k < v; ++k) {
    book.ema_counts[k] = static_cast<float>(decay * book.ema_counts[k] + (1.0 - decay) * n[k]);
    for (std::size_t j = 0; j < d; ++j) {
      book.ema_sums.at(k, j) =
          static_cast<float>(decay * book.ema_sums.at(k, j) + (1.0 - decay) * sums[k * d + j]);
    }
    total += book.ema_counts[k];
  }
  const double eps = config.epsilon;
  for (std::size_t k = 0; k < v; ++k) {
    const double smoothed = (book.ema_counts[k] + eps) / (total + static_cast<double>(v) * eps) * total;
    for (std::size_t j = 0; j < d; ++j) {
      book.entries.at(k, j) = static_cast<float>(book.ema_sums.at(k, j) / smoothed);
    }
  }
  std::uniform_int_distribution<std::size_t> pick(0, rows.rows() - 1);
  for (std::size_t k = 0; k < v; ++k) {
    if (n[k] > 0.0) {
      book.idle_steps[k] = 0;
      continue;
    }
    if (++book.idle_steps[k] < config.revival_steps) continue;
    const auto src = rows.row(pick(rng));
    std::copy(src.begin(), src.end(), book.entries.row(k).begin());
    std::copy(src.begin(), src.end(), book.ema_sums.row(k).begin());
    book.ema_counts[k] = 1.0f;
    book.idle_steps[k] = 0;
    ++book.revivals;
    events.push_back({k, step});
  }
  return events;
}

UsageStats usage_stats(std::span<const std::uint64_t> counts) {
  UsageStats s;
  s.counts.assign(counts.begin(), counts.end());
  s.frequency.assign(counts.size(), 0.0);
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0,
                                       [](double a, std::uint64_t c) { return a + static_cast<double>(c); });
  if (total <= 0.0 || counts.size() < 2) {
    s.empty = total <= 0.0;
    return s;
  }
  s.empty = false;
  double h = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double p = static_cast<double>(counts[k]) / total;
    s.frequency[k] = p;
    if (p > 0.0) h -= p * std::log(p);
  }
  s.entropy = std::clamp(h / std::log(static_cast<double>(counts.size())), 0.0, 1.0);
  return s;
}

UsageStats usage_stats(const Codebook& book) { return usage_stats(book.usage); }

std::string usage_csv(const Quantizer& quantizer) {
  std::ostringstream out;
  out << "scale,entry,count,frequency\n";
  std::size_t scales = 0;
  for (const auto& b : quantizer.books) scales = std::max(scales, b.scale_usage.size());
  for (std::size_t n = 0; n < scales; ++n) {
    const Codebook& b = quantizer.books[quantizer.shared() ? 0 : std::min(n, quantizer.books.size() - 1)];
    std::vector<std::uint64_t> counts(b.size(), 0);
    if (n < b.scale_usage.size() && b.scale_usage[n].size() == b.size()) counts = b.scale_usage[n];
    const UsageStats s = usage_stats(counts);
    for (std::size_t k = 0; k < counts.size(); ++k) {
      out << (n + 1) << ',' << k << ',' << counts[k] << ',' << s.frequency[k] << '\n';
    }
  }
  return out.str();
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_token_sets(const ScaleSchedule& schedule, const std::vector<TokenSet>& sets) {
  schedule.validate();
  std::string out = "TOKS";
  put_u32(out, static_cast<std::uint32_t>(schedule.count()));
  for (std::size_t s : schedule.scales) put_u32(out, static_cast<std::uint32_t>(s));
  for (const TokenSet& t : sets) {
    require(t.scales == schedule.scales, ErrorKind::kConfig, "token set schedule differs from file schedule");
    t.validate(65536);
    for (const auto& c : t.codes) {
      for (int code : c) {
        out.push_back(static_cast<char>(code & 0xff));
        out.push_back(static_cast<char>((code >> 8) & 0xff));
      }
    }
  }
  return out;
}

std::vector<TokenSet> decode_token_sets(const std::string& bytes, ScaleSchedule* schedule_out) {
  require(bytes.size() >= 4 && std::memcmp(bytes.data(), "TOKS", 4) == 0, ErrorKind::kFormat,
          "token file does not start with TOKS magic");
  require(bytes.size() >= 8, ErrorKind::kTruncated, "token file truncated in header");
  const std::uint32_t n = get_u32(bytes, 4);
  if (!(n >= 1 && n <= 4096)) fail(ErrorKind::kFormat, "token file declares " + std::to_string(n) + " scales");
  require(bytes.size() >= 8 + 4ull * n, ErrorKind::kTruncated, "token file truncated in schedule");
  ScaleSchedule schedule;
  for (std::uint32_t i = 0; i < n; ++i) schedule.scales.push_back(get_u32(bytes, 8 + 4 * i));
  try {
    schedule.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, std::string("token file schedule invalid: ") + e.what());
  }
  const std::size_t body = bytes.size() - (8 + 4ull * n);
  const std::size_t record = 2 * schedule.total();
  require(body % record == 0, ErrorKind::kTruncated, "token file ends inside a record");
  std::vector<TokenSet> out;
  std::size_t pos = 8 + 4ull * n;
  std::vector<int> flat(schedule.total());
  for (std::size_t r = 0; r < body / record; ++r) {
    for (std::size_t i = 0; i < flat.size(); ++i, pos += 2) {
      flat[i] = static_cast<unsigned char>(bytes[pos]) | (static_cast<unsigned char>(bytes[pos + 1]) << 8);
    }
    out.push_back(TokenSet::from_flat(schedule, flat));
  }
  if (schedule_out) *schedule_out = schedule;
  return out;
}

void write_token_sets(const std::filesystem::path& path, const ScaleSchedule& schedule,
                      const std::vector<TokenSet>& sets) {
  const std::string bytes = encode_token_sets(schedule, sets);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "failed writing " + path.string());
}

std::vector<TokenSet> read_token_sets(const std::filesystem::path& path, ScaleSchedule* schedule) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_token_sets(ss.str(), schedule);
}

}  // namespace lgtok::quant
