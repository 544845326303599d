#include "lgtok/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "lgtok/error.hpp"

namespace lgtok::pipeline {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  fail(ErrorKind::kConfig,
       "key '" + std::string(key) + "': '" + std::string(value) + "' is not " + std::string(want));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value, std::string_view want) {
  T v{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, want);
  return v;
}

std::size_t parse_count(std::string_view key, std::string_view value) {
  return parse_number<std::size_t>(key, value, "a non-negative integer");
}

float parse_float(std::string_view key, std::string_view value) {
  const float v = parse_number<float>(key, value, "a number");
  if (!std::isfinite(v)) bad_value(key, value, "a finite number");
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "a boolean (true|false)");
}

template <typename T>
std::string show(T v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string show(bool v) { return v ? "true" : "false"; }

struct Entry {
  std::string key;
  std::function<void(RunConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define LGTOK_COUNT(name, field)                                                                        \
  Entry {                                                                                               \
    name, [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_count(k, v); },    \
        [](const RunConfig& c) { return show(c.field); }                                                \
  }
#define LGTOK_FLOAT(name, field)                                                                        \
  Entry {                                                                                               \
    name, [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_float(k, v); },    \
        [](const RunConfig& c) { return show(c.field); }                                                \
  }
#define LGTOK_BOOL(name, field)                                                                         \
  Entry {                                                                                               \
    name, [](RunConfig& c, std::string_view k, std::string_view v) { c.field = parse_bool(k, v); },     \
        [](const RunConfig& c) { return show(c.field); }                                                \
  }
#define LGTOK_PATH(name, field)                                                                         \
  Entry {                                                                                               \
    name, [](RunConfig& c, std::string_view, std::string_view v) { c.field = std::string(v); },         \
        [](const RunConfig& c) { return c.field.generic_string(); }                                     \
  }

// Enum-valued keys forward to the owning module's parser, which reports
// kConfig itself.
#define LGTOK_ENUM(name, field, parser)                                                                 \
  Entry {                                                                                               \
    name, [](RunConfig& c, std::string_view, std::string_view v) { c.field = parser(v); },              \
        [](const RunConfig& c) { return std::string(model::to_string(c.field)); }                       \
  }

void add_training(std::vector<Entry>& out, const std::string& prefix, StageTraining RunConfig::*stage) {
  out.push_back({prefix + ".epochs",
                 [stage](RunConfig& c, std::string_view k, std::string_view v) { (c.*stage).epochs = parse_count(k, v); },
                 [stage](const RunConfig& c) { return show((c.*stage).epochs); }});
  out.push_back({prefix + ".batch",
                 [stage](RunConfig& c, std::string_view k, std::string_view v) { (c.*stage).batch = parse_count(k, v); },
                 [stage](const RunConfig& c) { return show((c.*stage).batch); }});
  out.push_back(
      {prefix + ".max_steps",
       [stage](RunConfig& c, std::string_view k, std::string_view v) { (c.*stage).max_steps = parse_count(k, v); },
       [stage](const RunConfig& c) { return show((c.*stage).max_steps); }});
  out.push_back({prefix + ".lr",
                 [stage](RunConfig& c, std::string_view k, std::string_view v) { (c.*stage).lr = parse_float(k, v); },
                 [stage](const RunConfig& c) { return show((c.*stage).lr); }});
  out.push_back({prefix + ".clip",
                 [stage](RunConfig& c, std::string_view k, std::string_view v) { (c.*stage).clip = parse_float(k, v); },
                 [stage](const RunConfig& c) { return show((c.*stage).clip); }});
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back({"seed", [](RunConfig& c, std::string_view k, std::string_view v) {
                   c.seed = parse_number<std::uint64_t>(k, v, "an unsigned integer");
                 },
                 [](const RunConfig& c) { return show(c.seed); }});
    t.push_back(LGTOK_COUNT("data.size", data.size));
    t.push_back({"data.seed", [](RunConfig& c, std::string_view k, std::string_view v) {
                   c.data.seed = parse_number<std::uint64_t>(k, v, "an unsigned integer");
                 },
                 [](const RunConfig& c) { return show(c.data.seed); }});
    t.push_back(LGTOK_COUNT("data.frames_min", data.frames_min));
    t.push_back(LGTOK_COUNT("data.frames_max", data.frames_max));
    t.push_back(LGTOK_COUNT("data.d_text", data.d_text));

    t.push_back(LGTOK_COUNT("tok.layers", tok.layers));
    t.push_back(LGTOK_COUNT("tok.heads", tok.heads));
    t.push_back(LGTOK_COUNT("tok.d_model", tok.d_model));
    t.push_back(LGTOK_COUNT("tok.ffn_dim", tok.ffn_dim));
    t.push_back(LGTOK_COUNT("tok.max_frames", tok.max_frames));
    t.push_back(LGTOK_FLOAT("tok.rope_base", tok.rope_base));
    t.push_back(LGTOK_BOOL("tok.rope_in_cross", tok.rope_in_cross));
    t.push_back(LGTOK_FLOAT("tok.text_drop", tok.text_drop));
    t.push_back(LGTOK_ENUM("tok.guidance", tok.guidance, model::parse_guidance_location));
    t.push_back(LGTOK_ENUM("tok.tokenizer_interaction", tok.tokenizer_interaction, model::parse_interaction));
    t.push_back(LGTOK_ENUM("tok.detokenizer_interaction", tok.detokenizer_interaction, model::parse_interaction));
    t.push_back(LGTOK_ENUM("tok.detok_order", tok.detok_order, model::parse_detok_order));
    t.push_back(LGTOK_ENUM("tok.norm", tok.norm, model::parse_norm));
    t.push_back(LGTOK_ENUM("tok.activation", tok.activation, model::parse_activation));
    t.push_back(LGTOK_BOOL("tok.skip", tok.skip));
    t.push_back(LGTOK_BOOL("tok.shared_mask_token", tok.shared_mask_token));
    // The latent token count always equals the schedule's last scale.
    t.push_back({"tok.schedule",
                 [](RunConfig& c, std::string_view, std::string_view v) {
                   c.tok.schedule = quant::ScaleSchedule::parse(v);
                   c.tok.latent_tokens = c.tok.schedule.base();
                 },
                 [](const RunConfig& c) { return c.tok.schedule.to_string(); }});
    t.push_back(LGTOK_COUNT("tok.vocabulary", tok.vocabulary));
    t.push_back(LGTOK_BOOL("tok.shared_codebook", tok.shared_codebook));
    t.push_back(LGTOK_FLOAT("tok.commitment", tok.commitment));
    t.push_back(LGTOK_FLOAT("tok.ema_decay", tok.ema.decay));
    t.push_back(LGTOK_FLOAT("tok.ema_epsilon", tok.ema.epsilon));
    t.push_back({"tok.revival_steps",
                 [](RunConfig& c, std::string_view k, std::string_view v) {
                   c.tok.ema.revival_steps = parse_number<std::uint32_t>(k, v, "an unsigned 32-bit integer");
                 },
                 [](const RunConfig& c) { return show(c.tok.ema.revival_steps); }});
    add_training(t, "train", &RunConfig::tok_train);

    t.push_back(LGTOK_COUNT("sar.layers", sar.layers));
    t.push_back(LGTOK_COUNT("sar.heads", sar.heads));
    t.push_back(LGTOK_COUNT("sar.d_model", sar.d_model));
    t.push_back(LGTOK_COUNT("sar.ffn_dim", sar.ffn_dim));
    t.push_back(LGTOK_ENUM("sar.norm", sar.norm, model::parse_norm));
    t.push_back(LGTOK_ENUM("sar.activation", sar.activation, model::parse_activation));
    t.push_back(LGTOK_FLOAT("sar.temperature", sar.temperature));
    t.push_back(LGTOK_COUNT("sar.top_k", sar.top_k));
    t.push_back(LGTOK_FLOAT("sar.cond_drop", sar.cond_drop));
    add_training(t, "sar_train", &RunConfig::sar_train);

    t.push_back({"gen.g",
                 [](RunConfig& c, std::string_view k, std::string_view v) {
                   const double g = parse_number<double>(k, v, "a number");
                   if (!(std::isfinite(g) && g >= 0.0)) bad_value(k, v, "a finite number >= 0");
                   c.g = g;
                 },
                 [](const RunConfig& c) { return show(c.g); }});
    t.push_back(LGTOK_COUNT("eval.repeats", eval_repeats));
    t.push_back({"eval.split",
                 [](RunConfig& c, std::string_view k, std::string_view v) {
                   if (!corpus::parse_split(v)) bad_value(k, v, "a split (train|val|test|all)");
                   c.eval_split = std::string(v);
                 },
                 [](const RunConfig& c) { return c.eval_split; }});
    t.push_back(LGTOK_PATH("paths.data", data_dir));
    t.push_back(LGTOK_PATH("paths.tokenizer", tokenizer_path));
    t.push_back(LGTOK_PATH("paths.sar", sar_path));
    return t;
  }();
  return table;
}

#undef LGTOK_COUNT
#undef LGTOK_FLOAT
#undef LGTOK_BOOL
#undef LGTOK_PATH
#undef LGTOK_ENUM

const Entry* find(std::string_view key) {
  for (const Entry& e : entries()) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

// Full-size architecture and optimizer shared by mini, mid and full.
RunConfig reference_scale(const quant::ScaleSchedule& schedule) {
  RunConfig c;
  c.data.size = 4096;
  c.data.frames_min = corpus::kMinFrames;
  c.data.frames_max = corpus::kMaxFrames;
  c.tok.layers = 9;
  c.tok.heads = 4;
  c.tok.d_model = 256;
  c.tok.ffn_dim = 1024;
  c.tok.max_frames = corpus::kMaxFrames;
  c.tok.rope_base = 100.0f;
  c.tok.text_drop = 0.10f;
  c.tok.schedule = schedule;
  c.tok.latent_tokens = schedule.base();
  c.tok.vocabulary = 512;
  c.tok_train = {200, 128, 0, 2e-4f, 0.01f};
  c.sar.layers = 9;
  c.sar.heads = 4;
  c.sar.d_model = 256;
  c.sar.ffn_dim = 1024;
  c.sar_train = {200, 128, 0, 2e-4f, 0.01f};
  return c;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"tiny", "mini", "mid", "full"};
  return names;
}

RunConfig RunConfig::from_preset(std::string_view name) {
  RunConfig c;
  if (name == "tiny") {
    c.data.size = 512;
    c.data.frames_min = 40;
    c.data.frames_max = 64;
    c.tok.layers = 2;
    c.tok.heads = 4;
    c.tok.d_model = 32;
    c.tok.ffn_dim = 64;
    c.tok.max_frames = 64;
    c.tok.schedule = {{1, 2, 4, 8}};
    c.tok.latent_tokens = 8;
    c.tok.vocabulary = 64;
    c.tok.text_drop = 0.10f;
    c.tok_train = {60, 8, 0, 2e-3f, 1.0f};
    c.sar.layers = 2;
    c.sar.heads = 4;
    c.sar.d_model = 32;
    c.sar.ffn_dim = 64;
    c.sar_train = {40, 8, 0, 2e-3f, 1.0f};
  } else if (name == "mini") {
    c = reference_scale(quant::mini_schedule());
  } else if (name == "mid") {
    c = reference_scale(quant::mid_schedule());
  } else if (name == "full") {
    c = reference_scale(quant::full_schedule());
  } else {
    fail(ErrorKind::kConfig, "unknown preset '" + std::string(name) + "' (tiny|mini|mid|full)");
  }
  c.preset = std::string(name);
  c.finalize();
  return c;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out{"preset"};
    for (const Entry& e : entries()) out.push_back(e.key);
    return out;
  }();
  return names;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  if (key == "preset") {
    *this = from_preset(value);
    return;
  }
  const Entry* e = find(key);
  if (!e) fail(ErrorKind::kConfig, "unknown config key '" + std::string(key) + "'");
  e->set(*this, key, value);
}

std::string RunConfig::get(std::string_view key) const {
  if (key == "preset") return preset;
  const Entry* e = find(key);
  if (!e) fail(ErrorKind::kConfig, "unknown config key '" + std::string(key) + "'");
  return e->get(*this);
}

void RunConfig::apply_text(std::string_view text, std::string_view origin) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::kConfig, std::string(origin) + ":" + std::to_string(number) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    try {
      set(key, value);
    } catch (const Error& e) {
      fail(e.kind(), std::string(origin) + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_text(text.str(), path.string());
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const std::string& k : keys()) out += k + " = " + get(k) + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const { return corpus::fnv1a64(to_text()); }

void RunConfig::finalize() {
  tok.d_text = data.d_text;
  tok.latent_tokens = tok.schedule.base();
  sar.d_text = data.d_text;
  sar.vocabulary = tok.vocabulary;
  sar.schedule = tok.schedule;
  require(data.size >= 1, ErrorKind::kConfig, "data.size must be positive");
  if (data.frames_min < 2 || data.frames_min > data.frames_max)
    fail(ErrorKind::kConfig, "data frame range [" + std::to_string(data.frames_min) + ", " +
                                 std::to_string(data.frames_max) + "] is empty or below 2");
  if (data.frames_max > tok.max_frames)
    fail(ErrorKind::kConfig, "data.frames_max " + std::to_string(data.frames_max) + " exceeds tok.max_frames " +
                                 std::to_string(tok.max_frames));
  if (tok_train.batch == 0 || sar_train.batch == 0) fail(ErrorKind::kConfig, "batch sizes must be positive");
  if (eval_repeats == 0) fail(ErrorKind::kConfig, "eval.repeats must be positive");
  tok.validate();
  sar.validate();
}

}  // namespace lgtok::pipeline
