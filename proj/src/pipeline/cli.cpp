#include "lgtok/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lgtok/checkpoint.hpp"
#include "lgtok/evaluate.hpp"
#include "lgtok/guidance.hpp"
#include "lgtok/run_config.hpp"
#include "lgtok/stages.hpp"

namespace lgtok::cli {

namespace fs = std::filesystem;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
    case ErrorKind::kSpec:
      return 2;
    case ErrorKind::kConfig:
    case ErrorKind::kShape:
    case ErrorKind::kBounds:
      return 3;
    case ErrorKind::kIo:
    case ErrorKind::kFormat:
    case ErrorKind::kVersion:
    case ErrorKind::kTruncated:
    case ErrorKind::kCountMismatch:
    case ErrorKind::kData:
    case ErrorKind::kSampleSize:
      return 4;
    case ErrorKind::kNumeric:
      return 5;
  }
  return 1;
}

namespace {

struct Globals {
  std::string config_path;
  std::string preset = "tiny";
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> sets;
  bool deterministic = false;
  bool force = false;
};

struct Run {
  std::string command;
  pipeline::RunConfig cfg;
  fs::path out;
  bool deterministic = false;
  std::string started;
  std::ostream& log;
  nlohmann::json extra = nlohmann::json::object();
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Deterministic runs pin the timestamps so that run.json is reproducible too.
std::string stamp(bool deterministic) { return deterministic ? "1970-01-01T00:00:00Z" : utc_now(); }

void prepare_out(const fs::path& out, bool force) {
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) fail(ErrorKind::kIo, out.string() + " exists and is not a directory");
    if (!fs::is_empty(out) && !force)
      fail(ErrorKind::kUsage, "output directory " + out.string() + " is not empty; pass --force to overwrite");
  }
  fs::create_directories(out);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::kIo, "cannot write " + path.string());
  f << text;
  if (!f) fail(ErrorKind::kIo, "write failed for " + path.string());
}

std::vector<std::string> list_artifacts(const fs::path& out) {
  std::vector<std::string> names;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), out).generic_string();
    if (rel != "run.json") names.push_back(rel);
  }
  std::sort(names.begin(), names.end());
  return names;
}

void finish(const Run& run) {
  nlohmann::json j = {{"command", run.command},
                      {"config_hash", nn::hex64(run.cfg.hash())},
                      {"preset", run.cfg.preset},
                      {"seed", run.cfg.seed},
                      {"deterministic", run.deterministic},
                      {"started", run.started},
                      {"finished", stamp(run.deterministic)},
                      {"artifacts", list_artifacts(run.out)},
                      {"version", kVersion}};
  for (const auto& [k, v] : run.extra.items()) j[k] = v;
  write_text(run.out / "run.json", j.dump(2) + "\n");
}

corpus::Corpus load_data(const pipeline::RunConfig& cfg) { return corpus::load_corpus(cfg.data_dir); }

std::vector<const corpus::Record*> eval_records(const pipeline::RunConfig& cfg, const corpus::Corpus& data) {
  return data.split(*corpus::parse_split(cfg.eval_split));
}

model::Tokenizer load_tok(const pipeline::RunConfig& cfg, const corpus::Corpus& data, Run& run) {
  model::Tokenizer tok = model::load_tokenizer(cfg.tokenizer_path);
  pipeline::check_corpus(tok, data);
  run.extra["tokenizer_hash"] = nn::hex64(tok.config.hash());
  return tok;
}

model::SarModel load_sar_for(const pipeline::RunConfig& cfg, const model::Tokenizer& tok, Run& run) {
  model::SarModel sar = model::load_sar(cfg.sar_path);
  if (sar.config.tokenizer_hash != tok.config.hash())
    fail(ErrorKind::kConfig, "SAR checkpoint " + cfg.sar_path.string() + " belongs to tokenizer " +
                                 nn::hex64(sar.config.tokenizer_hash) + ", not " + nn::hex64(tok.config.hash()));
  run.extra["sar_hash"] = nn::hex64(sar.config.hash());
  return sar;
}

std::vector<double> parse_scales(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      fail(ErrorKind::kUsage, "guidance scale '" + item + "' is not a number");
    }
    if (used != item.size() || !std::isfinite(v) || v < 0.0)
      fail(ErrorKind::kUsage, "guidance scale '" + item + "' must be a finite number >= 0");
    out.push_back(v);
  }
  if (out.empty()) fail(ErrorKind::kUsage, "empty guidance scale list");
  return out;
}

void cmd_gen_data(Run& run) {
  const corpus::CorpusManifest m = corpus::build_corpus(run.cfg.data, run.out);
  run.log << "wrote " << m.count << " records (train " << m.splits.train << ", val " << m.splits.val << ", test "
          << m.splits.test << ") to " << run.out.string() << '\n';
}

void cmd_train_tok(Run& run) {
  const corpus::Corpus data = load_data(run.cfg);
  model::Tokenizer tok = model::Tokenizer::init(run.cfg.tok, run.cfg.seed);
  pipeline::check_corpus(tok, data);
  model::TrainOptions opt;
  opt.epochs = run.cfg.tok_train.epochs;
  opt.batch = run.cfg.tok_train.batch;
  opt.max_steps = run.cfg.tok_train.max_steps;
  opt.lr = run.cfg.tok_train.lr;
  opt.clip = run.cfg.tok_train.clip;
  opt.seed = run.cfg.seed;
  opt.out_dir = run.out;
  opt.log = [&](const std::string& line) { run.log << line << '\n'; };
  const model::TrainResult r = model::train_tokenizer(tok, data, opt);
  run.extra["tokenizer_hash"] = nn::hex64(tok.config.hash());
  run.extra["steps"] = r.steps;
  run.extra["final_train_loss"] = r.final_train_loss;
  run.extra["best_val_loss"] = r.best_val_loss;
}

void cmd_train_sar(Run& run) {
  const corpus::Corpus data = load_data(run.cfg);
  const model::Tokenizer tok = load_tok(run.cfg, data, run);
  const model::TokenizedSplit train = pipeline::tokenize_records(tok, data.split(corpus::Split::kTrain));
  const model::TokenizedSplit val = pipeline::tokenize_records(tok, data.split(corpus::Split::kVal));
  quant::write_token_sets(run.out / "tokens_train.bin", tok.config.schedule, train.tokens);
  quant::write_token_sets(run.out / "tokens_val.bin", tok.config.schedule, val.tokens);
  model::SarModel sar = model::SarModel::init(pipeline::sar_config_for(tok, run.cfg.sar), run.cfg.seed);
  model::SarTrainOptions opt;
  opt.epochs = run.cfg.sar_train.epochs;
  opt.batch = run.cfg.sar_train.batch;
  opt.max_steps = run.cfg.sar_train.max_steps;
  opt.lr = run.cfg.sar_train.lr;
  opt.clip = run.cfg.sar_train.clip;
  opt.seed = run.cfg.seed;
  opt.out_dir = run.out;
  opt.log = [&](const std::string& line) { run.log << line << '\n'; };
  const model::SarTrainResult r = model::train_sar(sar, train, val, tok.config.hash(), opt);
  run.extra["sar_hash"] = nn::hex64(sar.config.hash());
  run.extra["steps"] = r.steps;
  run.extra["final_train_perplexity"] = r.final_train_perplexity;
  run.extra["final_val_perplexity"] = r.final_val_perplexity;
}

void cmd_reconstruct(Run& run, double g) {
  const corpus::Corpus data = load_data(run.cfg);
  const model::Tokenizer tok = load_tok(run.cfg, data, run);
  const auto records = eval_records(run.cfg, data);
  std::vector<nn::Tensor> raw;
  std::vector<quant::TokenSet> tokens;
  std::vector<std::string> warnings;
  for (const corpus::Record* r : records) {
    const model::Reconstruction rec = model::reconstruct(tok, r->features, r->text);
    guidance::GuidedDecode d = guidance::guided_decode(tok, rec.z_hat, r->text, r->features.rows(), g);
    for (auto& w : d.warnings) warnings.push_back(std::move(w));
    raw.push_back(data.manifest.normalization.denormalize(d.motion));
    tokens.push_back(rec.tokens);
  }
  corpus::write_motions(run.out / "recon.bin", raw);
  quant::write_token_sets(run.out / "tokens.bin", tok.config.schedule, tokens);
  eval::EvalOptions opt;
  opt.g = g;
  opt.seed = run.cfg.seed;
  opt.repeats = 1;
  const eval::MetricReport report =
      eval::evaluate_pipeline(tok, nullptr, records, data.manifest.normalization, opt);
  nlohmann::json j = report.to_json();
  j["split"] = run.cfg.eval_split;
  j["recon_smooth_l1_caption_ablated"] = model::reconstruction_error(tok, records, true);
  write_text(run.out / "recon.json", j.dump(2) + "\n");
  for (const auto& w : warnings) run.log << "warning: " << w << '\n';
  run.log << "recon smooth-L1 " << report.recon_smooth_l1.mean << " over " << records.size() << " records\n";
}

struct GenerateArgs {
  std::string text;
  std::optional<std::string> edit_mask;
  std::size_t frames = 0;
};

void cmd_generate(Run& run, const GenerateArgs& args) {
  const corpus::Corpus data = load_data(run.cfg);
  const model::Tokenizer tok = load_tok(run.cfg, data, run);
  const model::SarModel sar = load_sar_for(run.cfg, tok, run);
  const std::size_t frames = args.frames ? args.frames : run.cfg.data.frames_max;
  if (frames < 2 || frames > tok.config.max_frames)
    fail(ErrorKind::kConfig, "--frames must lie in [2, " + std::to_string(tok.config.max_frames) + "]");
  const corpus::TextContext text = corpus::embed_text(args.text, tok.config.d_text);

  model::SampleOptions sampling;
  sampling.temperature = sar.config.temperature;
  sampling.top_k = sar.config.resolved_top_k();
  sampling.seed = run.cfg.seed;
  const quant::TokenSet tokens = model::sar_generate(sar, text, sampling);
  const nn::Tensor z_hat = quant::dequantize(tokens, tok.quantizer, tok.config.latent_tokens);

  nn::Tensor motion;
  std::vector<std::string> warnings;
  if (args.edit_mask) {
    const std::vector<std::uint8_t> mask = guidance::parse_edit_mask(*args.edit_mask, frames);
    motion = guidance::edit_decode(tok, z_hat, text, frames, mask);
    if (run.cfg.g > 0.0) {
      motion = guidance::combine(motion, model::detokenize(tok, z_hat, corpus::TextContext::empty(), frames),
                                 run.cfg.g);
    }
  } else {
    guidance::GuidedDecode d = guidance::guided_decode(tok, z_hat, text, frames, run.cfg.g);
    motion = std::move(d.motion);
    warnings = std::move(d.warnings);
  }
  corpus::write_motions(run.out / "motion.bin", {data.manifest.normalization.denormalize(motion)});
  quant::write_token_sets(run.out / "tokens.bin", tok.config.schedule, {tokens});
  for (const auto& w : warnings) run.log << "warning: " << w << '\n';
  run.extra["text"] = args.text;
  run.extra["g"] = run.cfg.g;
  run.extra["frames"] = frames;
  run.extra["edit_mask"] = args.edit_mask ? nlohmann::json(*args.edit_mask) : nlohmann::json(nullptr);
  run.extra["warnings"] = warnings;
  run.log << "generated " << frames << " frames\n";
}

struct EvalArgs {
  std::string mode = "generation";
  std::optional<std::size_t> repeats;
  std::string scales;
};

eval::EvalOptions eval_options(const pipeline::RunConfig& cfg, const EvalArgs& args) {
  eval::EvalOptions opt;
  opt.g = cfg.g;
  opt.seed = cfg.seed;
  opt.repeats = args.repeats.value_or(cfg.eval_repeats);
  if (opt.repeats == 0) fail(ErrorKind::kUsage, "--repeats must be positive");
  return opt;
}

void cmd_eval(Run& run, const EvalArgs& args) {
  const corpus::Corpus data = load_data(run.cfg);
  const model::Tokenizer tok = load_tok(run.cfg, data, run);
  std::optional<model::SarModel> sar;
  if (args.mode == "generation") sar = load_sar_for(run.cfg, tok, run);
  const eval::EvalOptions opt = eval_options(run.cfg, args);
  const eval::MetricReport report = eval::evaluate_pipeline(tok, sar ? &*sar : nullptr, eval_records(run.cfg, data),
                                                            data.manifest.normalization, opt);
  write_text(run.out / "report.csv", report.to_csv());
  nlohmann::json j = report.to_json();
  j["split"] = run.cfg.eval_split;
  write_text(run.out / "report.json", j.dump(2) + "\n");
  for (const auto& w : report.warnings) run.log << "warning: " << w << '\n';
  run.log << report.to_csv();
}

void cmd_sweep(Run& run, const EvalArgs& args) {
  const corpus::Corpus data = load_data(run.cfg);
  const model::Tokenizer tok = load_tok(run.cfg, data, run);
  std::optional<model::SarModel> sar;
  if (args.mode == "generation") sar = load_sar_for(run.cfg, tok, run);
  const std::vector<double> scales =
      args.scales.empty() ? guidance::default_guidance_scales() : parse_scales(args.scales);
  const auto rows = eval::sweep_guidance(tok, sar ? &*sar : nullptr, eval_records(run.cfg, data),
                                         data.manifest.normalization, scales, eval_options(run.cfg, args));
  const std::string csv = eval::sweep_csv(rows);
  write_text(run.out / "sweep.csv", csv);
  run.log << csv;
}

void cmd_stats(Run& run) {
  const corpus::Corpus data = load_data(run.cfg);
  const model::Tokenizer tok = load_tok(run.cfg, data, run);
  const auto records = eval_records(run.cfg, data);
  quant::Quantizer q = tok.quantizer;
  for (auto& b : q.books) b.reset_usage();
  const model::TokenizedSplit split = pipeline::tokenize_records(tok, records);
  for (const quant::TokenSet& t : split.tokens) {
    for (std::size_t n = 0; n < t.codes.size(); ++n) q.books[q.shared() ? 0 : n].record_usage(t.codes[n], n);
  }
  write_text(run.out / "usage.csv", quant::usage_csv(q));
  nlohmann::json entropy = nlohmann::json::array();
  for (std::size_t n = 0; n < tok.config.schedule.count(); ++n) {
    const quant::Codebook& b = q.books[q.shared() ? 0 : n];
    entropy.push_back(quant::usage_stats(b.scale_usage.size() > n ? b.scale_usage[n]
                                                                  : std::vector<std::uint64_t>(b.size(), 0))
                          .entropy);
  }
  run.extra["codebook_entropy"] = entropy;
  run.log << "usage over " << records.size() << " records written to usage.csv\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Language-guided motion tokenizer and scale-wise autoregressive generator", "lgtok"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));

  Globals gl;
  app.add_option("--config", gl.config_path, "key=value config file");
  app.add_option("--preset", gl.preset, "tiny|mini|mid|full (applied before --config)");
  app.add_option("--seed", gl.seed, "run seed (init, batching, sampling)");
  app.add_option("--out", gl.out_dir, "output directory (default out/<command>)");
  app.add_option("--set", gl.sets, "key=value override, repeatable");
  app.add_flag("--deterministic", gl.deterministic, "pin run.json timestamps for byte-identical artifacts");
  app.add_flag("--force", gl.force, "allow writing into a non-empty --out");

  std::optional<std::string> g_flag;
  auto add_g = [&](CLI::App* sub) { sub->add_option("--g", g_flag, "guidance scale >= 0 (default gen.g)"); };

  std::vector<std::pair<CLI::App*, std::function<void(Run&)>>> commands;
  commands.emplace_back(app.add_subcommand("gen-data", "generate the procedural corpus"), cmd_gen_data);
  commands.emplace_back(app.add_subcommand("train-tok", "train the tokenizer"), cmd_train_tok);
  commands.emplace_back(app.add_subcommand("train-sar", "tokenize the corpus and train the SAR model"),
                        cmd_train_sar);

  auto* recon = app.add_subcommand("reconstruct", "tokenize, quantize and decode a split");
  std::optional<std::string> recon_g;
  recon->add_option("--g", recon_g, "guidance scale for the decode (default 0)");
  commands.emplace_back(recon, [&](Run& r) {
    double g = 0.0;
    if (recon_g) {
      r.cfg.set("gen.g", *recon_g);
      g = r.cfg.g;
    }
    cmd_reconstruct(r, g);
  });

  GenerateArgs gen_args;
  auto* gen = app.add_subcommand("generate", "sample tokens for a caption and decode them");
  gen->add_option("--text", gen_args.text, "caption; empty for unconditional")->required();
  gen->add_option("--edit-mask", gen_args.edit_mask, "all | none | a:b[,c:d...] frames that follow the text");
  gen->add_option("--frames", gen_args.frames, "frame count (default data.frames_max)");
  add_g(gen);
  commands.emplace_back(gen, [&](Run& r) { cmd_generate(r, gen_args); });

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "repeated evaluation with 95% intervals");
  ev->add_option("--repeats", eval_args.repeats, "repeat count (default eval.repeats = 20)");
  ev->add_option("--mode", eval_args.mode, "generation | reconstruction")
      ->check(CLI::IsMember({"generation", "reconstruction"}));
  add_g(ev);
  commands.emplace_back(ev, [&](Run& r) { cmd_eval(r, eval_args); });

  auto* sweep = app.add_subcommand("sweep-g", "evaluate across guidance scales");
  sweep->add_option("--scales", eval_args.scales, "comma-separated g values (default 0,0.5,1,2,3)");
  sweep->add_option("--repeats", eval_args.repeats, "repeat count per scale");
  sweep->add_option("--mode", eval_args.mode, "generation | reconstruction")
      ->check(CLI::IsMember({"generation", "reconstruction"}));
  commands.emplace_back(sweep, [&](Run& r) { cmd_sweep(r, eval_args); });

  commands.emplace_back(app.add_subcommand("stats", "per-scale codebook usage of a split"), cmd_stats);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    for (auto& [sub, handler] : commands) {
      if (!sub->parsed()) continue;
      Run run{sub->get_name(), pipeline::RunConfig::from_preset(gl.preset), {}, gl.deterministic, {}, out};
      run.started = stamp(gl.deterministic);
      if (!gl.config_path.empty()) run.cfg.apply_file(gl.config_path);
      for (const std::string& s : gl.sets) run.cfg.apply_text(s, "--set");
      if (gl.seed) run.cfg.seed = *gl.seed;
      if (g_flag) run.cfg.set("gen.g", *g_flag);
      run.cfg.finalize();
      run.out = gl.out_dir.empty() ? fs::path("out") / run.command : fs::path(gl.out_dir);
      prepare_out(run.out, gl.force);
      write_text(run.out / "config.txt", run.cfg.to_text());
      handler(run);
      finish(run);
      return 0;
    }
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << to_string(ErrorKind::kIo) << ": " << e.what() << '\n';
    return exit_code(ErrorKind::kIo);
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return 1;
  }
  err << "error: usage: no command given\n";
  return 2;
}

}  // namespace lgtok::cli
