#include "checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "lgtok/attention.hpp"
#include "lgtok/guidance.hpp"
#include "lgtok/ops.hpp"
#include "lgtok/quantizer.hpp"

namespace lgtok::checks {

using nn::Tape;
using nn::Tensor;
using nn::Var;
using nn::bitwise_equal;


double normwise_error(const Tensor& analytic, const std::vector<std::pair<std::size_t, double>>& numeric,
                      double floor) {
  double scale = floor, worst = 0.0;
  for (float v : analytic.values()) scale = std::max(scale, static_cast<double>(std::fabs(v)));
  for (const auto& [j, n] : numeric) worst = std::max(worst, std::fabs(analytic[j] - n));
  return worst / scale;
}

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed, float scale) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, scale);
  for (float& v : t.values()) v = n(rng);
  return t;
}

Var probe(Var out, std::uint64_t seed) {
  Tensor w = random_tensor(out.value().shape(), seed);
  return nn::sum(nn::mul(out, out.tape->constant(std::move(w))));
}

void jitter(nn::ParamStore& store, std::uint64_t seed, float sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, sigma);
  for (auto& p : store) {
    for (float& v : p->value.values()) v += n(rng);
  }
}

namespace {

std::vector<std::size_t> pick(std::size_t size, std::size_t samples, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (samples == 0 || samples >= size) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(samples);
  return idx;
}

double max_diff(const Tensor& a, const Tensor& b) { return nn::max_abs_diff(a, b); }

CheckResult verdict(std::string name, double worst, double tol, std::string detail = {}) {
  return {std::move(name), worst <= tol, worst, std::move(detail)};
}

CheckResult exact(std::string name, bool ok, std::string detail = {}) {
  return {std::move(name), ok, ok ? 0.0 : 1.0, std::move(detail)};
}

}  // namespace

double gradcheck_leaves(const LeafLoss& loss, const std::vector<Tensor>& inputs, const GradcheckOptions& o) {
  std::vector<Tensor> analytic;
  {
    Tape tape(true);
    std::vector<Var> leaves;
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
    tape.backward(loss(tape, leaves));
    for (Var v : leaves) analytic.push_back(tape.grad(v));
  }
  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape tape(false);
    std::vector<Var> leaves;
    for (const Tensor& t : xs) leaves.push_back(tape.leaf(t));
    return static_cast<double>(loss(tape, leaves).value()[0]);
  };
  std::mt19937_64 rng(o.seed);
  double worst = 0.0;
  std::vector<Tensor> xs = inputs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<std::pair<std::size_t, double>> numeric;
    for (std::size_t j : pick(xs[i].size(), o.samples, rng)) {
      const float orig = xs[i][j];
      xs[i][j] = orig + static_cast<float>(o.step);
      const double up = evaluate(xs);
      xs[i][j] = orig - static_cast<float>(o.step);
      const double down = evaluate(xs);
      xs[i][j] = orig;
      numeric.emplace_back(j, (up - down) / (2.0 * o.step));
    }
    worst = std::max(worst, normwise_error(analytic[i], numeric, o.floor));
  }
  return worst;
}

double gradcheck_params(nn::ParamStore& store, const GraphLoss& loss, const GradcheckOptions& o) {
  store.zero_grad();
  {
    Tape tape(true);
    const model::Graph g{tape, store};
    tape.backward(loss(g));
  }
  std::vector<Tensor> analytic;
  for (const auto& p : store) analytic.push_back(p->grad);
  store.zero_grad();
  auto evaluate = [&] {
    Tape tape(false);
    const model::Graph g{tape, store};
    return static_cast<double>(loss(g).value()[0]);
  };
  std::mt19937_64 rng(o.seed);
  double worst = 0.0;
  std::size_t pi = 0;
  for (auto& p : store) {
    Tensor& value = p->value;
    std::vector<std::pair<std::size_t, double>> numeric;
    for (std::size_t j : pick(value.size(), o.samples, rng)) {
      const float orig = value[j];
      value[j] = orig + static_cast<float>(o.step);
      const double up = evaluate();
      value[j] = orig - static_cast<float>(o.step);
      const double down = evaluate();
      value[j] = orig;
      numeric.emplace_back(j, (up - down) / (2.0 * o.step));
    }
    worst = std::max(worst, normwise_error(analytic[pi], numeric, o.floor));
    ++pi;
  }
  return worst;
}

model::TokenizerConfig tiny_tokenizer_config() {
  model::TokenizerConfig c;
  c.layers = 2;
  c.heads = 4;
  c.d_model = 32;
  c.ffn_dim = 64;
  c.latent_tokens = 8;
  c.max_frames = 64;
  c.schedule = {{1, 2, 4, 8}};
  c.vocabulary = 64;
  return c;
}

model::SarConfig tiny_sar_config(const model::Tokenizer& tok) {
  model::SarConfig c;
  c.layers = 2;
  c.heads = 4;
  c.d_model = 32;
  c.ffn_dim = 64;
  c.vocabulary = tok.config.vocabulary;
  c.schedule = tok.config.schedule;
  c.d_text = tok.config.d_text;
  c.tokenizer_hash = tok.config.hash();
  return c;
}

// ---------------------------------------------------------------------------
// Invariants

namespace {

// Independent interpolation oracle in double.
std::vector<double> interp_oracle(const std::vector<double>& x, std::size_t to) {
  const std::size_t from = x.size();
  std::vector<double> out(to);
  if (to == 1 && from > 1) {
    out[0] = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(from);
    return out;
  }
  for (std::size_t i = 0; i < to; ++i) {
    const double pos = from == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(from - 1) / static_cast<double>(to - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, from - 1);
    const double w = pos - static_cast<double>(lo);
    out[i] = (1.0 - w) * x[lo] + w * x[hi];
  }
  return out;
}

Tensor column(std::vector<float> v) {
  const std::size_t n = v.size();
  return Tensor({n, 1}, std::move(v));
}

std::vector<CheckResult> interpolation_checks() {
  std::vector<CheckResult> out;
  const Tensor ramp = column({0, 1, 2, 3});
  out.push_back(exact("downsample [0,1,2,3] to 2 is [0,3]", bitwise_equal(quant::downsample(ramp, 2), column({0, 3}))));
  out.push_back(exact("downsample [0,1,2,3] to 1 is [1.5]", bitwise_equal(quant::downsample(ramp, 1), column({1.5f}))));
  out.push_back(exact("upsample [0,3] to 4 is [0,1,2,3]", bitwise_equal(quant::upsample(column({0, 3}), 4), ramp)));
  const Tensor row = random_tensor({1, 6}, 11);
  const Tensor up = quant::upsample(row, 5);
  bool copies = up.rows() == 5;
  for (std::size_t r = 0; copies && r < 5; ++r) copies = std::equal(up.row(r).begin(), up.row(r).end(), row.row(0).begin());
  out.push_back(exact("upsample of one row broadcasts", copies));

  const Tensor z = random_tensor({8, 16}, 12);
  out.push_back(exact("downsample(z, T) = z", bitwise_equal(quant::downsample(z, 8), z)));
  out.push_back(exact("upsample(z, T) = z", bitwise_equal(quant::upsample(z, 8), z)));

  double worst_oracle = 0.0, worst_const = 0.0;
  for (std::size_t s = 1; s <= 8; ++s) {
    const Tensor d = quant::downsample(z, s);
    const Tensor u = quant::upsample(d, 8);
    for (std::size_t c = 0; c < z.cols(); ++c) {
      std::vector<double> col(8), dcol(s);
      for (std::size_t t = 0; t < 8; ++t) col[t] = z.at(t, c);
      for (std::size_t t = 0; t < s; ++t) dcol[t] = d.at(t, c);
      const auto want_d = interp_oracle(col, s);
      const auto want_u = interp_oracle(dcol, 8);
      for (std::size_t t = 0; t < s; ++t) worst_oracle = std::max(worst_oracle, std::fabs(want_d[t] - d.at(t, c)));
      for (std::size_t t = 0; t < 8; ++t) worst_oracle = std::max(worst_oracle, std::fabs(want_u[t] - u.at(t, c)));
    }
    // Constant-in-time rows survive any down/up pair.
    Tensor k({8, 4});
    for (std::size_t t = 0; t < 8; ++t) {
      for (std::size_t c = 0; c < 4; ++c) k.at(t, c) = static_cast<float>(c) - 1.5f;
    }
    worst_const = std::max(worst_const, max_diff(quant::downsample(quant::upsample(quant::downsample(k, s), 8), s),
                                                     quant::downsample(k, s)));
    worst_const = std::max(worst_const, max_diff(quant::upsample(quant::downsample(k, s), 8), k));
  }
  out.push_back(verdict("interpolation matches the double-precision oracle", worst_oracle, 1e-5));
  out.push_back(verdict("down/up identity on constant rows", worst_const, 1e-6));
  return out;
}

CheckResult telescoping_check() {
  const std::size_t t = 8, d = 16;
  const quant::ScaleSchedule sched{{1, 2, 4, 8}};
  const Tensor z = random_tensor({t, d}, 21);
  quant::Quantizer q;
  q.books.push_back(quant::Codebook::random(16, d, 22, 0.5f));
  const quant::MultiscaleResult r = quant::multiscale_quantize(z, sched, q);

  // Recursion rebuilt from the primitive ops.
  Tensor residual = z;
  Tensor partial({t, d});
  double worst = 0.0;
  bool codes_match = true;
  for (std::size_t n = 0; n < sched.count(); ++n) {
    const quant::Assignment a = quant::quantize_nearest(quant::downsample(residual, sched.scales[n]), q.books[0]);
    codes_match = codes_match && a.indices == r.tokens.codes[n];
    const Tensor e = quant::upsample(a.embeddings, t);
    worst = std::max(worst, max_diff(e, r.per_scale[n]));
    for (std::size_t i = 0; i < residual.size(); ++i) {
      residual[i] -= e[i];
      partial[i] += r.per_scale[n][i];
    }
    // z = sum_{m <= n} e_m + r_{n+1}
    for (std::size_t i = 0; i < z.size(); ++i) {
      worst = std::max(worst, std::fabs(static_cast<double>(z[i]) - (static_cast<double>(partial[i]) + residual[i])));
    }
  }
  worst = std::max(worst, max_diff(partial, r.z_hat));
  worst = std::max(worst, max_diff(residual, r.residual));
  CheckResult c = verdict("quantizer telescoping identity at every prefix", worst, 1e-5);
  if (!codes_match) {
    c.passed = false;
    c.detail = "codes differ from the rebuilt recursion";
  }
  return c;
}

CheckResult straight_through_check() {
  const Tensor z = random_tensor({4, 6}, 31), z_hat = random_tensor({4, 6}, 32);
  Tape tape(true);
  Var zv = tape.leaf(z);
  Var st = nn::straight_through(zv, z_hat);
  Var out = nn::scale(st, 1.0f);
  tape.backward(probe(out, 33));
  const Tensor w = random_tensor({4, 6}, 33);
  const bool forward_ok = bitwise_equal(st.value(), z_hat);
  const bool backward_ok = bitwise_equal(tape.grad(zv), w);
  return exact("straight-through: value is z_hat, gradient reaches z unchanged", forward_ok && backward_ok);
}

std::vector<CheckResult> rope_checks() {
  std::vector<CheckResult> out;
  const std::size_t d = 8;
  const Tensor x = random_tensor({21, d}, 41);
  std::vector<int> pos(21);
  std::iota(pos.begin(), pos.end(), 0);
  Tape tape(false);
  const Tensor r = nn::rope(tape.constant(x), pos, 1, 100.0f).value();
  double worst = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double a = 0.0, b = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      a += static_cast<double>(x.at(i, j)) * x.at(i, j);
      b += static_cast<double>(r.at(i, j)) * r.at(i, j);
    }
    worst = std::max(worst, std::fabs(std::sqrt(a) - std::sqrt(b)) / std::sqrt(a));
  }
  out.push_back(verdict("RoPE preserves per-position norms", worst, 1e-5));
  bool zero_identity = std::equal(r.row(0).begin(), r.row(0).end(), x.row(0).begin());
  out.push_back(exact("RoPE at position 0 is the identity", zero_identity));

  // <rope(q, p), rope(k, s)> = <rope(q, p - s), k>
  double rel = 0.0;
  for (int trial = 0; trial < 8; ++trial) {
    const Tensor q = random_tensor({1, d}, 50 + trial), k = random_tensor({1, d}, 60 + trial);
    const int p = 5 + trial, s = 2 + trial / 2;
    const std::vector<int> pp{p}, ps{s}, pd{p - s}, p0{0};
    Tape t(false);
    const Tensor rq = nn::rope(t.constant(q), pp, 1, 100.0f).value();
    const Tensor rk = nn::rope(t.constant(k), ps, 1, 100.0f).value();
    const Tensor rd = nn::rope(t.constant(q), pd, 1, 100.0f).value();
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      lhs += static_cast<double>(rq[j]) * rk[j];
      rhs += static_cast<double>(rd[j]) * k[j];
    }
    rel = std::max(rel, std::fabs(lhs - rhs));
  }
  out.push_back(verdict("RoPE relative-position identity", rel, 1e-5));
  return out;
}

CheckResult rms_norm_check() {
  const Tensor x = random_tensor({3, 8}, 71), gain = random_tensor({8}, 72);
  Tensor ax = x;
  for (float& v : ax.values()) v *= 3.7f;
  Tape t(false);
  const Tensor a = nn::rms_norm(t.constant(x), t.constant(gain)).value();
  const Tensor b = nn::rms_norm(t.constant(ax), t.constant(gain)).value();
  return verdict("RMSNorm scale invariance (alpha = 3.7)", max_diff(a, b), 1e-5);
}

CheckResult attention_mask_check() {
  const std::vector<std::size_t> blocks{2, 3};
  const nn::AttentionMask mask = nn::AttentionMask::scale_causal(blocks);
  const Tensor q = random_tensor({5, 8}, 81), k = random_tensor({5, 8}, 82), v = random_tensor({5, 8}, 83);
  auto run = [&](const Tensor& qq, const Tensor& kk, const Tensor& vv) {
    Tape t(false);
    return nn::attention(t.constant(qq), t.constant(kk), t.constant(vv), 2, mask).value();
  };
  const Tensor base = run(q, k, v);
  Tensor q2 = q, k2 = k, v2 = v;
  for (std::size_t r = 2; r < 5; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      q2.at(r, c) += 3.0f;
      k2.at(r, c) -= 5.0f;
      v2.at(r, c) *= -7.0f;
    }
  }
  const Tensor pert = run(q2, k2, v2);
  const bool same = std::memcmp(base.data(), pert.data(), 2 * 8 * sizeof(float)) == 0;
  bool later_changed = false;
  for (std::size_t i = 16; i < base.size(); ++i) later_changed = later_changed || base[i] != pert[i];
  return exact("scale-causal attention: block 1 bitwise independent of block 2", same && later_changed);
}

model::Tokenizer jittered_tokenizer(model::TokenizerConfig c, std::uint64_t seed) {
  model::Tokenizer tok = model::Tokenizer::init(c, seed);
  jitter(tok.params, seed + 1);
  return tok;
}

CheckResult sar_mask_check() {
  model::Tokenizer tok = model::Tokenizer::init(tiny_tokenizer_config(), 3);
  model::SarModel sar = model::SarModel::init(tiny_sar_config(tok), 4);
  jitter(sar.params, 5);
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> code(0, 63);
  quant::TokenSet tokens;
  tokens.scales = tok.config.schedule.scales;
  for (std::size_t s : tokens.scales) {
    tokens.codes.emplace_back(s);
    for (int& c : tokens.codes.back()) c = code(rng);
  }
  const corpus::TextContext text = corpus::embed_text("a person runs quickly forward");
  const Tensor base = model::sar_logits(sar, tokens, text);
  bool ok = true;
  // Perturbing block n (0-based) may only move rows of blocks > n.
  for (std::size_t n = 0; n < tokens.scales.size(); ++n) {
    quant::TokenSet p = tokens;
    for (std::size_t m = n; m < p.codes.size(); ++m) {
      for (int& c : p.codes[m]) c = (c + 17) % 64;
    }
    const Tensor moved = model::sar_logits(sar, p, text);
    std::size_t rows = 0;
    for (std::size_t m = 0; m <= n; ++m) rows += tokens.scales[m];
    ok = ok && std::memcmp(base.data(), moved.data(), rows * base.cols() * sizeof(float)) == 0;
  }
  return exact("SAR logits of blocks <= n bitwise independent of tokens in blocks >= n", ok);
}

std::vector<CheckResult> guidance_checks(model::Interaction detok) {
  std::vector<CheckResult> out;
  model::TokenizerConfig c = tiny_tokenizer_config();
  c.detokenizer_interaction = detok;
  const model::Tokenizer tok = jittered_tokenizer(c, 91);
  const std::string tag = std::string(" [") + std::string(model::to_string(detok)) + " detokenizer]";
  const Tensor z_hat = random_tensor({8, 32}, 92);
  const corpus::TextContext text = corpus::embed_text("a person jumps slowly leftward");
  const corpus::TextContext none = corpus::TextContext::empty();
  const std::size_t f = 40;

  const Tensor cond = model::detokenize(tok, z_hat, text, f);
  const Tensor uncond = model::detokenize(tok, z_hat, none, f);
  out.push_back(exact("conditional and unconditional decodes differ" + tag, !bitwise_equal(cond, uncond)));

  const Tensor g0 = guidance::guided_decode(tok, z_hat, text, f, 0.0).motion;
  const Tensor g1 = guidance::guided_decode(tok, z_hat, text, f, 1.0).motion;
  const Tensor g2 = guidance::guided_decode(tok, z_hat, text, f, 2.0).motion;
  double affine = 0.0;
  for (std::size_t i = 0; i < g0.size(); ++i) {
    affine = std::max(affine, std::fabs(static_cast<double>(g2[i]) - (2.0 * g1[i] - g0[i])));
  }
  out.push_back(verdict("guidance affinity output(2) = 2 output(1) - output(0)" + tag, affine, 1e-5));
  out.push_back(exact("g = 0 returns the conditional decode" + tag, bitwise_equal(g0, cond)));

  bool empty_ok = true;
  for (double g : {0.0, 0.5, 1.0, 2.0, 3.0}) {
    empty_ok = empty_ok && bitwise_equal(guidance::guided_decode(tok, z_hat, none, f, g).motion, uncond);
  }
  out.push_back(exact("empty text makes guidance a no-op" + tag, empty_ok));

  const std::vector<std::uint8_t> ones(f, 1), zeros(f, 0);
  out.push_back(exact("edit mask all ones equals the conditional decode" + tag,
                      bitwise_equal(guidance::edit_decode(tok, z_hat, text, f, ones), cond)));
  out.push_back(exact("edit mask all zeros equals the unconditional decode" + tag,
                      bitwise_equal(guidance::edit_decode(tok, z_hat, text, f, zeros), uncond)));
  return out;
}

}  // namespace

std::vector<CheckResult> invariant_suite() {
  std::vector<CheckResult> out;
  out.push_back(telescoping_check());
  for (auto& c : interpolation_checks()) out.push_back(std::move(c));
  out.push_back(straight_through_check());
  for (auto& c : rope_checks()) out.push_back(std::move(c));
  out.push_back(rms_norm_check());
  out.push_back(attention_mask_check());
  out.push_back(sar_mask_check());
  for (auto detok : {model::Interaction::kCrossAttention, model::Interaction::kInContext}) {
    for (auto& c : guidance_checks(detok)) out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradients

namespace {

constexpr double kPrimitiveTolerance = 1e-3;

CheckResult leaf_check(std::string name, const LeafLoss& loss, std::vector<Tensor> inputs,
                       GradcheckOptions o = {}) {
  return verdict(std::move(name), gradcheck_leaves(loss, inputs, o), kPrimitiveTolerance);
}

CheckResult param_check(std::string name, nn::ParamStore& store, const GraphLoss& loss, std::vector<Tensor> inputs,
                        GradcheckOptions o = {}) {
  // Inputs become parameters too, so one pass covers both.
  for (std::size_t i = 0; i < inputs.size(); ++i) store.add("input" + std::to_string(i), std::move(inputs[i]));
  return verdict(std::move(name), gradcheck_params(store, loss, o), kPrimitiveTolerance);
}

Tensor positive(std::vector<std::size_t> shape, std::uint64_t seed) {
  Tensor t = random_tensor(std::move(shape), seed);
  for (float& v : t.values()) v = std::fabs(v) + 0.5f;
  return t;
}

std::vector<CheckResult> primitive_checks() {
  std::vector<CheckResult> out;
  auto unary = [&](std::string name, std::function<Var(Var)> f, Tensor x) {
    out.push_back(leaf_check(std::move(name), [f](Tape&, const std::vector<Var>& v) { return probe(f(v[0]), 7); },
                             {std::move(x)}));
  };
  auto binary = [&](std::string name, std::function<Var(Var, Var)> f, Tensor a, Tensor b) {
    out.push_back(leaf_check(std::move(name),
                             [f](Tape&, const std::vector<Var>& v) { return probe(f(v[0], v[1]), 8); },
                             {std::move(a), std::move(b)}));
  };

  binary("matmul", nn::matmul, random_tensor({3, 4}, 1), random_tensor({4, 5}, 2));
  const Tensor m = random_tensor({2, 3}, 3);
  unary("matmul_const", [m](Var x) { return nn::matmul_const(m, x); }, random_tensor({3, 4}, 4));
  binary("linear", [](Var x, Var w) { return nn::linear(x, w); }, random_tensor({3, 4}, 5), random_tensor({4, 2}, 6));
  out.push_back(leaf_check(
      "linear with bias",
      [](Tape&, const std::vector<Var>& v) { return probe(nn::linear(v[0], v[1], v[2]), 9); },
      {random_tensor({3, 4}, 10), random_tensor({4, 2}, 11), random_tensor({2}, 12)}));
  binary("add", nn::add, random_tensor({3, 4}, 13), random_tensor({3, 4}, 14));
  binary("sub", nn::sub, random_tensor({3, 4}, 15), random_tensor({3, 4}, 16));
  binary("mul", nn::mul, random_tensor({3, 4}, 17), random_tensor({3, 4}, 18));
  unary("scale", [](Var x) { return nn::scale(x, -1.7f); }, random_tensor({3, 4}, 19));
  binary("add_row", nn::add_row, random_tensor({3, 4}, 20), random_tensor({1, 4}, 21));
  out.push_back(leaf_check(
      "concat_rows",
      [](Tape&, const std::vector<Var>& v) { return probe(nn::concat_rows({v[0], v[1], v[2]}), 22); },
      {random_tensor({1, 3}, 23), random_tensor({2, 3}, 24), random_tensor({3, 3}, 25)}));
  binary("concat_cols", nn::concat_cols, random_tensor({3, 2}, 26), random_tensor({3, 4}, 27));
  unary("slice_rows", [](Var x) { return nn::slice_rows(x, 1, 2); }, random_tensor({4, 3}, 28));
  const std::vector<int> idx{2, 0, 2, 1};
  unary("gather_rows", [idx](Var t) { return nn::gather_rows(t, idx); }, random_tensor({3, 4}, 29));
  unary("repeat_row", [](Var r) { return nn::repeat_row(r, 3); }, random_tensor({1, 4}, 30));
  unary("mean_rows", nn::mean_rows, random_tensor({4, 3}, 31));
  binary("rms_norm", [](Var x, Var g) { return nn::rms_norm(x, g); }, random_tensor({3, 4}, 32),
         random_tensor({4}, 33));
  out.push_back(leaf_check(
      "layer_norm", [](Tape&, const std::vector<Var>& v) { return probe(nn::layer_norm(v[0], v[1], v[2]), 34); },
      {random_tensor({3, 5}, 35), random_tensor({5}, 36), random_tensor({5}, 37)}));
  unary("silu", nn::silu, random_tensor({3, 4}, 38, 2.0f));
  unary("gelu", nn::gelu, random_tensor({3, 4}, 39, 2.0f));
  {
    // Quantization treated as identity: the reference function is z + (z_hat - z0).
    const Tensor z0 = random_tensor({3, 4}, 41), z_hat = random_tensor({3, 4}, 40);
    Tensor offset = z_hat;
    for (std::size_t i = 0; i < offset.size(); ++i) offset[i] -= z0[i];
    out.push_back(leaf_check("straight_through (identity surrogate)",
                             [z_hat, offset](Tape& t, const std::vector<Var>& v) {
                               Var q = t.recording() ? nn::straight_through(v[0], z_hat)
                                                     : nn::add(v[0], t.constant(offset));
                               return probe(nn::mul(q, q), 7);
                             },
                             {z0}));
  }
  // Targets placed so that both Huber branches are exercised.
  Tensor target = random_tensor({4, 4}, 42, 2.0f);
  unary("smooth_l1", [target](Var p) { return nn::smooth_l1(p, target); }, random_tensor({4, 4}, 43));
  unary("mse", [target](Var p) { return nn::mse(p, target); }, random_tensor({4, 4}, 44));
  const std::vector<int> labels{1, 0, 3};
  unary("cross_entropy", [labels](Var l) { return nn::cross_entropy(l, labels); }, random_tensor({3, 4}, 45));
  unary("sum", [](Var x) { return nn::scale(nn::sum(x), 0.5f); }, random_tensor({2, 3}, 46));

  const std::vector<int> pos{0, 3, 1, 7, 2};
  unary("rope", [pos](Var x) { return nn::rope(x, pos, 2, 100.0f); }, random_tensor({5, 8}, 47));

  auto attention_case = [&](std::string name, nn::AttentionMask mask, std::size_t nq, std::size_t nk) {
    out.push_back(leaf_check(
        "attention (" + name + ")",
        [mask](Tape&, const std::vector<Var>& v) { return probe(nn::attention(v[0], v[1], v[2], 2, mask), 48); },
        {random_tensor({nq, 8}, 49), random_tensor({nk, 8}, 50), random_tensor({nk, 8}, 51)}));
  };
  attention_case("no mask", nn::AttentionMask::none(), 4, 6);
  const std::vector<std::size_t> blocks{1, 2, 3};
  attention_case("scale-causal", nn::AttentionMask::scale_causal(blocks), 6, 6);
  attention_case("frame-edit", nn::AttentionMask::frame_edit({1, 0, 1, 0}, 1), 4, 5);
  std::vector<std::uint8_t> allowed{1, 0, 1, 1, 0, 1, 1, 1, 1, 0, 0, 1};
  attention_case("explicit", nn::AttentionMask::explicit_mask(4, 3, allowed), 4, 3);

  std::mt19937_64 rng(52);
  for (auto act : {model::Activation::kSwiGlu, model::Activation::kGelu}) {
    nn::ParamStore s;
    model::add_ffn(s, "f", 4, 6, act, rng);
    out.push_back(param_check(std::string("ffn ") + std::string(model::to_string(act)), s,
                              [act](const model::Graph& g) {
                                return probe(model::ffn(g, "f", g.param("input0"), act), 53);
                              },
                              {random_tensor({3, 4}, 54)}));
  }
  {
    nn::ParamStore s;
    model::add_skip(s, "k", 4);
    jitter(s, 55, 0.3f);
    out.push_back(param_check("long skip fuse", s,
                              [](const model::Graph& g) {
                                return probe(model::skip_fuse(g, "k", g.param("input0"), g.param("input1")), 56);
                              },
                              {random_tensor({3, 4}, 57), random_tensor({3, 4}, 58)}));
  }
  {
    nn::ParamStore s;
    model::add_attention(s, "a", 8, 6, rng);
    const std::vector<int> qp{0, 1, 2}, kp{0, 1, 2, 3};
    out.push_back(param_check("attention sublayer with RoPE", s,
                              [qp, kp](const model::Graph& g) {
                                return probe(model::attend(g, "a", g.param("input0"), g.param("input1"), 2,
                                                           nn::AttentionMask::none(),
                                                           model::RopeSpec{qp, kp, 100.0f}),
                                             59);
                              },
                              {random_tensor({3, 8}, 60), random_tensor({4, 6}, 61)}));
  }
  return out;
}

}  // namespace

CheckResult full_graph_gradcheck() {
  const model::TokenizerConfig c = tiny_tokenizer_config();
  model::Tokenizer tok = jittered_tokenizer(c, 101);
  corpus::CorpusConfig cc;
  cc.size = 4;
  cc.seed = 5;
  cc.frames_min = 40;
  cc.frames_max = 44;
  const corpus::Corpus data = corpus::make_corpus(cc);
  const std::vector<const corpus::Record*> batch{&data.records[0], &data.records[1]};

  // The codebook and the assignments are frozen at the base point; the
  // numeric side replaces quantization by the constant offset z_hat - z,
  // which is the function whose derivative straight-through reports.
  std::vector<Tensor> z_hat, offset;
  for (const corpus::Record* r : batch) {
    const Tensor z = model::tokenize(tok, r->features, r->text);
    z_hat.push_back(quant::multiscale_quantize(z, c.schedule, tok.quantizer).z_hat);
    Tensor o = z_hat.back();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= z[i];
    offset.push_back(std::move(o));
  }
  const GraphLoss loss = [&](const model::Graph& g) {
    std::vector<Var> parts;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const corpus::Record& r = *batch[b];
      Var z = model::tokenize(g, c, r.features, r.text);
      Var zq = g.tape.recording() ? nn::straight_through(z, z_hat[b]) : nn::add(z, g.tape.constant(offset[b]));
      Var m_hat = model::detokenize(g, c, zq, r.text, r.features.rows());
      parts.push_back(model::reconstruction_loss(m_hat, r.features, z, z_hat[b], c.commitment).total);
    }
    return nn::scale(nn::add(parts[0], parts[1]), 0.5f);
  };
  GradcheckOptions o;
  o.step = 5e-3;
  o.samples = 10;
  o.seed = 102;
  const double worst = gradcheck_params(tok.params, loss, o);
  return verdict("full tokenize-quantize-detokenize-loss graph (" + std::to_string(tok.params.size()) +
                     " parameters, 10 coordinates each)",
                 worst, 1e-2);
}

std::vector<CheckResult> gradient_suite() {
  std::vector<CheckResult> out = primitive_checks();
  out.push_back(full_graph_gradcheck());
  return out;
}

}  // namespace lgtok::checks
