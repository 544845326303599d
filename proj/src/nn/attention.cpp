#include "lgtok/attention.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lgtok/error.hpp"
#include "lgtok/kernels.hpp"

namespace lgtok::nn {

AttentionMask AttentionMask::scale_causal(std::span<const std::size_t> block_sizes) {
  AttentionMask m;
  m.kind_ = Kind::kScaleCausal;
  std::size_t start = 0;
  for (std::size_t s : block_sizes) {
    require(s > 0, ErrorKind::kConfig, "scale-causal mask: empty block");
    m.blocks_.emplace_back(start, start + s);
    start += s;
  }
  return m;
}

AttentionMask AttentionMask::frame_edit(std::vector<std::uint8_t> flags, std::size_t null_keys) {
  AttentionMask m;
  m.kind_ = Kind::kFrameEdit;
  m.flags_ = std::move(flags);
  m.null_keys_ = null_keys;
  return m;
}

AttentionMask AttentionMask::explicit_mask(std::size_t queries, std::size_t keys,
                                           std::vector<std::uint8_t> allowed) {
  require(allowed.size() == queries * keys, ErrorKind::kShape, "explicit mask size does not match queries x keys");
  AttentionMask m;
  m.kind_ = Kind::kExplicit;
  m.explicit_queries_ = queries;
  m.explicit_keys_ = keys;
  m.allowed_ = std::move(allowed);
  return m;
}

std::vector<std::size_t> AttentionMask::key_limits(std::size_t queries, std::size_t keys) const {
  std::vector<std::size_t> limits(queries, keys);
  switch (kind_) {
    case Kind::kNone:
      break;
    case Kind::kScaleCausal: {
      const std::size_t covered = blocks_.empty() ? 0 : blocks_.back().second;
      if (!(covered == queries && covered == keys))
        fail(ErrorKind::kConfig, "scale-causal mask covers " + std::to_string(covered) + " positions, sequence has " +
                                     std::to_string(queries) + " queries / " + std::to_string(keys) + " keys");
      for (const auto& [b, e] : blocks_) {
        for (std::size_t i = b; i < e; ++i) limits[i] = e;
      }
      break;
    }
    case Kind::kFrameEdit:
      if (flags_.size() != queries)
        fail(ErrorKind::kShape, "frame-edit mask has " + std::to_string(flags_.size()) + " flags for " +
                                    std::to_string(queries) + " queries");
      require(null_keys_ <= keys, ErrorKind::kConfig, "frame-edit mask: more null keys than keys");
      for (std::size_t i = 0; i < queries; ++i) limits[i] = flags_[i] ? keys : null_keys_;
      break;
    case Kind::kExplicit:
      if (!(explicit_queries_ == queries && explicit_keys_ == keys))
        fail(ErrorKind::kShape, "explicit mask is " + std::to_string(explicit_queries_) + "x" +
                                    std::to_string(explicit_keys_) + ", attention is " + std::to_string(queries) + "x" +
                                    std::to_string(keys));
      for (std::size_t i = 0; i < queries; ++i) {
        std::size_t last = 0;
        for (std::size_t j = 0; j < keys; ++j) {
          if (allowed_[i * keys + j]) last = j + 1;
        }
        limits[i] = last;
      }
      break;
  }
  for (std::size_t i = 0; i < queries; ++i) {
    if (!(limits[i] > 0)) fail(ErrorKind::kConfig, "attention query " + std::to_string(i) + " has no permitted keys");
  }
  return limits;
}

Var attention(Var q, Var k, Var v, std::size_t heads, const AttentionMask& mask, AttentionTrace* trace) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const std::size_t nq = qv.rows(), nk = kv.rows(), dm = qv.cols();
  if (!(heads > 0 && dm % heads == 0))
    fail(ErrorKind::kConfig,
         "attention: " + std::to_string(heads) + " heads do not divide model dim " + std::to_string(dm));
  if (!(kv.cols() == dm && vv.cols() == dm && vv.rows() == nk))
    fail(ErrorKind::kShape,
         "attention: q " + qv.shape_string() + " k " + kv.shape_string() + " v " + vv.shape_string());
  require(nq > 0 && nk > 0, ErrorKind::kShape, "attention: empty query or key set");
  const std::vector<std::size_t> limits = mask.key_limits(nq, nk);
  const std::size_t dh = dm / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const auto& K = kernels::active();

  // probs[h] is [nq, nk]; entries past a row's limit stay exactly zero.
  std::vector<Tensor> probs(heads, Tensor::matrix(nq, nk));
  Tensor out = Tensor::matrix(nq, dm);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor& p = probs[h];
    K.gemm_nt(nq, nk, dh, qv.data() + h * dh, dm, kv.data() + h * dh, dm, p.data(), nk, false);
    for (std::size_t i = 0; i < nq; ++i) {
      float* row = p.data() + i * nk;
      const std::size_t lim = limits[i];
      float mx = -INFINITY;
      for (std::size_t j = 0; j < lim; ++j) {
        if (!mask.visible(i, j, nk)) continue;
        row[j] *= scale;
        mx = std::max(mx, row[j]);
      }
      float z = 0.0f;
      for (std::size_t j = 0; j < lim; ++j) {
        if (!mask.visible(i, j, nk)) {
          row[j] = 0.0f;
          continue;
        }
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      const float inv = 1.0f / z;
      for (std::size_t j = 0; j < lim; ++j) row[j] *= inv;
      std::fill(row + lim, row + nk, 0.0f);
    }
    K.gemm_nn(nq, dh, nk, p.data(), nk, vv.data() + h * dh, dm, out.data() + h * dh, dm, false);
  }
  if (trace != nullptr) trace->weights = probs;

  return q.tape->push(std::move(out), {q, k, v},
                      [qi = q.id, ki = k.id, vi = v.id, heads, scale,
                       probs = std::move(probs)](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& qv = t.value(qi);
    const Tensor& kv = t.value(ki);
    const Tensor& vv = t.value(vi);
    const std::size_t nq = qv.rows(), nk = kv.rows(), dm = qv.cols(), dh = dm / heads;
    const auto& K = kernels::active();
    const bool want_q = t.needs_grad(qi), want_k = t.needs_grad(ki), want_v = t.needs_grad(vi);
    Tensor dp = Tensor::matrix(nq, nk);
    for (std::size_t h = 0; h < heads; ++h) {
      const Tensor& p = probs[h];
      const float* go = g.data() + h * dh;
      if (want_v) K.gemm_tn(nk, dh, nq, p.data(), nk, go, dm, t.grad(vi).data() + h * dh, dm, true);
      if (!want_q && !want_k) continue;
      K.gemm_nt(nq, nk, dh, go, dm, vv.data() + h * dh, dm, dp.data(), nk, false);
      for (std::size_t i = 0; i < nq; ++i) {
        const float* pr = p.data() + i * nk;
        float* dr = dp.data() + i * nk;
        const float s = K.dot(pr, dr, nk);
        for (std::size_t j = 0; j < nk; ++j) dr[j] = pr[j] * (dr[j] - s) * scale;
      }
      if (want_q) K.gemm_nn(nq, dh, nk, dp.data(), nk, kv.data() + h * dh, dm, t.grad(qi).data() + h * dh, dm, true);
      if (want_k) K.gemm_tn(nk, dh, nq, dp.data(), nk, qv.data() + h * dh, dm, t.grad(ki).data() + h * dh, dm, true);
    }
  });
}

namespace {

void rotate(const float* in, float* out, std::span<const int> positions, std::size_t rows, std::size_t dm,
            std::size_t heads, float base, bool inverse) {
  const std::size_t dh = dm / heads;
  const std::size_t pairs = dh / 2;
  std::vector<double> freq(pairs);
  for (std::size_t k = 0; k < pairs; ++k) {
    freq[k] = std::pow(static_cast<double>(base), -2.0 * static_cast<double>(k) / static_cast<double>(dh));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double pos = positions[r];
    for (std::size_t k = 0; k < pairs; ++k) {
      const double angle = pos * freq[k];
      const float c = static_cast<float>(std::cos(angle));
      const float s = inverse ? -static_cast<float>(std::sin(angle)) : static_cast<float>(std::sin(angle));
      for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t o = r * dm + h * dh + 2 * k;
        const float x0 = in[o], x1 = in[o + 1];
        out[o] = x0 * c - x1 * s;
        out[o + 1] = x0 * s + x1 * c;
      }
    }
  }
}

}  // namespace

Var rope(Var x, std::span<const int> positions, std::size_t heads, float base) {
  const Tensor& xv = x.value();
  const std::size_t dm = xv.cols(), n = xv.rows();
  require(heads > 0 && dm % heads == 0, ErrorKind::kConfig, "rope: heads do not divide model dim");
  if ((dm / heads) % 2 != 0) fail(ErrorKind::kConfig, "rope: head dimension " + std::to_string(dm / heads) + " is odd");
  if (positions.size() != n)
    fail(ErrorKind::kShape,
         "rope: " + std::to_string(positions.size()) + " positions for " + std::to_string(n) + " rows");
  Tensor out = Tensor::zeros_like(xv);
  rotate(xv.data(), out.data(), positions, n, dm, heads, base, false);
  std::vector<int> pos(positions.begin(), positions.end());
  return x.tape->push(std::move(out), {x}, [xi = x.id, pos = std::move(pos), heads, base](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor back = Tensor::zeros_like(g);
    rotate(g.data(), back.data(), pos, g.rows(), g.cols(), heads, base, true);
    t.grad(xi).add_scaled(back);
  });
}

std::vector<int> skip_partners(std::size_t layers) {
  std::vector<int> partner(layers, -1);
  for (std::size_t i = 0; i < layers / 2; ++i) partner[layers - 1 - i] = static_cast<int>(i);
  return partner;
}

}  // namespace lgtok::nn
