#include "lgtok/ops.hpp"

#include <algorithm>
#include <cmath>

#include "lgtok/error.hpp"
#include "lgtok/kernels.hpp"

namespace lgtok::nn {

namespace {

const kernels::KernelTable& K() { return kernels::active(); }

void check_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(ErrorKind::kShape, std::string(op) + ": shape " + a.shape_string() + " vs " + b.shape_string());
}

void check_matrix(const Tensor& a, const char* op) {
  if (!(a.cols() > 0 && a.rows() > 0)) fail(ErrorKind::kShape, std::string(op) + ": empty operand " + a.shape_string());
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_matrix(av, "matmul");
  check_matrix(bv, "matmul");
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  if (bv.rows() != k) fail(ErrorKind::kShape, "matmul: " + av.shape_string() + " x " + bv.shape_string());
  Tensor out = Tensor::matrix(n, m);
  K().gemm_nn(n, m, k, av.data(), k, bv.data(), m, out.data(), m, false);
  return a.tape->push(std::move(out), {a, b}, [ai = a.id, bi = b.id](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
    if (t.needs_grad(ai)) K().gemm_nt(n, k, m, g.data(), m, bv.data(), m, t.grad(ai).data(), k, true);
    if (t.needs_grad(bi)) K().gemm_tn(k, m, n, av.data(), k, g.data(), m, t.grad(bi).data(), m, true);
  });
}

Var matmul_const(const Tensor& mat, Var x) {
  const Tensor& xv = x.value();
  check_matrix(xv, "matmul_const");
  const std::size_t r = mat.rows(), n = mat.cols(), d = xv.cols();
  if (xv.rows() != n) fail(ErrorKind::kShape, "matmul_const: " + mat.shape_string() + " x " + xv.shape_string());
  Tensor out = Tensor::matrix(r, d);
  K().gemm_nn(r, d, n, mat.data(), n, xv.data(), d, out.data(), d, false);
  return x.tape->push(std::move(out), {x}, [mat, xi = x.id](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const std::size_t r = mat.rows(), n = mat.cols(), d = g.cols();
    K().gemm_tn(n, d, r, mat.data(), n, g.data(), d, t.grad(xi).data(), d, true);
  });
}

Var linear(Var x, Var weight) { return matmul(x, weight); }

Var linear(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

Var add(Var a, Var b) {
  check_same(a.value(), b.value(), "add");
  Tensor out = a.value();
  out.add_scaled(b.value());
  return a.tape->push(std::move(out), {a, b}, [ai = a.id, bi = b.id](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai).add_scaled(g);
    if (t.needs_grad(bi)) t.grad(bi).add_scaled(g);
  });
}

Var sub(Var a, Var b) {
  check_same(a.value(), b.value(), "sub");
  Tensor out = a.value();
  out.add_scaled(b.value(), -1.0f);
  return a.tape->push(std::move(out), {a, b}, [ai = a.id, bi = b.id](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai).add_scaled(g);
    if (t.needs_grad(bi)) t.grad(bi).add_scaled(g, -1.0f);
  });
}

Var mul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  check_same(av, bv, "mul");
  Tensor out = Tensor::zeros_like(av);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape->push(std::move(out), {a, b}, [ai = a.id, bi = b.id](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    if (t.needs_grad(ai)) {
      Tensor& ga = t.grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(bi)) {
      Tensor& gb = t.grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, float s) {
  Tensor out = a.value();
  for (float& v : out.values()) v *= s;
  return a.tape->push(std::move(out), {a}, [ai = a.id, s](Tape& t, std::uint32_t self) {
    t.grad(ai).add_scaled(t.grad(self), s);
  });
}

Var add_row(Var a, Var row) {
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.size() != av.cols())
    fail(ErrorKind::kShape, "add_row: row " + rv.shape_string() + " vs matrix " + av.shape_string());
  Tensor out = av;
  const std::size_t n = av.rows(), d = av.cols();
  for (std::size_t i = 0; i < n; ++i) K().axpy(1.0f, rv.data(), out.data() + i * d, d);
  return a.tape->push(std::move(out), {a, row}, [ai = a.id, ri = row.id](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai).add_scaled(g);
    if (t.needs_grad(ri)) {
      Tensor& gr = t.grad(ri);
      const std::size_t n = g.rows(), d = g.cols();
      for (std::size_t i = 0; i < n; ++i) K().axpy(1.0f, g.data() + i * d, gr.data(), d);
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::kShape, "concat_rows: no inputs");
  const std::size_t d = parts.front().cols();
  std::size_t n = 0;
  for (const Var& p : parts) {
    if (p.cols() != d) fail(ErrorKind::kShape, "concat_rows: column mismatch " + p.value().shape_string());
    n += p.rows();
  }
  Tensor out = Tensor::matrix(n, d);
  std::size_t offset = 0;
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + offset);
    offset += p.value().size();
    ids.push_back(p.id);
  }
  return parts.front().tape->push(std::move(out), parts, [ids](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (std::uint32_t id : ids) {
      const std::size_t len = t.value(id).size();
      if (t.needs_grad(id)) {
        Tensor& gp = t.grad(id);
        for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
      }
      offset += len;
    }
  });
}

Var concat_cols(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rows() != bv.rows()) fail(ErrorKind::kShape, "concat_cols: " + av.shape_string() + " vs " + bv.shape_string());
  const std::size_t n = av.rows(), da = av.cols(), db = bv.cols();
  Tensor out = Tensor::matrix(n, da + db);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(av.data() + i * da, da, out.data() + i * (da + db));
    std::copy_n(bv.data() + i * db, db, out.data() + i * (da + db) + da);
  }
  return a.tape->push(std::move(out), {a, b}, [ai = a.id, bi = b.id](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const std::size_t n = g.rows(), da = t.value(ai).cols(), db = t.value(bi).cols();
    if (t.needs_grad(ai)) {
      Tensor& ga = t.grad(ai);
      for (std::size_t i = 0; i < n; ++i) K().axpy(1.0f, g.data() + i * (da + db), ga.data() + i * da, da);
    }
    if (t.needs_grad(bi)) {
      Tensor& gb = t.grad(bi);
      for (std::size_t i = 0; i < n; ++i)
        K().axpy(1.0f, g.data() + i * (da + db) + da, gb.data() + i * db, db);
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const Tensor& av = a.value();
  if (!(begin + count <= av.rows() && count > 0))
    fail(ErrorKind::kShape,
         "slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") of " + av.shape_string());
  const std::size_t d = av.cols();
  Tensor out = Tensor::matrix(count, d);
  std::copy_n(av.data() + begin * d, count * d, out.data());
  return a.tape->push(std::move(out), {a}, [ai = a.id, begin](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    K().axpy(1.0f, g.data(), t.grad(ai).data() + begin * g.cols(), g.size());
  });
}

Var gather_rows(Var table, std::span<const int> indices) {
  const Tensor& tv = table.value();
  const std::size_t d = tv.cols();
  std::vector<int> idx(indices.begin(), indices.end());
  Tensor out = Tensor::matrix(idx.size(), d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (!(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < tv.rows()))
      fail(ErrorKind::kData,
           "gather_rows: index " + std::to_string(idx[i]) + " outside table of " + std::to_string(tv.rows()) + " rows");
    std::copy_n(tv.data() + idx[i] * d, d, out.data() + i * d);
  }
  return table.tape->push(std::move(out), {table}, [ti = table.id, idx](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gt = t.grad(ti);
    const std::size_t d = g.cols();
    for (std::size_t i = 0; i < idx.size(); ++i) K().axpy(1.0f, g.data() + i * d, gt.data() + idx[i] * d, d);
  });
}

Var repeat_row(Var row, std::size_t n) {
  const Tensor& rv = row.value();
  const std::size_t d = rv.size();
  Tensor out = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) std::copy_n(rv.data(), d, out.data() + i * d);
  return row.tape->push(std::move(out), {row}, [ri = row.id](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gr = t.grad(ri);
    const std::size_t d = g.cols();
    for (std::size_t i = 0; i < g.rows(); ++i) K().axpy(1.0f, g.data() + i * d, gr.data(), d);
  });
}

Var mean_rows(Var a) {
  const Tensor& av = a.value();
  check_matrix(av, "mean_rows");
  const std::size_t n = av.rows(), d = av.cols();
  Tensor out = Tensor::matrix(1, d);
  for (std::size_t i = 0; i < n; ++i) K().axpy(1.0f, av.data() + i * d, out.data(), d);
  for (float& v : out.values()) v /= static_cast<float>(n);
  return a.tape->push(std::move(out), {a}, [ai = a.id](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ai);
    const std::size_t n = ga.rows(), d = ga.cols();
    const float inv = 1.0f / static_cast<float>(n);
    for (std::size_t i = 0; i < n; ++i) K().axpy(inv, g.data(), ga.data() + i * d, d);
  });
}

Var rms_norm(Var x, Var gain, float eps) {
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  const std::size_t d = xv.cols();
  require(d >= 1 && xv.size() > 0, ErrorKind::kShape, "rms_norm: zero-length feature axis");
  if (gv.size() != d) fail(ErrorKind::kShape, "rms_norm: gain " + gv.shape_string() + " vs input " + xv.shape_string());
  const std::size_t n = xv.rows();
  Tensor out = Tensor::zeros_like(xv);
  std::vector<float> inv_rms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* xr = xv.data() + i * d;
    const float ms = K().dot(xr, xr, d) / static_cast<float>(d);
    const float r = 1.0f / std::sqrt(ms + eps);
    inv_rms[i] = r;
    float* yr = out.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) yr[j] = gv[j] * xr[j] * r;
  }
  return x.tape->push(std::move(out), {x, gain},
                      [xi = x.id, gi = gain.id, inv_rms = std::move(inv_rms)](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(xi);
    const Tensor& gv = t.value(gi);
    const std::size_t n = xv.rows(), d = xv.cols();
    const bool want_x = t.needs_grad(xi), want_g = t.needs_grad(gi);
    for (std::size_t i = 0; i < n; ++i) {
      const float* xr = xv.data() + i * d;
      const float* gr = g.data() + i * d;
      const float r = inv_rms[i];
      if (want_g) {
        float* gg = t.grad(gi).data();
        for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * xr[j] * r;
      }
      if (want_x) {
        float dot = 0.0f;
        for (std::size_t j = 0; j < d; ++j) dot += gv[j] * gr[j] * xr[j];
        const float c = r * r * r * dot / static_cast<float>(d);
        float* gx = t.grad(xi).data() + i * d;
        for (std::size_t j = 0; j < d; ++j) gx[j] += r * gv[j] * gr[j] - c * xr[j];
      }
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, float eps) {
  const Tensor& xv = x.value();
  const std::size_t d = xv.cols();
  require(d >= 1 && xv.size() > 0, ErrorKind::kShape, "layer_norm: zero-length feature axis");
  if (!(gain.value().size() == d && bias.value().size() == d))
    fail(ErrorKind::kShape, "layer_norm: affine parameters do not match " + xv.shape_string());
  const std::size_t n = xv.rows();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor out = Tensor::zeros_like(xv);
  Tensor xhat = Tensor::zeros_like(xv);
  std::vector<float> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* xr = xv.data() + i * d;
    float mean = 0.0f;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<float>(d);
    const float r = 1.0f / std::sqrt(var + eps);
    inv_std[i] = r;
    for (std::size_t j = 0; j < d; ++j) {
      const float h = (xr[j] - mean) * r;
      xhat[i * d + j] = h;
      out[i * d + j] = gv[j] * h + bv[j];
    }
  }
  return x.tape->push(std::move(out), {x, gain, bias},
                      [xi = x.id, gi = gain.id, bi = bias.id, xhat = std::move(xhat),
                       inv_std = std::move(inv_std)](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& gv = t.value(gi);
    const std::size_t n = g.rows(), d = g.cols();
    std::vector<float> dxhat(d);
    for (std::size_t i = 0; i < n; ++i) {
      const float* gr = g.data() + i * d;
      const float* hr = xhat.data() + i * d;
      if (t.needs_grad(gi)) {
        float* gg = t.grad(gi).data();
        for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * hr[j];
      }
      if (t.needs_grad(bi)) {
        float* gb = t.grad(bi).data();
        for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
      }
      if (t.needs_grad(xi)) {
        float m1 = 0.0f, m2 = 0.0f;
        for (std::size_t j = 0; j < d; ++j) {
          dxhat[j] = gr[j] * gv[j];
          m1 += dxhat[j];
          m2 += dxhat[j] * hr[j];
        }
        m1 /= static_cast<float>(d);
        m2 /= static_cast<float>(d);
        float* gx = t.grad(xi).data() + i * d;
        for (std::size_t j = 0; j < d; ++j) gx[j] += inv_std[i] * (dxhat[j] - m1 - hr[j] * m2);
      }
    }
  });
}

Var silu(Var x) {
  const Tensor& xv = x.value();
  Tensor out = Tensor::zeros_like(xv);
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] / (1.0f + std::exp(-xv[i]));
  return x.tape->push(std::move(out), {x}, [xi = x.id](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(xi);
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const float s = 1.0f / (1.0f + std::exp(-xv[i]));
      gx[i] += g[i] * s * (1.0f + xv[i] * (1.0f - s));
    }
  });
}

namespace {
constexpr float kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluA = 0.044715f;
}  // namespace

Var gelu(Var x) {
  const Tensor& xv = x.value();
  Tensor out = Tensor::zeros_like(xv);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const float v = xv[i];
    out[i] = 0.5f * v * (1.0f + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return x.tape->push(std::move(out), {x}, [xi = x.id](Tape& t, std::uint32_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(xi);
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const float v = xv[i];
      const float th = std::tanh(kGeluC * (v + kGeluA * v * v * v));
      const float du = kGeluC * (1.0f + 3.0f * kGeluA * v * v);
      gx[i] += g[i] * (0.5f * (1.0f + th) + 0.5f * v * (1.0f - th * th) * du);
    }
  });
}

Var straight_through(Var z, const Tensor& z_hat) {
  check_same(z.value(), z_hat, "straight_through");
  return z.tape->push(Tensor(z_hat), {z}, [zi = z.id](Tape& t, std::uint32_t self) {
    t.grad(zi).add_scaled(t.grad(self));
  });
}

Var smooth_l1(Var pred, const Tensor& target, float beta) {
  const Tensor& pv = pred.value();
  check_same(pv, target, "smooth_l1");
  require(pv.size() > 0, ErrorKind::kShape, "smooth_l1: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = std::fabs(static_cast<double>(pv[i]) - target[i]);
    total += d < beta ? 0.5 * d * d / beta : d - 0.5 * beta;
  }
  const float loss = static_cast<float>(total / static_cast<double>(pv.size()));
  return pred.tape->push(Tensor::scalar(loss), {pred},
                         [pi = pred.id, target, beta](Tape& t, std::uint32_t self) {
    const float g = t.grad(self)[0];
    const Tensor& pv = t.value(pi);
    Tensor& gp = t.grad(pi);
    const float inv = g / static_cast<float>(pv.size());
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const float d = pv[i] - target[i];
      const float slope = std::fabs(d) < beta ? d / beta : (d > 0.0f ? 1.0f : -1.0f);
      gp[i] += inv * slope;
    }
  });
}

Var mse(Var pred, const Tensor& target) {
  const Tensor& pv = pred.value();
  check_same(pv, target, "mse");
  require(pv.size() > 0, ErrorKind::kShape, "mse: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = static_cast<double>(pv[i]) - target[i];
    total += d * d;
  }
  const float loss = static_cast<float>(total / static_cast<double>(pv.size()));
  return pred.tape->push(Tensor::scalar(loss), {pred}, [pi = pred.id, target](Tape& t, std::uint32_t self) {
    const float g = t.grad(self)[0];
    const Tensor& pv = t.value(pi);
    Tensor& gp = t.grad(pi);
    const float c = 2.0f * g / static_cast<float>(pv.size());
    for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += c * (pv[i] - target[i]);
  });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  const Tensor& lv = logits.value();
  const std::size_t n = lv.rows(), v = lv.cols();
  if (!(targets.size() == n && n > 0))
    fail(ErrorKind::kShape,
         "cross_entropy: " + std::to_string(targets.size()) + " targets for logits " + lv.shape_string());
  Tensor probs = Tensor::zeros_like(lv);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(targets[i] >= 0 && static_cast<std::size_t>(targets[i]) < v))
      fail(ErrorKind::kData, "cross_entropy: target " + std::to_string(targets[i]) + " >= V=" + std::to_string(v));
    const float* row = lv.data() + i * v;
    const float mx = *std::max_element(row, row + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    const double lse = mx + std::log(z);
    total += lse - row[targets[i]];
    for (std::size_t j = 0; j < v; ++j) probs[i * v + j] = static_cast<float>(std::exp(row[j] - lse));
  }
  const float loss = static_cast<float>(total / static_cast<double>(n));
  std::vector<int> tg(targets.begin(), targets.end());
  return logits.tape->push(Tensor::scalar(loss), {logits},
                           [li = logits.id, probs = std::move(probs), tg = std::move(tg)](Tape& t, std::uint32_t self) {
    const float g = t.grad(self)[0];
    Tensor& gl = t.grad(li);
    const std::size_t n = probs.rows(), v = probs.cols();
    const float c = g / static_cast<float>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < v; ++j) gl[i * v + j] += c * probs[i * v + j];
      gl[i * v + tg[i]] -= c;
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (float v : a.value().values()) s += v;
  return a.tape->push(Tensor::scalar(static_cast<float>(s)), {a}, [ai = a.id](Tape& t, std::uint32_t self) {
    const float g = t.grad(self)[0];
    for (float& v : t.grad(ai).values()) v += g;
  });
}

}  // namespace lgtok::nn
