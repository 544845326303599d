#pragma once

// Differentiable operations over Tape values. Every op validates shapes and
// throws Error{kShape} on mismatch; backward rules are hand-derived and
// checked against central finite differences in the test suite.

#include <cstdint>
#include <span>
#include <vector>

#include "lgtok/autograd.hpp"

namespace lgtok::nn {

Var matmul(Var a, Var b);                   // [n,k] x [k,m]
Var matmul_const(const Tensor& m, Var x);   // fixed [r,n] x [n,d]
Var linear(Var x, Var weight);              // x[n,in] * W[in,out]
Var linear(Var x, Var weight, Var bias);    // ... + b[out]

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float s);
Var add_row(Var a, Var row);                // broadcast a [1,d] or [d] row over a [n,d]

Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(Var a, Var b);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var gather_rows(Var table, std::span<const int> indices);
Var repeat_row(Var row, std::size_t n);     // [1,d] -> [n,d]
Var mean_rows(Var a);                       // [n,d] -> [1,d]

// y = g * x / sqrt(mean(x^2) + eps), row-wise.
Var rms_norm(Var x, Var gain, float eps = 1e-6f);
Var layer_norm(Var x, Var gain, Var bias, float eps = 1e-5f);
Var silu(Var x);
Var gelu(Var x);  // tanh approximation

// Forward value equals z_hat; the gradient reaches z unchanged.
Var straight_through(Var z, const Tensor& z_hat);

// Scalar losses (mean over all elements / rows).
Var smooth_l1(Var pred, const Tensor& target, float beta = 1.0f);
Var mse(Var pred, const Tensor& target);
Var cross_entropy(Var logits, std::span<const int> targets);
Var sum(Var a);

}  // namespace lgtok::nn
