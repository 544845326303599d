#include <doctest.h>

#include <cmath>
#include <limits>

#include "checks.hpp"
#include "lgtok/ops.hpp"
#include "lgtok/optim.hpp"
#include "test_util.hpp"

using namespace lgtok;
using nn::Tensor;

TEST_SUITE("autograd") {
  TEST_CASE("every primitive and the full graph pass finite differences") {
    for (const auto& r : checks::gradient_suite()) {
      CAPTURE(r.name);
      CAPTURE(r.worst);
      CHECK(r.passed);
    }
  }

  TEST_CASE("gradient of sum(x W) is x broadcast over the columns") {
    nn::ParamStore store;
    auto& w = store.add("w", checks::random_tensor({3, 4}, 1));
    const Tensor x({1, 3}, std::vector<float>{0.5f, -2.0f, 3.0f});
    nn::Tape tape;
    tape.backward(nn::sum(nn::linear(tape.constant(x), tape.param(w))));
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 4; ++j) CHECK(w.grad.at(i, j) == x[i]);
    }
  }

  TEST_CASE("second backward without zeroing doubles every gradient") {
    nn::ParamStore store;
    auto& w = store.add("w", checks::random_tensor({4, 4}, 2));
    nn::Tape tape;
    const nn::Var x = tape.constant(checks::random_tensor({3, 4}, 3));
    const nn::Var loss = nn::sum(nn::mul(nn::matmul(x, tape.param(w)), nn::matmul(x, tape.param(w))));
    tape.backward(loss);
    const Tensor once = w.grad;
    tape.backward(loss);
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(w.grad[i] == 2.0f * once[i]);
  }

  TEST_CASE("backward misuse is a usage error") {
    nn::Tape empty;
    CHECK_ERROR_KIND(empty.backward(nn::Var{}), ErrorKind::kUsage);
    nn::Tape inference(false);
    const nn::Var v = inference.constant(Tensor::scalar(1.0f));
    CHECK_ERROR_KIND(inference.backward(v), ErrorKind::kUsage);
    nn::Tape tape;
    const nn::Var m = tape.leaf(Tensor::matrix(2, 2, 1.0f));
    CHECK_ERROR_KIND(tape.backward(m), ErrorKind::kUsage);
  }

  TEST_CASE("forward replay is bitwise deterministic") {
    const auto run = [] {
      nn::Tape tape;
      const auto x = tape.leaf(checks::random_tensor({5, 8}, 4));
      const auto g = tape.leaf(checks::random_tensor({8}, 5));
      const auto loss = checks::probe(nn::gelu(nn::rms_norm(x, g)), 6);
      tape.backward(loss);
      return std::pair{tape.value(loss), tape.grad(x)};
    };
    const auto a = run(), b = run();
    CHECK(nn::bitwise_equal(a.first, b.first));
    CHECK(nn::bitwise_equal(a.second, b.second));
  }

  TEST_CASE("shape mismatches are shape errors") {
    nn::Tape tape;
    const auto a = tape.leaf(Tensor::matrix(2, 3));
    const auto b = tape.leaf(Tensor::matrix(3, 2));
    CHECK_ERROR_KIND(nn::add(a, b), ErrorKind::kShape);
    CHECK_ERROR_KIND(nn::matmul(a, a), ErrorKind::kShape);
    CHECK_ERROR_KIND(nn::rms_norm(tape.leaf(Tensor::matrix(2, 0)), tape.leaf(Tensor({0}))), ErrorKind::kShape);
  }

  TEST_CASE("rms_norm of ones with unit gain is ones") {
    nn::Tape tape(false);
    const auto y = nn::rms_norm(tape.constant(Tensor::matrix(2, 6, 1.0f)), tape.constant(Tensor({6}, 1.0f)));
    for (float v : y.value().values()) CHECK(v == doctest::Approx(1.0f).epsilon(1e-6));
  }

  TEST_CASE("smooth L1 closed forms") {
    nn::Tape tape(false);
    const Tensor target = Tensor::matrix(3, 4, 1.0f);
    CHECK(nn::smooth_l1(tape.constant(target), target).value()[0] == 0.0f);
    CHECK(nn::smooth_l1(tape.constant(Tensor::matrix(3, 4, 1.5f)), target).value()[0] == doctest::Approx(0.125));
    CHECK(nn::smooth_l1(tape.constant(Tensor::matrix(3, 4, 3.0f)), target).value()[0] == doctest::Approx(1.5));
  }
}

TEST_SUITE("autograd") {
  TEST_CASE("clipping at 0.01 equals stepping with gradients scaled by 0.01") {
    const Tensor g0({4}, std::vector<float>{0.5f, -0.5f, 0.5f, 0.5f});  // norm 1
    nn::ParamStore clipped, scaled;
    auto& pc = clipped.add("w", Tensor({4}, 0.3f));
    auto& ps = scaled.add("w", Tensor({4}, 0.3f));
    pc.grad = g0;
    ps.grad = g0;
    for (std::size_t i = 0; i < 4; ++i) ps.grad[i] *= 0.01f;
    nn::AdamW a, b;
    CHECK(a.step(clipped, 2e-4f, 0.01f) == doctest::Approx(1.0));
    b.step(scaled, 2e-4f, 0.0f);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(pc.first_moment[i] == doctest::Approx(0.1f * 0.01f * g0[i]).epsilon(1e-6));
      CHECK(pc.value[i] == doctest::Approx(ps.value[i]).epsilon(1e-7));
      CHECK(pc.grad[i] == 0.0f);
    }
  }

  TEST_CASE("zero gradients leave parameters unchanged") {
    nn::ParamStore store;
    auto& p = store.add("w", checks::random_tensor({3, 3}, 9));
    const Tensor before = p.value;
    nn::AdamW opt;
    for (int i = 0; i < 3; ++i) opt.step(store, 1e-2f, 1.0f);
    CHECK(nn::bitwise_equal(before, p.value));
  }

  TEST_CASE("non-finite gradient names the parameter") {
    nn::ParamStore store;
    store.add("encoder.w", Tensor({2}, 1.0f));
    auto& bad = store.add("decoder.head", Tensor({2}, 1.0f));
    bad.grad[1] = std::numeric_limits<float>::quiet_NaN();
    nn::AdamW opt;
    try {
      opt.step(store, 1e-3f, 1.0f);
      FAIL("expected a numeric error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kNumeric);
      CHECK(std::string(e.what()).find("decoder.head") != std::string::npos);
    }
  }

  TEST_CASE("learning rate drops tenfold at epoch 180 of 200") {
    CHECK(nn::step_lr(2e-4f, 0, 200) == 2e-4f);
    CHECK(nn::step_lr(2e-4f, 179, 200) == 2e-4f);
    CHECK(nn::step_lr(2e-4f, 180, 200) == doctest::Approx(2e-5f));
    CHECK(nn::step_lr(2e-4f, 199, 200) == doctest::Approx(2e-5f));
    CHECK(nn::step_lr(1.0f, 8, 10) == 1.0f);
    CHECK(nn::step_lr(1.0f, 9, 10) == doctest::Approx(0.1f));
  }

  TEST_CASE("duplicate parameter names are rejected") {
    nn::ParamStore store;
    store.add("w", Tensor({1}));
    CHECK_ERROR_KIND(store.add("w", Tensor({1})), ErrorKind::kConfig);
  }
}
