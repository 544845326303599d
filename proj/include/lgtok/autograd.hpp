#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lgtok/tensor.hpp"

namespace lgtok::nn {

// A named trainable tensor with its gradient accumulator and AdamW moments.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
};

// Insertion-ordered collection of parameters with stable addresses.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Param& add(std::string name, Tensor init);
  Param& get(std::string_view name);
  const Param& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.cbegin(); }
  auto end() const { return params_.cend(); }

  void zero_grad();
  double grad_norm() const;

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool valid() const noexcept { return tape != nullptr; }
};

// Records a forward computation so gradients can be propagated in reverse.
//
// A tape built with record_gradients=false is an inference tape: values
// flow forward, nothing is retained for backward, and parameters are only
// read. A training tape writes gradients into the Param objects of the
// store the forward pass was built from; the store must therefore not be a
// genuinely const object while a training tape is alive.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var constant(Tensor value);
  // A differentiable leaf not bound to a parameter (gradient checks).
  Var leaf(Tensor value);
  Var param(const Param& p);

  // Records an op result. The backward closure runs only when some parent
  // requires a gradient.
  Var push(Tensor value, std::initializer_list<Var> parents, Backward backward);
  Var push(Tensor value, const std::vector<Var>& parents, Backward backward);

  const Tensor& value(std::uint32_t id) const { return node_value(nodes_[id]); }
  const Tensor& value(Var v) const { return value(v.id); }
  bool needs_grad(std::uint32_t id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Var v) const { return needs_grad(v.id); }

  // Gradient buffer of a node; valid after backward(). Ops use it to
  // accumulate contributions into their parents.
  Tensor& grad(std::uint32_t id);
  Tensor& grad(Var v) { return grad(v.id); }

  // Seeds d(loss)/d(loss) = 1, propagates to every node on the tape and
  // accumulates into the bound parameters' gradients. May be called more
  // than once; each call adds another full gradient to the parameters.
  void backward(Var loss);

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    bool needs_grad = false;
    Param* param = nullptr;
    Backward backward;
  };

  static const Tensor& node_value(const Node& n) { return n.borrowed ? *n.borrowed : n.owned; }
  Var make(Node node);

  bool record_;
  std::vector<Node> nodes_;
};

}  // namespace lgtok::nn
