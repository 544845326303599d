#include "lgtok/autograd.hpp"

#include <cmath>

#include "lgtok/error.hpp"

namespace lgtok::nn {

ParamStore::ParamStore(const ParamStore& other) { *this = other; }

ParamStore& ParamStore::operator=(const ParamStore& other) {
  if (this == &other) return *this;
  params_.clear();
  index_.clear();
  for (const auto& p : other.params_) {
    params_.push_back(std::make_unique<Param>(*p));
    index_.emplace(p->name, params_.size() - 1);
  }
  return *this;
}

Param& ParamStore::add(std::string name, Tensor init) {
  if (index_.contains(name)) fail(ErrorKind::kConfig, "duplicate parameter name: " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->grad = Tensor::zeros_like(init);
  p->first_moment = Tensor::zeros_like(init);
  p->second_moment = Tensor::zeros_like(init);
  p->value = std::move(init);
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

Param& ParamStore::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) fail(ErrorKind::kConfig, "unknown parameter: " + std::string(name));
  return *params_[it->second];
}

const Param& ParamStore::get(std::string_view name) const {
  return const_cast<ParamStore*>(this)->get(name);
}

bool ParamStore::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->grad.fill(0.0f);
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& p : params_) {
    for (float g : p->grad.values()) s += static_cast<double>(g) * g;
  }
  return std::sqrt(s);
}

const Tensor& Var::value() const {
  require(tape != nullptr, ErrorKind::kUsage, "use of an unbound Var");
  return tape->value(id);
}

Var Tape::make(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return make(std::move(n));
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.needs_grad = record_;
  return make(std::move(n));
}

Var Tape::param(const Param& p) {
  Node n;
  n.borrowed = &p.value;
  if (record_) {
    n.needs_grad = true;
    n.param = const_cast<Param*>(&p);
  }
  return make(std::move(n));
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, Backward backward) {
  Node n;
  n.owned = std::move(value);
  if (record_) {
    for (const Var& v : parents) {
      require(v.tape == this, ErrorKind::kUsage, "op mixes Vars from different tapes");
      if (nodes_[v.id].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) n.backward = std::move(backward);
  }
  return make(std::move(n));
}

Var Tape::push(Tensor value, const std::vector<Var>& parents, Backward backward) {
  Node n;
  n.owned = std::move(value);
  if (record_) {
    for (const Var& v : parents) {
      require(v.tape == this, ErrorKind::kUsage, "op mixes Vars from different tapes");
      if (nodes_[v.id].needs_grad) n.needs_grad = true;
    }
    if (n.needs_grad) n.backward = std::move(backward);
  }
  return make(std::move(n));
}

Tensor& Tape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != node_value(n).size()) n.grad = Tensor::zeros_like(node_value(n));
  return n.grad;
}

void Tape::backward(Var loss) {
  require(record_, ErrorKind::kUsage, "backward on a tape recorded without gradients");
  require(!nodes_.empty() && loss.tape == this && loss.id < nodes_.size(), ErrorKind::kUsage,
          "backward without a recorded forward computation");
  if (value(loss).size() != 1)
    fail(ErrorKind::kUsage, "backward requires a scalar loss, got " + value(loss).shape_string());
  for (std::uint32_t i = 0; i <= loss.id; ++i) {
    if (nodes_[i].needs_grad) grad(i).fill(0.0f);
  }
  if (!nodes_[loss.id].needs_grad) return;
  grad(loss.id)[0] = 1.0f;
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) n.param->grad.add_scaled(n.grad);
  }
}

}  // namespace lgtok::nn
