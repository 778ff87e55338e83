#include "s2h/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "s2h/error.hpp"

namespace s2h {

Parameter& ParameterSet::add(std::string name, Tensor value) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  return params_.emplace_back(std::move(name), std::move(value));
}

Parameter& ParameterSet::get(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ConfigError("unknown parameter: " + std::string(name));
}

const Parameter& ParameterSet::get(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ConfigError("unknown parameter: " + std::string(name));
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.values()) v = dist(rng);
}

const Tensor& BackwardContext::input(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].value;
}
const Tensor& BackwardContext::output() const { return tape_.nodes_[node_].value; }
const Tensor& BackwardContext::output_grad() const { return tape_.nodes_[node_].grad; }
Tensor* BackwardContext::input_grad(std::size_t i) { return tape_.grad_slot(tape_.nodes_[node_].inputs.at(i)); }

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return Var{nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  nodes_.push_back(Node{p.value, {}, {}, {}, &p, true});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (Var v : inputs) {
    if (v.id >= nodes_.size()) throw ConfigError("tape input refers to a node that does not exist yet");
    node.inputs.push_back(v.id);
    node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Tensor* Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.grad.empty() ? Tensor(n.value.shape()) : n.grad;
}

void Tape::backward(Var loss) {
  Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1) throw ConfigError("backward needs a scalar loss, got shape " + shape_str(root.value.shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  if (!root.requires_grad) return;
  root.grad = Tensor(root.value.shape(), 1.0);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (n.backward) {
      BackwardContext ctx(*this, id);
      n.backward(ctx);
    }
    if (n.param) {
      auto& acc = n.param->grad.values();
      const auto& g = n.grad.values();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    }
  }
}

}  // namespace s2h
