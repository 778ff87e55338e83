#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "s2h/tensor.hpp"

namespace s2h {

/// A named trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(0.0); }
};

/// Ordered, name-unique collection. Parameter addresses are stable.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor value);
  Parameter& get(std::string_view name);
  const Parameter& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
};

/// Glorot-uniform fill with the given fan sizes.
void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

/// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
};

class Tape;

/// What a node's backward function can see: its inputs' values, its own value and
/// incoming gradient, and gradient accumulators for inputs that need one (nullptr otherwise).
class BackwardContext {
 public:
  BackwardContext(Tape& tape, std::size_t node) : tape_(tape), node_(node) {}
  const Tensor& input(std::size_t i) const;
  const Tensor& output() const;
  const Tensor& output_grad() const;
  Tensor* input_grad(std::size_t i);

 private:
  Tape& tape_;
  std::size_t node_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// Records primitive operations in execution order. Nodes are appended after all of their
/// inputs, so reverse order is a valid topological order for the backward sweep.
class Tape {
 public:
  Var constant(Tensor value);
  Var param(Parameter& p);
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward() target w.r.t. v; all zeros if v was unreachable.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar node. Adds dloss/dtheta into every Parameter::grad reached.
  void backward(Var loss);
  void clear() { nodes_.clear(); }

 private:
  friend class BackwardContext;
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  Tensor* grad_slot(std::size_t id);
  std::vector<Node> nodes_;
};

}  // namespace s2h
