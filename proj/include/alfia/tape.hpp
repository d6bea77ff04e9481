#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "alfia/matrix.hpp"

namespace alfia {

// A named weight tensor with its gradient accumulator.
//
// Invariant: grad has the shape of value. Gradients are only ever written
// into trainable parameters, so a frozen parameter's grad stays zero.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, std::size_t rows, std::size_t cols,
            std::array<std::string, 2> axes = {"rows", "cols"});

  void zero_grad() { grad.fill(0.0); }

  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;
  // Dimension labels used in shape-mismatch diagnostics (e.g. "d_model", "N_f").
  std::array<std::string, 2> axes;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Parameter gradients produced by one backward pass, in the order the
// parameters were first used on the tape.
class Gradients {
 public:
  void add(Parameter* p, Matrix g) { entries_.emplace_back(p, std::move(g)); }
  const Matrix* find(const Parameter& p) const;
  const std::vector<std::pair<Parameter*, Matrix>>& entries() const { return entries_; }
  // p.grad += g for every trainable parameter.
  void accumulate_into_parameters() const;

 private:
  std::vector<std::pair<Parameter*, Matrix>> entries_;
};

// Record of one forward pass. Each op appends a node holding its output
// value and a closure that propagates the output gradient to its inputs.
// Node ids are a topological order, so backward walks them in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf reading a parameter's current value. Repeated calls with the same
  // parameter return the same node.
  Var parameter(Parameter& p);
  Var constant(Matrix value);

  // Appends an op node. requires_grad is inferred from the inputs.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Matrix value, const std::vector<Var>& inputs, BackwardFn backward);

  // Reverse sweep from a 1x1 loss. May be called once per tape.
  Gradients backward(Var loss);

  const Matrix& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  // Gradient accumulator of a node; only valid inside backward closures.
  Matrix& grad(Var v);
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* external = nullptr;
    Parameter* param = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
  std::unordered_map<const Parameter*, std::uint32_t> param_nodes_;
  bool backward_done_ = false;
};

}  // namespace alfia
