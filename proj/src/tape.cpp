#include "alfia/tape.hpp"

#include "alfia/error.hpp"

namespace alfia {

Parameter::Parameter(std::string name_, std::size_t rows, std::size_t cols,
                     std::array<std::string, 2> axes_)
    : name(std::move(name_)), value(rows, cols), grad(rows, cols), axes(std::move(axes_)) {}

const Matrix& Var::value() const {
  require(tape_ != nullptr, "use of an unbound variable");
  return tape_->value(*this);
}

const Matrix* Gradients::find(const Parameter& p) const {
  for (const auto& [param, g] : entries_)
    if (param == &p) return &g;
  return nullptr;
}

void Gradients::accumulate_into_parameters() const {
  for (const auto& [param, g] : entries_)
    if (param->trainable) param->grad += g;
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node node;
  node.external = &p.value;
  node.param = &p;
  node.requires_grad = p.trainable;
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::constant(Matrix value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, BackwardFn backward) {
  require(!backward_done_, "tape already consumed by backward");
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    check_owned(in);
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

const Matrix& Tape::value(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id()];
  return n.external != nullptr ? *n.external : n.value;
}

Matrix& Tape::grad(Var v) {
  Matrix& g = grads_[v.id()];
  if (g.empty()) {
    const Matrix& val = value(v);
    g = Matrix(val.rows(), val.cols());
  }
  return g;
}

void Tape::check_owned(Var v) const {
  require(v.tape() == this && v.id() < nodes_.size(), "variable does not belong to this tape");
}

Gradients Tape::backward(Var loss) {
  require(!nodes_.empty(), "backward without forward");
  require(!backward_done_, "backward already run on this tape");
  check_owned(loss);
  const Matrix& lv = value(loss);
  require(lv.rows() == 1 && lv.cols() == 1, "backward requires a scalar loss");
  backward_done_ = true;

  grads_.assign(nodes_.size(), Matrix());
  Gradients out;
  if (!nodes_[loss.id()].requires_grad) return out;
  grad(loss)(0, 0) = 1.0;

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || grads_[i].empty()) continue;
    if (n.backward) n.backward(*this, Var(this, static_cast<std::uint32_t>(i)));
  }
  // Emit parameter gradients in first-use order.
  for (std::size_t i = 0; i <= loss.id(); ++i) {
    Node& n = nodes_[i];
    if (n.param == nullptr || !n.param->trainable) continue;
    Matrix g = grads_[i].empty() ? Matrix(n.external->rows(), n.external->cols())
                                 : std::move(grads_[i]);
    out.add(n.param, std::move(g));
  }
  return out;
}

}  // namespace alfia
