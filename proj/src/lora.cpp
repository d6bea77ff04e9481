#include "alfia/lora.hpp"

#include <algorithm>

#include "alfia/error.hpp"

namespace alfia {

void LoraConfig::validate() const {
  require(rank >= 1, "lora.rank must be at least 1");
  require(alpha > 0.0, "lora.alpha must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "lora.dropout must lie in [0, 1)");
  require(!targets.empty(), "lora.targets must not be empty");
}

AdaptedLinear::AdaptedLinear(const std::string& name, std::size_t in, std::size_t out,
                             const std::string& block)
    : name_(name), base_(block + "." + name, in, out, {"d_in", "d_out"}) {}

void AdaptedLinear::attach(const LoraConfig& cfg, Rng& rng) {
  require(!lora_.has_value(), "already adapted: " + name_);
  cfg.validate();
  const auto r = static_cast<std::size_t>(cfg.rank);
  require(r <= std::min(in_features(), out_features()),
          "lora.rank exceeds min(d_in, d_out) for " + name_);
  LoraAdapter a;
  a.down = Parameter("lora." + name_ + ".down", in_features(), r, {"d_in", "rank"});
  a.up = Parameter("lora." + name_ + ".up", r, out_features(), {"rank", "d_out"});
  a.down.value = random_normal(in_features(), r, 0.02, rng);
  a.scaling = cfg.scaling();
  a.dropout = cfg.dropout;
  lora_ = std::move(a);
  set_base_trainable(false);
}

void AdaptedLinear::set_base_trainable(bool trainable) {
  for (Parameter* p : base_.parameters()) {
    p->trainable = trainable;
    if (!trainable) p->zero_grad();
  }
}

std::vector<Parameter*> AdaptedLinear::adapter_parameters() {
  if (!lora_) return {};
  return {&lora_->down, &lora_->up};
}

Var AdaptedLinear::forward(Tape& tape, Var x, Rng* dropout_rng) {
  Var y = base_.forward(tape, x);
  if (!lora_) return y;
  Var xd = ops::dropout(x, lora_->dropout, dropout_rng);
  Var low = ops::matmul(ops::matmul(xd, tape.parameter(lora_->down)), tape.parameter(lora_->up));
  return ops::add(y, ops::scale(low, lora_->scaling));
}

std::vector<double> adapted_forward(AdaptedLinear& layer, std::span<const double> x) {
  require(x.size() == layer.in_features(), "adapted_forward: input length does not match d_in");
  Tape tape;
  Var y = layer.forward(tape, tape.constant(Matrix::row_vector(x)), nullptr);
  const auto d = y.value().data();
  return {d.begin(), d.end()};
}

std::size_t AdapterInventory::total_entries() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.trainable_entries;
  return n;
}

}  // namespace alfia
