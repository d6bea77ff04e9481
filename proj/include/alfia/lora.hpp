#pragma once

#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "alfia/layers.hpp"

namespace alfia {

struct LoraConfig {
  int rank = 16;
  double alpha = 16.0;
  double dropout = 0.05;
  std::set<std::string> targets = {"query", "key", "value", "output.dense"};

  double scaling() const { return alpha / rank; }
  void validate() const;
};

struct LoraAdapter {
  Parameter down;  // A: d_in x r, zero-mean Gaussian init
  Parameter up;    // B: r x d_out, zero init
  double scaling = 1.0;
  double dropout = 0.0;
};

// Dense projection x W0 + b, optionally carrying a low-rank update
// scaling * (dropout(x) A) B. Only A and B learn once the base is frozen.
class AdaptedLinear {
 public:
  AdaptedLinear() = default;
  // Base weights are named "<block>.<name>.*", adapters "lora.<name>.*".
  AdaptedLinear(const std::string& name, std::size_t in, std::size_t out,
                const std::string& block = "backbone");

  void init(Rng& rng) { base_.init(rng); }
  // Wraps this projection. Throws "already adapted" on a second call.
  void attach(const LoraConfig& cfg, Rng& rng);
  bool adapted() const { return lora_.has_value(); }
  void set_base_trainable(bool trainable);

  Var forward(Tape& tape, Var x, Rng* dropout_rng);

  std::size_t in_features() const { return base_.weight.value.rows(); }
  std::size_t out_features() const { return base_.weight.value.cols(); }
  const std::string& name() const { return name_; }

  Linear& base() { return base_; }
  const Linear& base() const { return base_; }
  LoraAdapter* adapter() { return lora_ ? &*lora_ : nullptr; }
  const LoraAdapter* adapter() const { return lora_ ? &*lora_ : nullptr; }
  std::vector<Parameter*> base_parameters() { return base_.parameters(); }
  std::vector<Parameter*> adapter_parameters();

 private:
  std::string name_;
  Linear base_;
  std::optional<LoraAdapter> lora_;
};

// Tape-free evaluation of one adapted projection on a single row vector.
std::vector<double> adapted_forward(AdaptedLinear& layer, std::span<const double> x);

struct AdaptedLayerInfo {
  std::string name;
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  int rank = 0;
  std::size_t trainable_entries = 0;  // r * (d_in + d_out)
};

struct AdapterInventory {
  std::vector<AdaptedLayerInfo> layers;
  std::size_t total_entries() const;
};

}  // namespace alfia
