#pragma once

#include <vector>

#include "alfia/backbone.hpp"

namespace alfia {

struct HeadConfig {
  int n_heads = 4;
  int d_ff = 0;  // 0 means 4 * d_model
  double dropout = 0.1;
  int n_outputs = 1;

  void validate(int d_model) const;
  int ffn_width(int d_model) const { return d_ff > 0 ? d_ff : 4 * d_model; }
};

// Attentional classifier head: the fused embedding is treated as a
// length-1 sequence and passed through one transformer block, then an
// output linear layer.
class AttentionalClassifierHead {
 public:
  AttentionalClassifierHead(int d_model, const HeadConfig& cfg, Rng& init_rng);
  AttentionalClassifierHead(const AttentionalClassifierHead&) = delete;
  AttentionalClassifierHead& operator=(const AttentionalClassifierHead&) = delete;

  const HeadConfig& config() const { return cfg_; }
  std::vector<Parameter*> parameters();

  AdaptedLinear query;
  AdaptedLinear key;
  AdaptedLinear value;
  AdaptedLinear attention_output;
  LayerNormParams norm1;
  Linear ffn_in;
  Linear ffn_out;
  LayerNormParams norm2;
  Linear output;  // W_out, b_out

 private:
  HeadConfig cfg_;
};

// Logits (1 x n_outputs) for an embedding z (1 x d_model).
Var classify(Tape& tape, Var z, AttentionalClassifierHead& head, Rng* dropout_rng);

// Elementwise logistic function.
std::vector<double> predict_probability(std::span<const double> logits);

}  // namespace alfia
