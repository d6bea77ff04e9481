#pragma once

#include <vector>

#include "alfia/layers.hpp"

namespace alfia {

struct FusionConfig {
  int n_fuse = 4;         // N_f, number of top encoder layers fused
  int n_heads = 4;
  int d_k = 0;            // 0 means d_model / n_heads
  int d_v = 0;            // 0 means d_model / n_heads
  bool gating_enabled = true;
  double dropout = 0.1;

  void validate() const;
  int head_dim_k(int d_model) const { return d_k > 0 ? d_k : d_model / n_heads; }
  int head_dim_v(int d_model) const { return d_v > 0 ? d_v : d_model / n_heads; }
};

// Trainable state of the adaptive layer fusion module.
class AdaptiveLayerFusion {
 public:
  AdaptiveLayerFusion(int d_model, const FusionConfig& cfg, Rng& init_rng);
  AdaptiveLayerFusion(const AdaptiveLayerFusion&) = delete;
  AdaptiveLayerFusion& operator=(const AdaptiveLayerFusion&) = delete;

  const FusionConfig& config() const { return cfg_; }
  int d_model() const { return d_model_; }
  std::vector<Parameter*> parameters();

  // Inter-layer attention.
  Parameter w_query;   // d_model x (d_k * n_h)
  Parameter w_key;     // d_model x (d_k * n_h)
  Parameter w_value;   // d_model x (d_v * n_h)
  Parameter w_output;  // (d_v * n_h) x d_model
  Linear gate;         // d_model -> N_f
  // Post-fusion processing.
  Linear interaction;  // affine + GELU + dropout
  Linear projection;   // plain affine
  LayerNormParams enhance_norm;
  Linear token_scorer;  // d_model -> 1
  Linear global_map;    // affine + GELU + LayerNorm
  LayerNormParams global_norm;
  Linear context_map;   // 2 d_model -> d_model, affine + GELU + LayerNorm
  LayerNormParams context_norm;
  Linear output_projection;  // affine + dropout
  LayerNormParams output_norm;

 private:
  int d_model_;
  FusionConfig cfg_;
};

struct LayerSummaries {
  Var stack;         // N_f x d_model, masked mean of each layer
  Var query;         // 1 x d_model, mean of the stack rows
};

struct LayerWeights {
  Var lambda;         // 1 x N_f
  Var raw_attention;  // n_h x N_f, one softmax row per head
};

struct TokenAttention {
  Var beta;   // 1 x T, zero on padding
  Var local;  // 1 x d_model
};

struct FusionVars {
  Var embedding;      // 1 x d_model
  LayerWeights weights;
  TokenAttention tokens;
  Var query;          // mean-pooled summary of the fused layers (baseline embedding)
};

// Masked average over rows: sum_t A_t x_t / sum_t A_t. Rejects an all-zero mask.
Var masked_mean_pool(Tape& tape, Var x, const std::vector<double>& mask);

LayerSummaries summarize_layers(Tape& tape, const std::vector<Var>& selected,
                                const std::vector<double>& mask);
LayerWeights compute_layer_weights(Tape& tape, const LayerSummaries& summaries,
                                   AdaptiveLayerFusion& alf);
Var fuse_layers(const std::vector<Var>& selected, Var lambda);
Var enhance(Tape& tape, Var fused, AdaptiveLayerFusion& alf, Rng* dropout_rng);
TokenAttention token_attention(Tape& tape, Var enhanced, const std::vector<double>& mask,
                               AdaptiveLayerFusion& alf);
Var global_context(Tape& tape, Var enhanced, const std::vector<double>& mask,
                   AdaptiveLayerFusion& alf);
Var fuse_contexts(Tape& tape, Var local, Var global, AdaptiveLayerFusion& alf, Rng* dropout_rng);

// Full fusion pass over the top N_f layer states of one sequence.
FusionVars alf_forward(Tape& tape, const std::vector<Var>& selected,
                       const std::vector<double>& mask, AdaptiveLayerFusion& alf,
                       Rng* dropout_rng);

}  // namespace alfia
