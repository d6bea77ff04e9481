#pragma once

#include <memory>
#include <string>
#include <vector>

#include "alfia/layers.hpp"
#include "alfia/lora.hpp"

namespace alfia {

enum class Mode { kTrain, kEval };

struct EncoderConfig {
  int vocab_size = 0;  // 0 in a run config: taken from the vocabulary
  int d_model = 64;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 256;
  int max_seq_len = 512;
  double dropout = 0.1;

  void validate() const;
};

// One tokenized sequence. mask is 1 for real tokens and 0 for padding.
struct TokenRow {
  std::vector<int> ids;
  std::vector<double> mask;
};

struct TokenBatch {
  std::vector<TokenRow> rows;
};

// Hidden states of every layer: layers[l][b] is the T x d_model state of
// example b at layer l. layers[0] is the embedding output.
struct LayerStates {
  std::vector<std::vector<Matrix>> layers;
};

// Multi-head scaled dot-product self-attention over the rows of x. Keys
// outside key_mask receive zero weight. Shared by the encoder and the
// classifier head.
Var multi_head_self_attention(Tape& tape, Var x, const std::vector<double>& key_mask,
                              AdaptedLinear& query, AdaptedLinear& key, AdaptedLinear& value,
                              AdaptedLinear& output, int n_heads, Rng* dropout_rng,
                              double attention_dropout);

struct EncoderLayer {
  EncoderLayer(const std::string& prefix, const EncoderConfig& cfg);

  AdaptedLinear query;
  AdaptedLinear key;
  AdaptedLinear value;
  AdaptedLinear attention_output;  // "output.dense"
  LayerNormParams norm1;
  AdaptedLinear intermediate;      // "intermediate.dense"
  AdaptedLinear ffn_output;        // "ffn.output.dense"
  LayerNormParams norm2;
};

// Post-norm transformer encoder with learned positional embeddings.
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, Rng& init_rng);
  Encoder(const Encoder&) = delete;
  Encoder& operator=(const Encoder&) = delete;

  // L + 1 hidden-state nodes (T x d_model) for one sequence. dropout_rng is
  // null in evaluation mode.
  std::vector<Var> forward(Tape& tape, const TokenRow& row, Rng* dropout_rng);

  const EncoderConfig& config() const { return cfg_; }
  int n_layers() const { return static_cast<int>(layers_.size()); }
  EncoderLayer& layer(int i) { return *layers_.at(static_cast<std::size_t>(i)); }

  // Projection names accepted by attach_adapters.
  static const std::vector<std::string>& projection_names();
  AdaptedLinear& projection(int layer, const std::string& name);

  bool adapted() const { return adapted_; }
  void mark_adapted() { adapted_ = true; }

  // Base (non-adapter) weights, in a fixed order.
  std::vector<Parameter*> base_parameters();
  std::vector<Parameter*> adapter_parameters();
  void set_base_trainable(bool trainable);

 private:
  EncoderConfig cfg_;
  Parameter token_embedding_;
  Parameter position_embedding_;
  LayerNormParams embedding_norm_;
  std::vector<std::unique_ptr<EncoderLayer>> layers_;
  bool adapted_ = false;
};

// Runs the encoder over a batch. Rejects sequences longer than max_seq_len.
LayerStates encode(Encoder& encoder, const TokenBatch& batch, Mode mode, Rng* dropout_rng = nullptr);

// The last n_f entries of a per-layer list, order preserved. n_f = 0 gives an
// empty list; n_f > L is rejected.
template <typename T>
std::vector<T> select_top_layers(const std::vector<T>& all_layers, int n_f);

std::vector<std::vector<Matrix>> select_top_layers(const LayerStates& states, int n_f);

// Wraps the named projections of every encoder layer with low-rank
// adapters and freezes the base weights.
AdapterInventory attach_adapters(Encoder& encoder, const LoraConfig& cfg, Rng& rng);

}  // namespace alfia

#include "alfia/backbone_inl.hpp"
