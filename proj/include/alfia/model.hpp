#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "alfia/ach.hpp"
#include "alfia/alf.hpp"
#include "alfia/backbone.hpp"

namespace alfia {

struct ModelConfig {
  EncoderConfig encoder;
  std::optional<LoraConfig> lora = LoraConfig{};
  FusionConfig fusion;
  HeadConfig head;
  std::uint64_t init_seed = 42;

  void validate() const;
};

enum class TrainMode { kAdapter, kFromScratch };

// Parameter blocks as stored in checkpoints.
enum class Block { kBackbone, kLora, kAlf, kAch };
const char* block_name(Block b);
Block block_from_name(const std::string& name);

struct ForwardResult {
  std::vector<Var> states;  // L + 1 encoder states
  FusionVars fusion;
  Var logits;
};

// Backbone + optional adapters + adaptive layer fusion + classifier head.
class AlfiaModel {
 public:
  explicit AlfiaModel(const ModelConfig& cfg);
  AlfiaModel(const AlfiaModel&) = delete;
  AlfiaModel& operator=(const AlfiaModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  Encoder& encoder() { return encoder_; }
  AdaptiveLayerFusion& fusion() { return fusion_; }
  AttentionalClassifierHead& head() { return head_; }
  const AdapterInventory& adapters() const { return adapters_; }

  ForwardResult forward(Tape& tape, const TokenRow& row, Rng* dropout_rng);

  std::vector<Parameter*> parameters(Block block);
  std::vector<Parameter*> all_parameters();
  // Freezes/unfreezes blocks for the given training mode.
  void configure_training(TrainMode mode);

 private:
  ModelConfig cfg_;
  Rng init_rng_;
  Encoder encoder_;
  AdapterInventory adapters_;
  AdaptiveLayerFusion fusion_;
  AttentionalClassifierHead head_;
};

struct ParameterInventory {
  struct Entry {
    Block block;
    std::string name;
    std::size_t entries = 0;
  };
  std::vector<Entry> parameters;
  std::size_t total() const;
  std::size_t block_total(Block b) const;
};

// Trainable parameters for a mode: adapters + fusion + head, plus the
// backbone base weights in from-scratch mode.
ParameterInventory trainable_parameters(AlfiaModel& model, TrainMode mode);

// Probability of the positive class for one sequence, evaluation mode.
double predict(AlfiaModel& model, const TokenRow& row);

}  // namespace alfia
