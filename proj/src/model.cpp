#include "alfia/model.hpp"

#include <algorithm>

#include "alfia/error.hpp"

namespace alfia {

void ModelConfig::validate() const {
  encoder.validate();
  if (lora) {
    lora->validate();
    const auto& names = Encoder::projection_names();
    for (const auto& t : lora->targets)
      require(std::find(names.begin(), names.end(), t) != names.end(),
              "lora.targets: unknown projection '" + t + "'");
  }
  fusion.validate();
  require(fusion.n_fuse <= encoder.n_layers,
          "fusion.n_fuse = " + std::to_string(fusion.n_fuse) + " exceeds encoder.n_layers = " +
              std::to_string(encoder.n_layers));
  head.validate(encoder.d_model);
}

const char* block_name(Block b) {
  switch (b) {
    case Block::kBackbone: return "backbone";
    case Block::kLora: return "LoRA";
    case Block::kAlf: return "ALF";
    case Block::kAch: return "ACH";
  }
  return "?";
}

Block block_from_name(const std::string& name) {
  for (Block b : {Block::kBackbone, Block::kLora, Block::kAlf, Block::kAch})
    if (name == block_name(b)) return b;
  throw Error("unknown parameter block '" + name + "'");
}

namespace {
ModelConfig validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}
}  // namespace

AlfiaModel::AlfiaModel(const ModelConfig& cfg)
    : cfg_(validated(cfg)),
      init_rng_(derive_rng(cfg.init_seed, {1})),
      encoder_(cfg_.encoder, init_rng_),
      fusion_(cfg_.encoder.d_model, cfg_.fusion, init_rng_),
      head_(cfg_.encoder.d_model, cfg_.head, init_rng_) {
  if (cfg_.lora) {
    Rng lora_rng = derive_rng(cfg_.init_seed, {2});
    adapters_ = attach_adapters(encoder_, *cfg_.lora, lora_rng);
  }
}

ForwardResult AlfiaModel::forward(Tape& tape, const TokenRow& row, Rng* dropout_rng) {
  ForwardResult out;
  out.states = encoder_.forward(tape, row, dropout_rng);
  const auto selected = select_top_layers(out.states, cfg_.fusion.n_fuse);
  out.fusion = alf_forward(tape, selected, row.mask, fusion_, dropout_rng);
  out.logits = classify(tape, out.fusion.embedding, head_, dropout_rng);
  return out;
}

std::vector<Parameter*> AlfiaModel::parameters(Block block) {
  switch (block) {
    case Block::kBackbone: return encoder_.base_parameters();
    case Block::kLora: return encoder_.adapter_parameters();
    case Block::kAlf: return fusion_.parameters();
    case Block::kAch: return head_.parameters();
  }
  return {};
}

std::vector<Parameter*> AlfiaModel::all_parameters() {
  std::vector<Parameter*> out;
  for (Block b : {Block::kBackbone, Block::kLora, Block::kAlf, Block::kAch})
    for (Parameter* p : parameters(b)) out.push_back(p);
  return out;
}

void AlfiaModel::configure_training(TrainMode mode) {
  encoder_.set_base_trainable(mode == TrainMode::kFromScratch);
  for (Block b : {Block::kLora, Block::kAlf, Block::kAch})
    for (Parameter* p : parameters(b)) p->trainable = true;
}

std::size_t ParameterInventory::total() const {
  std::size_t n = 0;
  for (const auto& e : parameters) n += e.entries;
  return n;
}

std::size_t ParameterInventory::block_total(Block b) const {
  std::size_t n = 0;
  for (const auto& e : parameters)
    if (e.block == b) n += e.entries;
  return n;
}

ParameterInventory trainable_parameters(AlfiaModel& model, TrainMode mode) {
  ParameterInventory inv;
  for (Block b : {Block::kBackbone, Block::kLora, Block::kAlf, Block::kAch}) {
    if (b == Block::kBackbone && mode == TrainMode::kAdapter) continue;
    for (Parameter* p : model.parameters(b)) inv.parameters.push_back({b, p->name, p->value.size()});
  }
  return inv;
}

double predict(AlfiaModel& model, const TokenRow& row) {
  Tape tape;
  const ForwardResult r = model.forward(tape, row, nullptr);
  return ops::sigmoid(r.logits.value()[0]);
}

}  // namespace alfia
