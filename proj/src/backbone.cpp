#include "alfia/backbone.hpp"

#include <cmath>

#include "alfia/error.hpp"

namespace alfia {

void EncoderConfig::validate() const {
  require(vocab_size >= 1, "encoder.vocab_size must be at least 1");
  require(d_model >= 1 && n_heads >= 1, "encoder.d_model and encoder.n_heads must be positive");
  require(d_model % n_heads == 0, "encoder.d_model must be divisible by encoder.n_heads");
  require(n_layers >= 1, "encoder.n_layers must be at least 1");
  require(d_ff >= 1, "encoder.d_ff must be positive");
  require(max_seq_len >= 1, "encoder.max_seq_len must be at least 1");
  require(dropout >= 0.0 && dropout < 1.0, "encoder.dropout must lie in [0, 1)");
}

Var multi_head_self_attention(Tape& tape, Var x, const std::vector<double>& key_mask,
                              AdaptedLinear& query, AdaptedLinear& key, AdaptedLinear& value,
                              AdaptedLinear& output, int n_heads, Rng* dropout_rng,
                              double attention_dropout) {
  Var q = query.forward(tape, x, dropout_rng);
  Var k = key.forward(tape, x, dropout_rng);
  Var v = value.forward(tape, x, dropout_rng);
  const std::size_t width = q.cols();
  require(width % static_cast<std::size_t>(n_heads) == 0, "attention width not divisible by heads");
  const std::size_t head_dim = width / static_cast<std::size_t>(n_heads);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(n_heads));
  for (std::size_t h = 0; h < static_cast<std::size_t>(n_heads); ++h) {
    Var qh = ops::slice_cols(q, h * head_dim, head_dim);
    Var kh = ops::slice_cols(k, h * head_dim, head_dim);
    Var vh = ops::slice_cols(v, h * head_dim, head_dim);
    Var scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt);
    Var weights = ops::softmax_masked(scores, key_mask);
    weights = ops::dropout(weights, attention_dropout, dropout_rng);
    heads.push_back(ops::matmul(weights, vh));
  }
  Var merged = n_heads == 1 ? heads.front() : ops::concat_cols(heads);
  return output.forward(tape, merged, dropout_rng);
}

EncoderLayer::EncoderLayer(const std::string& prefix, const EncoderConfig& cfg)
    : query(prefix + ".query", cfg.d_model, cfg.d_model),
      key(prefix + ".key", cfg.d_model, cfg.d_model),
      value(prefix + ".value", cfg.d_model, cfg.d_model),
      attention_output(prefix + ".output.dense", cfg.d_model, cfg.d_model),
      norm1("backbone." + prefix + ".norm1", cfg.d_model),
      intermediate(prefix + ".intermediate.dense", cfg.d_model, cfg.d_ff),
      ffn_output(prefix + ".ffn.output.dense", cfg.d_ff, cfg.d_model),
      norm2("backbone." + prefix + ".norm2", cfg.d_model) {}

Encoder::Encoder(const EncoderConfig& cfg, Rng& init_rng)
    : cfg_(cfg),
      token_embedding_("backbone.token_embedding", 0, 0),
      position_embedding_("backbone.position_embedding", 0, 0) {
  cfg_.validate();
  const auto d = static_cast<std::size_t>(cfg_.d_model);
  token_embedding_ = Parameter("backbone.token_embedding", static_cast<std::size_t>(cfg_.vocab_size),
                               d, {"vocab_size", "d_model"});
  position_embedding_ = Parameter("backbone.position_embedding",
                                  static_cast<std::size_t>(cfg_.max_seq_len), d,
                                  {"max_seq_len", "d_model"});
  token_embedding_.value = random_normal(token_embedding_.value.rows(), d, 0.1, init_rng);
  position_embedding_.value = random_normal(position_embedding_.value.rows(), d, 0.1, init_rng);
  embedding_norm_ = LayerNormParams("backbone.embedding_norm", d);
  for (int l = 0; l < cfg_.n_layers; ++l) {
    auto layer = std::make_unique<EncoderLayer>("layer" + std::to_string(l), cfg_);
    for (AdaptedLinear* p : {&layer->query, &layer->key, &layer->value, &layer->attention_output,
                             &layer->intermediate, &layer->ffn_output})
      p->init(init_rng);
    layers_.push_back(std::move(layer));
  }
}

std::vector<Var> Encoder::forward(Tape& tape, const TokenRow& row, Rng* dropout_rng) {
  const std::size_t t = row.ids.size();
  require(row.mask.size() == t, "token ids and attention mask differ in length");
  require(t >= 1, "empty token sequence");
  require(t <= static_cast<std::size_t>(cfg_.max_seq_len),
          "sequence length " + std::to_string(t) + " exceeds max_seq_len " +
              std::to_string(cfg_.max_seq_len) + "; truncate during tokenization");
  for (int id : row.ids)
    require(id >= 0 && id < cfg_.vocab_size, "token id " + std::to_string(id) + " out of vocabulary");

  std::vector<int> positions(t);
  for (std::size_t i = 0; i < t; ++i) positions[i] = static_cast<int>(i);
  Var h = ops::add(ops::gather_rows(tape.parameter(token_embedding_), row.ids),
                   ops::gather_rows(tape.parameter(position_embedding_), positions));
  h = ops::dropout(embedding_norm_.forward(tape, h), cfg_.dropout, dropout_rng);

  std::vector<Var> states{h};
  for (auto& layer : layers_) {
    Var attn = multi_head_self_attention(tape, h, row.mask, layer->query, layer->key, layer->value,
                                         layer->attention_output, cfg_.n_heads, dropout_rng,
                                         cfg_.dropout);
    Var h1 = layer->norm1.forward(tape, ops::add(h, ops::dropout(attn, cfg_.dropout, dropout_rng)));
    Var ff = layer->ffn_output.forward(
        tape, ops::gelu(layer->intermediate.forward(tape, h1, dropout_rng)), dropout_rng);
    h = layer->norm2.forward(tape, ops::add(h1, ops::dropout(ff, cfg_.dropout, dropout_rng)));
    states.push_back(h);
  }
  return states;
}

const std::vector<std::string>& Encoder::projection_names() {
  static const std::vector<std::string> names = {
      "query", "key", "value", "output.dense", "intermediate.dense", "ffn.output.dense"};
  return names;
}

AdaptedLinear& Encoder::projection(int layer_index, const std::string& name) {
  EncoderLayer& l = layer(layer_index);
  if (name == "query") return l.query;
  if (name == "key") return l.key;
  if (name == "value") return l.value;
  if (name == "output.dense") return l.attention_output;
  if (name == "intermediate.dense") return l.intermediate;
  if (name == "ffn.output.dense") return l.ffn_output;
  std::string valid;
  for (const auto& n : projection_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw Error("unknown projection '" + name + "'; valid names: " + valid);
}

std::vector<Parameter*> Encoder::base_parameters() {
  std::vector<Parameter*> out{&token_embedding_, &position_embedding_, &embedding_norm_.gain,
                              &embedding_norm_.bias};
  for (auto& l : layers_) {
    for (AdaptedLinear* p : {&l->query, &l->key, &l->value, &l->attention_output})
      for (Parameter* q : p->base_parameters()) out.push_back(q);
    for (Parameter* q : l->norm1.parameters()) out.push_back(q);
    for (AdaptedLinear* p : {&l->intermediate, &l->ffn_output})
      for (Parameter* q : p->base_parameters()) out.push_back(q);
    for (Parameter* q : l->norm2.parameters()) out.push_back(q);
  }
  return out;
}

std::vector<Parameter*> Encoder::adapter_parameters() {
  std::vector<Parameter*> out;
  for (int l = 0; l < n_layers(); ++l)
    for (const auto& name : projection_names())
      for (Parameter* p : projection(l, name).adapter_parameters()) out.push_back(p);
  return out;
}

void Encoder::set_base_trainable(bool trainable) {
  for (Parameter* p : base_parameters()) {
    p->trainable = trainable;
    if (!trainable) p->zero_grad();
  }
}

LayerStates encode(Encoder& encoder, const TokenBatch& batch, Mode mode, Rng* dropout_rng) {
  require(mode == Mode::kEval || dropout_rng != nullptr, "train-mode encoding needs a dropout stream");
  LayerStates out;
  out.layers.assign(static_cast<std::size_t>(encoder.n_layers() + 1), {});
  for (const TokenRow& row : batch.rows) {
    Tape tape;
    const auto states = encoder.forward(tape, row, mode == Mode::kTrain ? dropout_rng : nullptr);
    for (std::size_t l = 0; l < states.size(); ++l) out.layers[l].push_back(states[l].value());
  }
  return out;
}

std::vector<std::vector<Matrix>> select_top_layers(const LayerStates& states, int n_f) {
  return select_top_layers<std::vector<Matrix>>(states.layers, n_f);
}

AdapterInventory attach_adapters(Encoder& encoder, const LoraConfig& cfg, Rng& rng) {
  require(encoder.n_layers() > 0, "cannot attach adapters to an empty model");
  require(!encoder.adapted(), "already adapted");
  cfg.validate();
  for (const auto& name : cfg.targets) (void)encoder.projection(0, name);  // validates names

  AdapterInventory inventory;
  for (int l = 0; l < encoder.n_layers(); ++l) {
    for (const auto& name : Encoder::projection_names()) {
      if (!cfg.targets.contains(name)) continue;
      AdaptedLinear& p = encoder.projection(l, name);
      p.attach(cfg, rng);
      const auto r = static_cast<std::size_t>(cfg.rank);
      inventory.layers.push_back(
          {p.name(), p.in_features(), p.out_features(), cfg.rank, r * (p.in_features() + p.out_features())});
    }
  }
  encoder.set_base_trainable(false);
  encoder.mark_adapted();
  return inventory;
}

}  // namespace alfia
