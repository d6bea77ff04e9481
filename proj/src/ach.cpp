#include "alfia/ach.hpp"

#include "alfia/error.hpp"

namespace alfia {

void HeadConfig::validate(int d_model) const {
  require(n_heads >= 1 && d_model % n_heads == 0, "head.n_heads must divide d_model");
  require(d_ff >= 0, "head.d_ff must be non-negative");
  require(dropout >= 0.0 && dropout < 1.0, "head.dropout must lie in [0, 1)");
  require(n_outputs >= 1, "head.n_outputs must be at least 1");
}

AttentionalClassifierHead::AttentionalClassifierHead(int d_model, const HeadConfig& cfg,
                                                     Rng& init_rng)
    : query("attention.query", d_model, d_model, "ach"),
      key("attention.key", d_model, d_model, "ach"),
      value("attention.value", d_model, d_model, "ach"),
      attention_output("attention.output", d_model, d_model, "ach"),
      norm1("ach.norm1", d_model),
      ffn_in("ach.ffn_in", d_model, cfg.ffn_width(d_model), {"d_model", "d_ff"}),
      ffn_out("ach.ffn_out", cfg.ffn_width(d_model), d_model, {"d_ff", "d_model"}),
      norm2("ach.norm2", d_model),
      output("ach.output", d_model, cfg.n_outputs, {"d_model", "n_outputs"}),
      cfg_(cfg) {
  cfg_.validate(d_model);
  for (AdaptedLinear* p : {&query, &key, &value, &attention_output}) p->init(init_rng);
  for (Linear* l : {&ffn_in, &ffn_out, &output}) l->init(init_rng);
}

std::vector<Parameter*> AttentionalClassifierHead::parameters() {
  std::vector<Parameter*> out;
  for (AdaptedLinear* p : {&query, &key, &value, &attention_output})
    for (Parameter* q : p->base_parameters()) out.push_back(q);
  for (Parameter* q : norm1.parameters()) out.push_back(q);
  for (Parameter* q : ffn_in.parameters()) out.push_back(q);
  for (Parameter* q : ffn_out.parameters()) out.push_back(q);
  for (Parameter* q : norm2.parameters()) out.push_back(q);
  for (Parameter* q : output.parameters()) out.push_back(q);
  return out;
}

Var classify(Tape& tape, Var z, AttentionalClassifierHead& head, Rng* dropout_rng) {
  require(z.rows() == 1, "classify expects a single embedding row");
  require(z.value().all_finite(), "classify: non-finite embedding");
  const double p = head.config().dropout;
  // One query over one key: the attention weight is exactly 1.
  Var attn = multi_head_self_attention(tape, z, {1.0}, head.query, head.key, head.value,
                                       head.attention_output, head.config().n_heads, dropout_rng,
                                       0.0);
  Var n1 = head.norm1.forward(tape, ops::add(z, ops::dropout(attn, p, dropout_rng)));
  Var ffn = head.ffn_out.forward(tape, ops::gelu(head.ffn_in.forward(tape, n1)));
  Var n2 = head.norm2.forward(tape, ops::add(n1, ops::dropout(ffn, p, dropout_rng)));
  return head.output.forward(tape, n2);
}

std::vector<double> predict_probability(std::span<const double> logits) {
  std::vector<double> out;
  out.reserve(logits.size());
  for (double z : logits) out.push_back(ops::sigmoid(z));
  return out;
}

}  // namespace alfia
