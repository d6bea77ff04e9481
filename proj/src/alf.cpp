#include "alfia/alf.hpp"

#include <cmath>

#include "alfia/error.hpp"

namespace alfia {

void FusionConfig::validate() const {
  require(n_fuse >= 1, "fusion.n_fuse must be at least 1");
  require(n_heads >= 1, "fusion.n_heads must be at least 1");
  require(d_k >= 0 && d_v >= 0, "fusion.d_k and fusion.d_v must be non-negative");
  require(dropout >= 0.0 && dropout < 1.0, "fusion.dropout must lie in [0, 1)");
}

AdaptiveLayerFusion::AdaptiveLayerFusion(int d_model, const FusionConfig& cfg, Rng& init_rng)
    : d_model_(d_model), cfg_(cfg) {
  cfg_.validate();
  const int dk = cfg_.head_dim_k(d_model);
  const int dv = cfg_.head_dim_v(d_model);
  require(dk >= 1 && dv >= 1, "fusion head dimensions must be positive");
  const auto d = static_cast<std::size_t>(d_model);
  const auto hk = static_cast<std::size_t>(dk * cfg_.n_heads);
  const auto hv = static_cast<std::size_t>(dv * cfg_.n_heads);
  const auto nf = static_cast<std::size_t>(cfg_.n_fuse);

  w_query = Parameter("alf.w_query", d, hk, {"d_model", "d_k*n_h"});
  w_key = Parameter("alf.w_key", d, hk, {"d_model", "d_k*n_h"});
  w_value = Parameter("alf.w_value", d, hv, {"d_model", "d_v*n_h"});
  w_output = Parameter("alf.w_output", hv, d, {"d_v*n_h", "d_model"});
  for (Parameter* p : {&w_query, &w_key, &w_value, &w_output})
    p->value = random_normal(p->value.rows(), p->value.cols(),
                             dense_init_std(p->value.rows(), p->value.cols()), init_rng);
  gate = Linear("alf.gate", d, nf, {"d_model", "N_f"});
  interaction = Linear("alf.interaction", d, d, {"d_model", "d_model"});
  projection = Linear("alf.projection", d, d, {"d_model", "d_model"});
  enhance_norm = LayerNormParams("alf.enhance_norm", d);
  token_scorer = Linear("alf.token_scorer", d, 1, {"d_model", "1"});
  global_map = Linear("alf.global_map", d, d, {"d_model", "d_model"});
  global_norm = LayerNormParams("alf.global_norm", d);
  context_map = Linear("alf.context_map", 2 * d, d, {"2*d_model", "d_model"});
  context_norm = LayerNormParams("alf.context_norm", d);
  output_projection = Linear("alf.output_projection", d, d, {"d_model", "d_model"});
  output_norm = LayerNormParams("alf.output_norm", d);
  for (Linear* l : {&gate, &interaction, &projection, &token_scorer, &global_map, &context_map,
                    &output_projection})
    l->init(init_rng);
}

std::vector<Parameter*> AdaptiveLayerFusion::parameters() {
  std::vector<Parameter*> out{&w_query, &w_key, &w_value, &w_output};
  for (Linear* l : {&gate, &interaction, &projection})
    for (Parameter* p : l->parameters()) out.push_back(p);
  for (Parameter* p : enhance_norm.parameters()) out.push_back(p);
  for (Parameter* p : token_scorer.parameters()) out.push_back(p);
  for (Parameter* p : global_map.parameters()) out.push_back(p);
  for (Parameter* p : global_norm.parameters()) out.push_back(p);
  for (Parameter* p : context_map.parameters()) out.push_back(p);
  for (Parameter* p : context_norm.parameters()) out.push_back(p);
  for (Parameter* p : output_projection.parameters()) out.push_back(p);
  for (Parameter* p : output_norm.parameters()) out.push_back(p);
  return out;
}

Var masked_mean_pool(Tape& tape, Var x, const std::vector<double>& mask) {
  require(mask.size() == x.rows(), "mask length does not match sequence length");
  double total = 0.0;
  for (double m : mask) total += m;
  require(total > 0.0, "empty attention support");
  Matrix w(1, mask.size());
  for (std::size_t t = 0; t < mask.size(); ++t) w[t] = mask[t] / total;
  return ops::matmul(tape.constant(std::move(w)), x);
}

LayerSummaries summarize_layers(Tape& tape, const std::vector<Var>& selected,
                                const std::vector<double>& mask) {
  require(!selected.empty(), "summarize_layers needs at least one layer");
  std::vector<Var> rows;
  rows.reserve(selected.size());
  for (const Var& h : selected) rows.push_back(masked_mean_pool(tape, h, mask));
  Var stack = ops::concat_rows(rows);
  Matrix avg(1, selected.size(), 1.0 / static_cast<double>(selected.size()));
  Var query = ops::matmul(tape.constant(std::move(avg)), stack);
  return {stack, query};
}

LayerWeights compute_layer_weights(Tape& tape, const LayerSummaries& summaries,
                                   AdaptiveLayerFusion& alf) {
  const FusionConfig& cfg = alf.config();
  const std::size_t nf = summaries.stack.rows();
  require(nf == static_cast<std::size_t>(cfg.n_fuse),
          "layer summaries carry " + std::to_string(nf) + " layers but N_f = " +
              std::to_string(cfg.n_fuse));
  const auto dk = static_cast<std::size_t>(cfg.head_dim_k(alf.d_model()));
  const auto dv = static_cast<std::size_t>(cfg.head_dim_v(alf.d_model()));

  Var q = ops::matmul(summaries.query, tape.parameter(alf.w_query));
  Var k = ops::matmul(summaries.stack, tape.parameter(alf.w_key));
  Var v = ops::matmul(summaries.stack, tape.parameter(alf.w_value));
  const std::vector<double> all_layers(nf, 1.0);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<Var> scores;
  std::vector<Var> contexts;
  for (std::size_t h = 0; h < static_cast<std::size_t>(cfg.n_heads); ++h) {
    Var qh = ops::slice_cols(q, h * dk, dk);
    Var kh = ops::slice_cols(k, h * dk, dk);
    Var s = ops::softmax_masked(ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt),
                                all_layers);
    scores.push_back(s);
    if (cfg.gating_enabled) contexts.push_back(ops::matmul(s, ops::slice_cols(v, h * dv, dv)));
  }
  Var raw = ops::concat_rows(scores);
  Var lambda;
  if (cfg.gating_enabled) {
    Var context = ops::matmul(ops::concat_cols(contexts), tape.parameter(alf.w_output));
    lambda = ops::sigmoid(alf.gate.forward(tape, context));
  } else {
    Matrix avg(1, static_cast<std::size_t>(cfg.n_heads), 1.0 / cfg.n_heads);
    lambda = ops::matmul(tape.constant(std::move(avg)), raw);
  }
  return {lambda, raw};
}

Var fuse_layers(const std::vector<Var>& selected, Var lambda) {
  require(lambda.cols() == selected.size(), "layer weight count does not match N_f");
  return ops::weighted_sum(lambda, selected);
}

Var enhance(Tape& tape, Var fused, AdaptiveLayerFusion& alf, Rng* dropout_rng) {
  Var projected = alf.projection.forward(tape, fused);
  Var interaction = ops::dropout(ops::gelu(alf.interaction.forward(tape, fused)),
                                 alf.config().dropout, dropout_rng);
  return alf.enhance_norm.forward(tape, ops::add(ops::add(fused, projected), interaction));
}

TokenAttention token_attention(Tape& tape, Var enhanced, const std::vector<double>& mask,
                               AdaptiveLayerFusion& alf) {
  require(mask.size() == enhanced.rows(), "mask length does not match sequence length");
  Var scores = ops::transpose(alf.token_scorer.forward(tape, enhanced));  // 1 x T
  Var beta = ops::softmax_masked(scores, mask);
  return {beta, ops::matmul(beta, enhanced)};
}

Var global_context(Tape& tape, Var enhanced, const std::vector<double>& mask,
                   AdaptiveLayerFusion& alf) {
  Var pooled = masked_mean_pool(tape, enhanced, mask);
  return alf.global_norm.forward(tape, ops::gelu(alf.global_map.forward(tape, pooled)));
}

Var fuse_contexts(Tape& tape, Var local, Var global, AdaptiveLayerFusion& alf, Rng* dropout_rng) {
  require(local.cols() == static_cast<std::size_t>(alf.d_model()) && global.cols() == local.cols(),
          "context vectors must have length d_model");
  Var fused = alf.context_norm.forward(
      tape, ops::gelu(alf.context_map.forward(tape, ops::concat_cols({local, global}))));
  Var projected = ops::dropout(alf.output_projection.forward(tape, fused), alf.config().dropout,
                               dropout_rng);
  return alf.output_norm.forward(tape, ops::add(fused, projected));
}

FusionVars alf_forward(Tape& tape, const std::vector<Var>& selected,
                       const std::vector<double>& mask, AdaptiveLayerFusion& alf,
                       Rng* dropout_rng) {
  require(!selected.empty(), "adaptive layer fusion needs N_f >= 1");
  LayerSummaries summaries = summarize_layers(tape, selected, mask);
  LayerWeights weights = compute_layer_weights(tape, summaries, alf);
  Var fused = fuse_layers(selected, weights.lambda);
  Var enhanced = enhance(tape, fused, alf, dropout_rng);
  TokenAttention tokens = token_attention(tape, enhanced, mask, alf);
  Var global = global_context(tape, enhanced, mask, alf);
  Var embedding = fuse_contexts(tape, tokens.local, global, alf, dropout_rng);
  return {embedding, weights, tokens, summaries.query};
}

}  // namespace alfia
