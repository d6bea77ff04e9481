#pragma once

// Straight-line evaluation of the fusion module and classifier head, written
// token by token from the defining formulas.

#include "alfia/ach.hpp"
#include "alfia/alf.hpp"
#include "oracle.hpp"

namespace oracle {

struct AlfTrace {
  std::vector<Vec> summaries;
  Vec query;
  std::vector<Vec> raw;  // per head
  Vec lambda;
  std::vector<Vec> fused;
  std::vector<Vec> enhanced;
  Vec beta;
  Vec local;
  Vec global;
  Vec embedding;
};

inline Vec masked_mean(const std::vector<Vec>& rows, const Vec& mask) {
  Vec out(rows[0].size(), 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < rows.size(); ++t) {
    total += mask[t];
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += mask[t] * rows[t][c];
  }
  for (double& v : out) v /= total;
  return out;
}

inline std::vector<Vec> rows_of(const alfia::Matrix& m) {
  std::vector<Vec> out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.push_back(row_of(m, r));
  return out;
}

inline AlfTrace alf_forward(const std::vector<alfia::Matrix>& selected, const Vec& mask,
                            alfia::AdaptiveLayerFusion& alf) {
  const auto& cfg = alf.config();
  const std::size_t nf = selected.size();
  const std::size_t t_len = selected[0].rows();
  const std::size_t d = static_cast<std::size_t>(alf.d_model());
  const auto nh = static_cast<std::size_t>(cfg.n_heads);
  const auto dk = static_cast<std::size_t>(cfg.head_dim_k(alf.d_model()));
  const auto dv = static_cast<std::size_t>(cfg.head_dim_v(alf.d_model()));
  AlfTrace tr;

  for (const auto& h : selected) tr.summaries.push_back(masked_mean(rows_of(h), mask));
  tr.query.assign(d, 0.0);
  for (const auto& s : tr.summaries)
    for (std::size_t c = 0; c < d; ++c) tr.query[c] += s[c] / static_cast<double>(nf);

  const Vec q = vecmat(tr.query, alf.w_query.value);
  std::vector<Vec> k, v;
  for (const auto& s : tr.summaries) {
    k.push_back(vecmat(s, alf.w_key.value));
    v.push_back(vecmat(s, alf.w_value.value));
  }
  Vec context;
  for (std::size_t h = 0; h < nh; ++h) {
    Vec scores(nf);
    for (std::size_t j = 0; j < nf; ++j)
      scores[j] = dot(slice(q, h * dk, dk), slice(k[j], h * dk, dk)) / std::sqrt(double(dk));
    const Vec a = softmax(scores, Vec(nf, 1.0));
    tr.raw.push_back(a);
    for (std::size_t c = 0; c < dv; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < nf; ++j) acc += a[j] * v[j][h * dv + c];
      context.push_back(acc);
    }
  }
  if (cfg.gating_enabled) {
    const Vec gate = affine(vecmat(context, alf.w_output.value), alf.gate);
    for (double g : gate) tr.lambda.push_back(1.0 / (1.0 + std::exp(-g)));
  } else {
    tr.lambda.assign(nf, 0.0);
    for (const auto& a : tr.raw)
      for (std::size_t j = 0; j < nf; ++j) tr.lambda[j] += a[j] / static_cast<double>(nh);
  }

  for (std::size_t t = 0; t < t_len; ++t) {
    Vec f(d, 0.0);
    for (std::size_t j = 0; j < nf; ++j)
      for (std::size_t c = 0; c < d; ++c) f[c] += tr.lambda[j] * selected[j](t, c);
    tr.fused.push_back(f);
    const Vec sum = add(add(f, affine(f, alf.projection)), gelu(affine(f, alf.interaction)));
    tr.enhanced.push_back(layer_norm(sum, alf.enhance_norm));
  }

  Vec scores(t_len);
  for (std::size_t t = 0; t < t_len; ++t) scores[t] = affine(tr.enhanced[t], alf.token_scorer)[0];
  tr.beta = softmax(scores, mask);
  tr.local.assign(d, 0.0);
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t c = 0; c < d; ++c) tr.local[c] += tr.beta[t] * tr.enhanced[t][c];

  tr.global = layer_norm(gelu(affine(masked_mean(tr.enhanced, mask), alf.global_map)),
                         alf.global_norm);
  Vec both = tr.local;
  both.insert(both.end(), tr.global.begin(), tr.global.end());
  const Vec cf = layer_norm(gelu(affine(both, alf.context_map)), alf.context_norm);
  tr.embedding = layer_norm(add(cf, affine(cf, alf.output_projection)), alf.output_norm);
  return tr;
}

inline Vec classify(const Vec& z, alfia::AttentionalClassifierHead& head) {
  const auto nh = static_cast<std::size_t>(head.config().n_heads);
  const std::size_t d = z.size();
  const std::size_t hd = d / nh;
  const Vec q = affine(z, head.query.base());
  const Vec k = affine(z, head.key.base());
  const Vec v = affine(z, head.value.base());
  Vec merged;
  for (std::size_t h = 0; h < nh; ++h) {
    // A single key: softmax over one score.
    const double score = dot(slice(q, h * hd, hd), slice(k, h * hd, hd)) / std::sqrt(double(hd));
    const double w = softmax({score}, {1.0})[0];
    for (std::size_t c = 0; c < hd; ++c) merged.push_back(w * v[h * hd + c]);
  }
  const Vec attn = affine(merged, head.attention_output.base());
  const Vec n1 = layer_norm(add(z, attn), head.norm1);
  const Vec ffn = affine(gelu(affine(n1, head.ffn_in)), head.ffn_out);
  const Vec n2 = layer_norm(add(n1, ffn), head.norm2);
  return affine(n2, head.output);
}

}  // namespace oracle
