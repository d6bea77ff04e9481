#pragma once

#include "alfia/model.hpp"
#include "alfia/model_check.hpp"
#include "alfia/random.hpp"

namespace fixtures {

// Small enough for exhaustive checks, wide enough to exercise every head split.
inline alfia::ModelConfig tiny_config(int n_fuse = 2) {
  alfia::ModelConfig cfg;
  cfg.encoder.vocab_size = 40;
  cfg.encoder.d_model = 8;
  cfg.encoder.n_layers = 3;
  cfg.encoder.n_heads = 2;
  cfg.encoder.d_ff = 16;
  cfg.encoder.max_seq_len = 32;
  cfg.lora = alfia::LoraConfig{};
  cfg.lora->rank = 2;
  cfg.lora->alpha = 4.0;
  cfg.fusion.n_fuse = n_fuse;
  cfg.fusion.n_heads = 2;
  cfg.head.n_heads = 2;
  return cfg;
}

inline std::vector<alfia::Matrix> random_layers(std::size_t n, std::size_t t, std::size_t d,
                                                alfia::Rng& rng) {
  std::vector<alfia::Matrix> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(alfia::random_normal(t, d, 1.0, rng));
  return out;
}

}  // namespace fixtures
