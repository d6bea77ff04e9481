#pragma once

#include <string>
#include <vector>

#include "alfia/gradcheck.hpp"
#include "alfia/model.hpp"

namespace alfia {

struct BlockGradCheck {
  Block block;
  std::size_t checked = 0;
  double max_relative_error = 0.0;
  std::string worst_parameter;
};

struct ModelGradCheckOptions {
  GradCheckOptions fd;
  TrainMode mode = TrainMode::kAdapter;
  // LoRA up-projections start at zero, which makes every down-projection
  // gradient exactly zero. Drawing them from N(0, 0.02) first checks the
  // adapters at a generic point instead.
  bool randomize_adapter_up = true;
};

// Analytic vs finite-difference gradients of the BCE loss on one sequence,
// evaluation mode, aggregated per trainable block.
std::vector<BlockGradCheck> check_model_gradients(AlfiaModel& model, const TokenRow& row, int label,
                                                  const ModelGradCheckOptions& options);

// Random ids in [4, vocab_size) with the first n_real positions unmasked.
TokenRow random_token_row(int vocab_size, std::size_t length, std::size_t n_real, Rng& rng);

}  // namespace alfia
