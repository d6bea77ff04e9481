#include "alfia/model_check.hpp"

#include <map>

#include "alfia/error.hpp"
#include "alfia/ops.hpp"
#include "alfia/random.hpp"

namespace alfia {

std::vector<BlockGradCheck> check_model_gradients(AlfiaModel& model, const TokenRow& row, int label,
                                                  const ModelGradCheckOptions& options) {
  model.configure_training(options.mode);
  if (options.randomize_adapter_up) {
    Rng rng = derive_rng(options.fd.seed, {0x7570});
    for (Parameter* p : model.parameters(Block::kLora))
      if (p->name.ends_with(".up")) p->value = random_normal(p->value.rows(), p->value.cols(), 0.02, rng);
  }

  Tape tape;
  const ForwardResult r = model.forward(tape, row, nullptr);
  const Gradients analytic = tape.backward(ops::bce_with_logits(r.logits, label));

  // ALF and ACH parameters do not affect the encoder, so their loss can
  // start from cached hidden states.
  std::vector<Matrix> cached;
  for (const Var& v : r.states) cached.push_back(v.value());
  const int n_f = model.config().fusion.n_fuse;
  const auto full_loss = [&] {
    Tape t;
    const ForwardResult fr = model.forward(t, row, nullptr);
    return ops::bce_with_logits(fr.logits, label).value()[0];
  };
  const auto head_loss = [&] {
    Tape t;
    std::vector<Var> states;
    for (const Matrix& m : select_top_layers(cached, n_f)) states.push_back(t.constant(m));
    const FusionVars f = alf_forward(t, states, row.mask, model.fusion(), nullptr);
    return ops::bce_with_logits(classify(t, f.embedding, model.head(), nullptr), label).value()[0];
  };

  std::vector<BlockGradCheck> out;
  for (Block b : {Block::kBackbone, Block::kLora, Block::kAlf, Block::kAch}) {
    std::vector<Parameter*> params;
    for (Parameter* p : model.parameters(b))
      if (p->trainable) params.push_back(p);
    if (params.empty()) continue;
    const bool encoder_side = b == Block::kBackbone || b == Block::kLora;
    const auto entries = check_gradients(encoder_side ? ScalarFunction(full_loss) : ScalarFunction(head_loss),
                                         analytic, params, options.fd);
    BlockGradCheck agg{b, 0, 0.0, ""};
    for (const auto& e : entries) {
      agg.checked += e.checked;
      if (e.max_relative_error >= agg.max_relative_error) {
        agg.max_relative_error = e.max_relative_error;
        agg.worst_parameter = e.parameter;
      }
    }
    out.push_back(agg);
  }
  return out;
}

TokenRow random_token_row(int vocab_size, std::size_t length, std::size_t n_real, Rng& rng) {
  require(vocab_size > 4, "random_token_row needs non-reserved vocabulary ids");
  require(n_real >= 1 && n_real <= length, "random_token_row needs 1 <= n_real <= length");
  std::uniform_int_distribution<int> pick(4, vocab_size - 1);
  TokenRow row;
  for (std::size_t t = 0; t < length; ++t) {
    const bool real = t < n_real;
    row.ids.push_back(real ? pick(rng) : 0);
    row.mask.push_back(real ? 1.0 : 0.0);
  }
  return row;
}

}  // namespace alfia
