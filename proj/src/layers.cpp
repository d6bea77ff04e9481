#include "alfia/layers.hpp"

#include <cmath>

namespace alfia {

Linear::Linear(const std::string& name, std::size_t in, std::size_t out,
               std::array<std::string, 2> axes)
    : weight(name + ".weight", in, out, axes), bias(name + ".bias", 1, out, {"1", axes[1]}) {}

double dense_init_std(std::size_t in, std::size_t out) {
  return std::sqrt(2.0 / static_cast<double>(in + out));
}

void Linear::init(Rng& rng) {
  weight.value = random_normal(weight.value.rows(), weight.value.cols(),
                               dense_init_std(weight.value.rows(), weight.value.cols()), rng);
  bias.value.fill(0.0);
}

Var Linear::forward(Tape& tape, Var x) {
  return ops::add_row(ops::matmul(x, tape.parameter(weight)), tape.parameter(bias));
}

LayerNormParams::LayerNormParams(const std::string& name, std::size_t dim)
    : gain(name + ".gain", 1, dim, {"1", "d_model"}),
      bias(name + ".bias", 1, dim, {"1", "d_model"}) {
  gain.value.fill(1.0);
}

Var LayerNormParams::forward(Tape& tape, Var x) {
  return ops::layer_norm(x, tape.parameter(gain), tape.parameter(bias));
}

}  // namespace alfia
