#pragma once

#include <string>
#include <vector>

#include "alfia/ops.hpp"
#include "alfia/random.hpp"
#include "alfia/tape.hpp"

namespace alfia {

// y = x W + b with W in x out (row-vector convention).
struct Linear {
  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out,
         std::array<std::string, 2> axes = {"in", "out"});

  void init(Rng& rng);
  Var forward(Tape& tape, Var x);
  std::vector<Parameter*> parameters() { return {&weight, &bias}; }

  Parameter weight;
  Parameter bias;
};

struct LayerNormParams {
  LayerNormParams() = default;
  LayerNormParams(const std::string& name, std::size_t dim);

  Var forward(Tape& tape, Var x);
  std::vector<Parameter*> parameters() { return {&gain, &bias}; }

  Parameter gain;
  Parameter bias;
};

// Glorot-normal init used for every dense map.
double dense_init_std(std::size_t in, std::size_t out);

}  // namespace alfia
