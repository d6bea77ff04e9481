#pragma once

#include "alfia/error.hpp"

namespace alfia {

template <typename T>
std::vector<T> select_top_layers(const std::vector<T>& all_layers, int n_f) {
  require(!all_layers.empty(), "select_top_layers: no layer states");
  const int l = static_cast<int>(all_layers.size()) - 1;
  require(n_f >= 0, "N_f must be non-negative");
  require(n_f <= l, "N_f = " + std::to_string(n_f) + " exceeds the " + std::to_string(l) +
                        " available encoder layers");
  return std::vector<T>(all_layers.end() - n_f, all_layers.end());
}

}  // namespace alfia
