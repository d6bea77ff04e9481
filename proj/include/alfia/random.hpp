#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "alfia/matrix.hpp"

namespace alfia {

using Rng = std::mt19937_64;

// Derives an independent stream from a base seed and a list of stream ids
// (epoch, example index, ...). Same inputs always give the same stream.
Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

double normal(Rng& rng, double mean = 0.0, double stddev = 1.0);
double uniform(Rng& rng, double lo = 0.0, double hi = 1.0);

Matrix random_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

}  // namespace alfia
