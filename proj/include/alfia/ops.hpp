#pragma once

#include <span>
#include <vector>

#include "alfia/random.hpp"
#include "alfia/tape.hpp"

// Differentiable primitives on the tape, plus plain-value versions of the
// numerically delicate ones.
namespace alfia::ops {

constexpr double kLayerNormEps = 1e-12;

// Masked softmax over one vector. Masked-out positions get exactly 0.
// Throws when the mask is all zero ("empty attention support").
std::vector<double> softmax_masked(std::span<const double> scores, std::span<const double> mask);

// gain * (x - mean) / sqrt(var + eps) + bias, population variance.
std::vector<double> layer_normalize(std::span<const double> x, std::span<const double> gain,
                                    std::span<const double> bias, double eps);

double gelu(double x);  // exact Gaussian-CDF form
double gelu_derivative(double x);
double sigmoid(double x);

Var matmul(Var a, Var b);
Var add(Var a, Var b);
// a + bias, bias 1 x cols broadcast over rows.
Var add_row(Var a, Var bias);
Var scale(Var a, double s);
Var mul(Var a, Var b);
Var gelu(Var a);
Var sigmoid(Var a);
// Row-wise layer norm with 1 x cols gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps);
// Row-wise masked softmax; mask selects columns.
Var softmax_masked(Var x, const std::vector<double>& mask);
Var transpose(Var a);
Var slice_cols(Var a, std::size_t start, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
// Rows of table selected by ids.
Var gather_rows(Var table, const std::vector<int>& ids);
// sum_j weights(0, j) * parts[j]; weights is 1 x parts.size().
Var weighted_sum(Var weights, const std::vector<Var>& parts);
// Numerically stable binary cross-entropy on a 1x1 logit.
Var bce_with_logits(Var logit, double label);
Var sum(Var a);
// Inverted dropout with a mask drawn from rng. Identity when rng is null or p == 0.
Var dropout(Var x, double p, Rng* rng);

}  // namespace alfia::ops
