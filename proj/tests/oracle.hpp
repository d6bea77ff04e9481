#pragma once

// Plain-loop reference implementations used as test oracles. Nothing here
// touches the tape; every formula is written out from its definition.

#include <algorithm>
#include <cmath>
#include <vector>

#include "alfia/layers.hpp"
#include "alfia/matrix.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline Vec row_of(const alfia::Matrix& m, std::size_t r) {
  return {m.row(r).begin(), m.row(r).end()};
}

// x W for a row vector x.
inline Vec vecmat(const Vec& x, const alfia::Matrix& w) {
  Vec out(w.cols(), 0.0);
  for (std::size_t j = 0; j < w.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) s += x[i] * w(i, j);
    out[j] = s;
  }
  return out;
}

inline Vec affine(const Vec& x, const alfia::Linear& l) {
  Vec out = vecmat(x, l.weight.value);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += l.bias.value[j];
  return out;
}

inline Vec layer_norm(const Vec& x, const alfia::LayerNormParams& n, double eps = 1e-12) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = n.gain.value[i] * (x[i] - mean) / std::sqrt(var + eps) + n.bias.value[i];
  return out;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline Vec gelu(Vec x) {
  for (double& v : x) v = gelu(v);
  return x;
}

inline Vec add(Vec a, const Vec& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Vec softmax(const Vec& s, const Vec& mask) {
  double hi = -INFINITY;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (mask[i] != 0.0) hi = std::max(hi, s[i]);
  Vec out(s.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (mask[i] != 0.0) z += out[i] = std::exp(s[i] - hi);
  for (double& v : out) v /= z;
  return out;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline Vec slice(const Vec& v, std::size_t start, std::size_t n) {
  return {v.begin() + static_cast<long>(start), v.begin() + static_cast<long>(start + n)};
}

}  // namespace oracle
