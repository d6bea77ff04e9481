#include "alfia/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "alfia/error.hpp"
#include "alfia/kernels.hpp"

namespace alfia::ops {
namespace {

Tape& tape_of(Var v) {
  require(v.valid(), "unbound variable");
  return *v.tape();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  require(a.same_shape(b), std::string("shape mismatch in ") + op);
}

}  // namespace

std::vector<double> softmax_masked(std::span<const double> scores, std::span<const double> mask) {
  require(scores.size() == mask.size(), "softmax_masked: scores and mask differ in length");
  double max_score = -INFINITY;
  bool any = false;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask[i] != 0.0) {
      max_score = std::max(max_score, scores[i]);
      any = true;
    }
  }
  require(any, "empty attention support");
  std::vector<double> out(scores.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask[i] != 0.0) {
      out[i] = std::exp(scores[i] - max_score);
      total += out[i];
    }
  }
  for (double& v : out) v /= total;
  return out;
}

std::vector<double> layer_normalize(std::span<const double> x, std::span<const double> gain,
                                    std::span<const double> bias, double eps) {
  require(x.size() == gain.size() && x.size() == bias.size(), "layer_normalize: length mismatch");
  require(eps > 0.0, "layer_normalize: eps must be positive");
  const auto n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = gain[i] * (x[i] - mean) * inv + bias[i];
  return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(av.rows(), bv.cols());
  kernels::matmul(av, bv, out);
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a)) kernels::matmul_nt(g, t.value(b), t.grad(a));
    if (t.requires_grad(b)) kernels::matmul_tn(t.value(a), g, t.grad(b));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  out += b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(b)) t.grad(b) += g;
  });
}

Var add_row(Var a, Var bias) {
  Tape& t = tape_of(a);
  const Matrix& bv = bias.value();
  require(bv.rows() == 1 && bv.cols() == a.cols(), "add_row: bias shape mismatch");
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return t.record(std::move(out), {a, bias}, [a, bias](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a)) t.grad(a) += g;
    if (t.requires_grad(bias)) {
      Matrix& gb = t.grad(bias);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
    }
  });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  Matrix out = a.value();
  out *= s;
  return t.record(std::move(out), {a}, [a, s](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  require_same_shape(av, bv, "mul");
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return t.record(std::move(out), {a, b}, [a, b](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a)) {
      const Matrix& bv = t.value(b);
      Matrix& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      const Matrix& av = t.value(a);
      Matrix& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var gelu(Var a) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu(av[i]);
  return t.record(std::move(out), {a}, [a](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    const Matrix& av = t.value(a);
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * gelu_derivative(av[i]);
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(av[i]);
  return t.record(std::move(out), {a}, [a](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  const std::size_t rows = xv.rows();
  const std::size_t cols = xv.cols();
  require(gain.rows() == 1 && gain.cols() == cols && bias.rows() == 1 && bias.cols() == cols,
          "layer_norm: gain/bias shape mismatch");
  require(eps > 0.0, "layer_norm: eps must be positive");
  const Matrix& gv = gain.value();
  const Matrix& bv = bias.value();

  // Normalized inputs and inverse std per row, kept for the backward pass.
  Matrix xhat(rows, cols);
  std::vector<double> inv_std(rows);
  Matrix out(rows, cols);
  const auto n = static_cast<double>(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto xr = xv.row(r);
    double mean = 0.0;
    for (double v : xr) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : xr) var += (v - mean) * (v - mean);
    var /= n;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat(r, c) = (xr[c] - mean) * inv_std[r];
      out(r, c) = gv[c] * xhat(r, c) + bv[c];
    }
  }
  return t.record(std::move(out), {x, gain, bias},
                  [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      Tape& t, Var self) {
                    const Matrix& g = t.grad(self);
                    const std::size_t rows = g.rows();
                    const std::size_t cols = g.cols();
                    if (t.requires_grad(gain)) {
                      Matrix& gg = t.grad(gain);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) gg[c] += g(r, c) * xhat(r, c);
                    }
                    if (t.requires_grad(bias)) {
                      Matrix& gb = t.grad(bias);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) gb[c] += g(r, c);
                    }
                    if (t.requires_grad(x)) {
                      const Matrix& gv = t.value(gain);
                      Matrix& gx = t.grad(x);
                      const auto n = static_cast<double>(cols);
                      std::vector<double> dxhat(cols);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double mean_d = 0.0;
                        double mean_dx = 0.0;
                        for (std::size_t c = 0; c < cols; ++c) {
                          dxhat[c] = g(r, c) * gv[c];
                          mean_d += dxhat[c];
                          mean_dx += dxhat[c] * xhat(r, c);
                        }
                        mean_d /= n;
                        mean_dx /= n;
                        for (std::size_t c = 0; c < cols; ++c)
                          gx(r, c) += inv_std[r] * (dxhat[c] - mean_d - xhat(r, c) * mean_dx);
                      }
                    }
                  });
}

Var softmax_masked(Var x, const std::vector<double>& mask) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  require(mask.size() == xv.cols(), "softmax_masked: mask length mismatch");
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const auto p = softmax_masked(xv.row(r), mask);
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return t.record(std::move(out), {x}, [x](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix& gx = t.grad(x);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += y(r, c) * g(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  return t.record(kernels::transpose(a.value()), {a}, [a](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(c, r) += g(r, c);
  });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  Tape& t = tape_of(a);
  const Matrix& av = a.value();
  require(start + count <= av.cols(), "slice_cols: range out of bounds");
  Matrix out(av.rows(), count);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = av(r, start + c);
  return t.record(std::move(out), {a}, [a, start](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    Matrix& ga = t.grad(a);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) ga(r, start + c) += g(r, c);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  Tape& t = tape_of(parts.front());
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    require(p.rows() == rows, "concat_cols: row count mismatch");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, offset + c) = pv(r, c);
    offset += pv.cols();
  }
  return t.record(std::move(out), parts, [parts](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    std::size_t offset = 0;
    for (const Var& p : parts) {
      const std::size_t pc = t.value(p).cols();
      if (t.requires_grad(p)) {
        Matrix& gp = t.grad(p);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < pc; ++c) gp(r, c) += g(r, offset + c);
      }
      offset += pc;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require(p.cols() == cols, "concat_rows: column count mismatch");
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const Var& p : parts) {
    const auto d = p.value().data();
    data.insert(data.end(), d.begin(), d.end());
  }
  return t.record(Matrix(rows, cols, std::move(data)), parts, [parts](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    std::size_t offset = 0;
    for (const Var& p : parts) {
      const std::size_t n = t.value(p).size();
      if (t.requires_grad(p)) {
        Matrix& gp = t.grad(p);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[offset + i];
      }
      offset += n;
    }
  });
}

Var gather_rows(Var table, const std::vector<int>& ids) {
  Tape& t = tape_of(table);
  const Matrix& tv = table.value();
  Matrix out(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    require(ids[r] >= 0 && static_cast<std::size_t>(ids[r]) < tv.rows(),
            "gather_rows: index out of range");
    const auto src = tv.row(static_cast<std::size_t>(ids[r]));
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return t.record(std::move(out), {table}, [table, ids](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    Matrix& gt = t.grad(table);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      auto dst = gt.row(static_cast<std::size_t>(ids[r]));
      const auto src = g.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var weighted_sum(Var weights, const std::vector<Var>& parts) {
  require(!parts.empty(), "weighted_sum: no inputs");
  Tape& t = tape_of(weights);
  const Matrix& w = weights.value();
  require(w.rows() == 1 && w.cols() == parts.size(), "weighted_sum: weight count mismatch");
  Matrix out(parts.front().rows(), parts.front().cols());
  for (std::size_t j = 0; j < parts.size(); ++j) {
    const Matrix& pv = parts[j].value();
    require_same_shape(out, pv, "weighted_sum");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w[j] * pv[i];
  }
  std::vector<Var> inputs = parts;
  inputs.push_back(weights);
  return t.record(std::move(out), inputs, [weights, parts](Tape& t, Var self) {
    const Matrix& g = t.grad(self);
    const Matrix& w = t.value(weights);
    const bool need_w = t.requires_grad(weights);
    for (std::size_t j = 0; j < parts.size(); ++j) {
      const Matrix& pv = t.value(parts[j]);
      if (need_w) {
        double s = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * pv[i];
        t.grad(weights)[j] += s;
      }
      if (t.requires_grad(parts[j])) {
        Matrix& gp = t.grad(parts[j]);
        for (std::size_t i = 0; i < g.size(); ++i) gp[i] += w[j] * g[i];
      }
    }
  });
}

Var bce_with_logits(Var logit, double label) {
  Tape& t = tape_of(logit);
  require(logit.rows() == 1 && logit.cols() == 1, "bce_with_logits: expects a 1x1 logit");
  const double z = logit.value()[0];
  const double loss = std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
  return t.record(Matrix(1, 1, loss), {logit}, [logit, label](Tape& t, Var self) {
    const double z = t.value(logit)[0];
    t.grad(logit)[0] += t.grad(self)[0] * (sigmoid(z) - label);
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return t.record(Matrix(1, 1, s), {a}, [a](Tape& t, Var self) {
    const double g = t.grad(self)[0];
    Matrix& ga = t.grad(a);
    for (double& v : ga.data()) v += g;
  });
}

Var dropout(Var x, double p, Rng* rng) {
  if (rng == nullptr || p <= 0.0) return x;
  require(p < 1.0, "dropout probability must be below 1");
  Tape& t = tape_of(x);
  Matrix mask(x.rows(), x.cols());
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  for (double& m : mask.data()) m = keep(*rng) ? s : 0.0;
  return mul(x, t.constant(std::move(mask)));
}

}  // namespace alfia::ops
