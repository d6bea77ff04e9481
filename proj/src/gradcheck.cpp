#include "alfia/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "alfia/error.hpp"
#include "alfia/random.hpp"

namespace alfia {

namespace {

double evaluate_at(const ScalarFunction& f, Parameter& p, std::size_t i, double x) {
  p.value[i] = x;
  return f();
}

double central_difference(const ScalarFunction& f, Parameter& p, std::size_t i, double h,
                          int stencil) {
  const double x = p.value[i];
  const double d1 = evaluate_at(f, p, i, x + h) - evaluate_at(f, p, i, x - h);
  double out = d1 / (2.0 * h);
  if (stencil == 4) {
    // Richardson combination: truncation error O(h^4) instead of O(h^2).
    const double d2 = evaluate_at(f, p, i, x + 2.0 * h) - evaluate_at(f, p, i, x - 2.0 * h);
    out = (8.0 * d1 - d2) / (12.0 * h);
  }
  p.value[i] = x;
  return out;
}

}  // namespace

namespace {
void check_step(double h, int stencil) {
  require(h > 0.0, "finite difference step must be positive");
  require(stencil == 2 || stencil == 4, "finite difference stencil must be 2 or 4 points");
}
}  // namespace

Matrix finite_difference_gradient(const ScalarFunction& f, Parameter& p, double h, int stencil) {
  check_step(h, stencil);
  Matrix g(p.value.rows(), p.value.cols());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = central_difference(f, p, i, h, stencil);
  return g;
}

std::vector<double> finite_difference_entries(const ScalarFunction& f, Parameter& p,
                                              const std::vector<std::size_t>& indices, double h,
                                              int stencil) {
  check_step(h, stencil);
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    require(i < p.value.size(), "finite difference index out of range");
    out.push_back(central_difference(f, p, i, h, stencil));
  }
  return out;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<GradCheckEntry> check_gradients(const ScalarFunction& f, const Gradients& analytic,
                                            const std::vector<Parameter*>& params,
                                            const GradCheckOptions& options) {
  std::vector<GradCheckEntry> report;
  Rng rng = derive_rng(options.seed, {0x67636b});
  for (Parameter* p : params) {
    const Matrix* g = analytic.find(*p);
    require(g != nullptr, "no analytic gradient recorded for " + p->name);
    const std::size_t n = p->value.size();
    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (options.max_entries_per_parameter != 0 && n > options.max_entries_per_parameter) {
      const auto largest = static_cast<std::size_t>(
          std::max_element(g->data().begin(), g->data().end(),
                           [](double a, double b) { return std::abs(a) < std::abs(b); }) -
          g->data().begin());
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(options.max_entries_per_parameter - 1);
      if (std::find(indices.begin(), indices.end(), largest) == indices.end())
        indices.push_back(largest);
      else
        indices.push_back(indices.front() == 0 ? 1 : 0);
      std::sort(indices.begin(), indices.end());
      indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    }
    const auto numeric = finite_difference_entries(f, *p, indices, options.step, options.stencil);
    GradCheckEntry entry{p->name, indices.size(), 0.0};
    for (std::size_t k = 0; k < indices.size(); ++k)
      entry.max_relative_error =
          std::max(entry.max_relative_error, relative_error((*g)[indices[k]], numeric[k], options.floor));
    report.push_back(entry);
  }
  return report;
}

}  // namespace alfia
