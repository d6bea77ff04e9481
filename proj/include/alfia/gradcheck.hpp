#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "alfia/tape.hpp"

namespace alfia {

using ScalarFunction = std::function<double()>;

// Central differences (f(p + h) - f(p - h)) / 2h for every entry of p, or
// the 4-point stencil (8 d(h) - d(2h)) / 12h when stencil = 4.
// f must read p.value and be deterministic. p.value is restored exactly.
Matrix finite_difference_gradient(const ScalarFunction& f, Parameter& p, double h = 1e-5,
                                  int stencil = 2);

// Same estimate restricted to the listed flat indices.
std::vector<double> finite_difference_entries(const ScalarFunction& f, Parameter& p,
                                              const std::vector<std::size_t>& indices,
                                              double h = 1e-5, int stencil = 2);

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true
// gradient is numerically zero from dominating through rounding noise.
double relative_error(double analytic, double numeric, double floor = 1e-8);

struct GradCheckEntry {
  std::string parameter;
  std::size_t checked = 0;
  double max_relative_error = 0.0;
};

struct GradCheckOptions {
  double step = 1e-5;
  int stencil = 2;
  double floor = 1e-8;  // relative_error denominator floor
  // Entries checked per parameter; 0 checks every entry.
  std::size_t max_entries_per_parameter = 0;
  std::uint64_t seed = 42;
};

// Compares analytic gradients (from one backward pass) against central
// differences for each listed parameter. When sampling, the entry with the
// largest analytic gradient is always included.
std::vector<GradCheckEntry> check_gradients(const ScalarFunction& f, const Gradients& analytic,
                                            const std::vector<Parameter*>& params,
                                            const GradCheckOptions& options);

}  // namespace alfia
