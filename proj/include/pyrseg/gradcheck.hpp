#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pyrseg/tensor.hpp"

namespace pyrseg {

using GradFunction = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradcheckOptions {
  double step = 1e-2;       // central-difference step
  double tolerance = 1e-3;  // on the relative error below
};

// Compares reverse-mode gradients of L = sum(R * f(inputs)), R a fixed random
// projection, against central differences for every element of every input
// that requires a gradient. Returns the worst per-input relative error
// |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|, 1e-6), with
// vector 2-norms.
double gradient_error(const GradFunction& f, const std::vector<Tensor>& inputs,
                      std::uint64_t seed, double step = 1e-2);

struct GradcheckResult {
  std::string op;
  double worst_error = 0.0;
  int cases = 0;
  bool passed = false;
};

// Finite-difference suite over every differentiable op on small random cases
// whose inputs stay clear of the kinks of piecewise-linear ops.
std::vector<GradcheckResult> gradcheck_suite(std::uint64_t seed,
                                             const GradcheckOptions& options = {});

}  // namespace pyrseg
