#pragma once

#include <functional>
#include <vector>

#include "aimm/numerics/autodiff.hpp"
#include "aimm/numerics/rng.hpp"

namespace aimm::ad {

struct GradCheckOptions {
  double step = 1e-6;  // per coordinate: step · (1 + |x_i|)
  // Denominator floor for the relative error, so coordinates whose true
  // gradient is zero are judged by absolute error instead.
  double floor = 1e-6;
  // 0 = every coordinate; otherwise this many coordinates per leaf, chosen
  // by the rng.
  std::size_t coords_per_leaf = 0;
  std::uint64_t seed = 0;
  // Five-point stencil (−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h.
  // Its O(h⁴) truncation error allows a larger step, which keeps rounding
  // noise down on deep graphs.
  bool fourth_order = false;
};

// Relative error between an analytic and a numeric derivative.
double relative_error(double analytic, double numeric, double floor);

// Compares the reverse-mode gradient of f at x with central differences
// (f(x+h) − f(x−h)) / 2h coordinate by coordinate and returns the largest
// relative error.
double grad_check(const std::function<Var<double>(const Var<double>&)>& f,
                  const Tensor<double>& x, const GradCheckOptions& options = {});

// Same check over several persistent leaves that `loss` reads when it builds
// its graph. Leaf values are perturbed in place and restored.
double grad_check_leaves(const std::function<Var<double>()>& loss,
                         const std::vector<Var<double>>& leaves,
                         const GradCheckOptions& options = {});

}  // namespace aimm::ad
