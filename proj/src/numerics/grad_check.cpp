#include "aimm/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace aimm::ad {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double grad_check(const std::function<Var<double>(const Var<double>&)>& f,
                  const Tensor<double>& x, const GradCheckOptions& options) {
  auto leaf = Var<double>::leaf(x, true);
  return grad_check_leaves([&] { return f(leaf); }, {leaf}, options);
}

double grad_check_leaves(const std::function<Var<double>()>& loss,
                         const std::vector<Var<double>>& leaves,
                         const GradCheckOptions& options) {
  for (auto leaf : leaves) leaf.zero_grad();
  backward(loss());

  Rng rng(options.seed, {0x67726164ULL});
  double worst = 0.0;
  for (auto leaf : leaves) {
    auto& values = leaf.mutable_value();
    const std::size_t n = values.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.coords_per_leaf > 0 && options.coords_per_leaf < n) {
      for (std::size_t i = 0; i < options.coords_per_leaf; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(
            static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(options.coords_per_leaf);
    }
    for (std::size_t i : coords) {
      const double analytic = leaf.has_grad() ? leaf.grad()[i] : 0.0;
      const double original = values[i];
      const double h = options.step * (1.0 + std::abs(original));
      auto at = [&](double offset) {
        values[i] = original + offset;
        const double v = loss().item();
        values[i] = original;
        return v;
      };
      const double numeric =
          options.fourth_order
              ? (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12.0 * h)
              : (at(h) - at(-h)) / (2.0 * h);
      worst = std::max(worst, relative_error(analytic, numeric, options.floor));
    }
  }
  return worst;
}

}  // namespace aimm::ad
