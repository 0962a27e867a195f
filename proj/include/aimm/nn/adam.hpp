#pragma once

#include <cstdint>
#include <vector>

#include "aimm/nn/layers.hpp"

namespace aimm::nn {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam without weight decay. Moments and step counts are kept per parameter;
// a parameter that received no gradient on a step is left untouched, moments
// included, so heads of tasks absent from a batch do not drift.
class Adam {
 public:
  Adam() = default;
  Adam(ParamList<float> params, AdamOptions options);

  void step();
  void zero_grad();

  const ParamList<float>& params() const noexcept { return params_; }
  const AdamOptions& options() const noexcept { return options_; }

  // Optimizer state for checkpointing.
  std::vector<Tensor<float>>& first_moments() noexcept { return m_; }
  std::vector<Tensor<float>>& second_moments() noexcept { return v_; }
  std::vector<std::uint64_t>& step_counts() noexcept { return t_; }

 private:
  ParamList<float> params_;
  AdamOptions options_;
  std::vector<Tensor<float>> m_, v_;
  std::vector<std::uint64_t> t_;
};

}  // namespace aimm::nn
