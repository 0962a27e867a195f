#include "aimm/nn/adam.hpp"

#include <cmath>

namespace aimm::nn {

Adam::Adam(ParamList<float> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
    t_.push_back(0);
  }
}

void Adam::step() {
  const double b1 = options_.beta1, b2 = options_.beta2;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& node = params_[i].var.node();
    if (node.grad.empty()) continue;
    const std::uint64_t t = ++t_[i];
    const double c1 = 1.0 - std::pow(b1, double(t));
    const double c2 = 1.0 - std::pow(b2, double(t));
    const float step = static_cast<float>(options_.lr / c1);
    const float inv_c2 = static_cast<float>(1.0 / c2);
    const float eps = static_cast<float>(options_.eps);
    auto& w = node.value.values();
    const auto& g = node.grad.values();
    auto& m = m_[i].values();
    auto& v = v_[i].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = float(b1) * m[k] + float(1.0 - b1) * g[k];
      v[k] = float(b2) * v[k] + float(1.0 - b2) * g[k] * g[k];
      w[k] -= step * m[k] / (std::sqrt(v[k] * inv_c2) + eps);
    }
  }
}

void Adam::zero_grad() {
  for (const auto& p : params_) p.var.ptr()->grad = Tensor<float>();
}

}  // namespace aimm::nn
