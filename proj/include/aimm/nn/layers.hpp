#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aimm/numerics/autodiff.hpp"
#include "aimm/numerics/rng.hpp"

namespace aimm::nn {

template <typename T>
struct NamedParam {
  std::string name;
  ad::Var<T> var;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

// Seeded N(0, stddev²) tensor.
template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, Rng& rng);

// y = x·W + b with W stored in×out.
template <typename T>
struct Linear {
  ad::Var<T> weight;
  ad::Var<T> bias;

  // Weights N(0, gain²/in), bias zero.
  static Linear init(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0);
  static Linear zeros(std::size_t in, std::size_t out);

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
  ad::Var<T> forward(const ad::Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

// Linear layers with GELU between them (none after the last).
template <typename T>
struct Mlp {
  std::vector<Linear<T>> layers;

  static Mlp init(const std::vector<std::size_t>& widths, Rng& rng);
  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
  ad::Var<T> forward(const ad::Var<T>& x) const;
  void collect(const std::string& prefix, ParamList<T>& out) const;
};

template <typename T>
void set_trainable(const ParamList<T>& params, bool on);

template <typename T>
std::size_t param_count(const ParamList<T>& params);

// FNV-1a over the raw bytes of every value, in list order.
template <typename T>
std::uint64_t param_hash(const ParamList<T>& params);

// Copies values between lists with matching names and shapes, converting
// the element type.
template <typename From, typename To>
void copy_values(const ParamList<From>& src, const ParamList<To>& dst);

// Rows idx[0], idx[1], ... of a matrix.
template <typename T>
Tensor<T> take_rows(const Tensor<T>& m, std::span<const std::size_t> idx);

// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

}  // namespace aimm::nn
