#include "aimm/nn/layers.hpp"

#include <cmath>

#include "aimm/io/binary.hpp"

namespace aimm::nn {

template <typename T>
Tensor<T> normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(stddev * rng.normal());
  return t;
}

template <typename T>
Linear<T> Linear<T>::init(std::size_t in, std::size_t out, Rng& rng, double gain) {
  Linear l;
  l.weight = ad::Var<T>::leaf(normal_tensor<T>({in, out}, gain / std::sqrt(double(in)), rng), true);
  l.bias = ad::Var<T>::leaf(Tensor<T>({out}), true);
  return l;
}

template <typename T>
Linear<T> Linear<T>::zeros(std::size_t in, std::size_t out) {
  Linear l;
  l.weight = ad::Var<T>::leaf(Tensor<T>({in, out}), true);
  l.bias = ad::Var<T>::leaf(Tensor<T>({out}), true);
  return l;
}

template <typename T>
ad::Var<T> Linear<T>::forward(const ad::Var<T>& x) const {
  if (x.cols() != in_dim())
    throw DimensionError("linear layer expects width " + std::to_string(in_dim()) + ", got " +
                         std::to_string(x.cols()));
  return ad::add_row(ad::matmul(x, weight), bias);
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
Mlp<T> Mlp<T>::init(const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw ConfigError("an MLP needs at least an input and output width");
  Mlp m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    m.layers.push_back(Linear<T>::init(widths[i], widths[i + 1], rng, last ? 1.0 : std::sqrt(2.0)));
  }
  return m;
}

template <typename T>
ad::Var<T> Mlp<T>::forward(const ad::Var<T>& x) const {
  ad::Var<T> h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(h);
    if (i + 1 < layers.size()) h = ad::gelu(h);
  }
  return h;
}

template <typename T>
void Mlp<T>::collect(const std::string& prefix, ParamList<T>& out) const {
  for (std::size_t i = 0; i < layers.size(); ++i)
    layers[i].collect(prefix + "." + std::to_string(i), out);
}

template <typename T>
void set_trainable(const ParamList<T>& params, bool on) {
  // written only on change, so frozen weights shared between threads are
  // never stored to
  for (const auto& p : params)
    if (p.var.ptr()->requires_grad != on) p.var.ptr()->requires_grad = on;
}

template <typename T>
std::size_t param_count(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var.value().size();
  return n;
}

template <typename T>
std::uint64_t param_hash(const ParamList<T>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    const auto& v = p.var.value();
    h = io::fnv1a({reinterpret_cast<const std::uint8_t*>(v.data()), v.size() * sizeof(T)}, h);
  }
  return h;
}

template <typename From, typename To>
void copy_values(const ParamList<From>& src, const ParamList<To>& dst) {
  if (src.size() != dst.size()) throw DimensionError("parameter lists differ in length");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].name != dst[i].name || src[i].var.shape() != dst[i].var.shape())
      throw DimensionError("parameter mismatch at " + src[i].name);
    dst[i].var.ptr()->value = src[i].var.value().template cast<To>();
  }
}

template <typename T>
Tensor<T> take_rows(const Tensor<T>& m, std::span<const std::size_t> idx) {
  const std::size_t c = m.cols();
  Tensor<T> out({idx.size(), c});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= m.rows()) throw DimensionError("row index out of range");
    std::copy_n(m.data() + idx[i] * c, c, out.data() + i * c);
  }
  return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

#define AIMM_INSTANTIATE_NN(T)                                                       \
  template Tensor<T> normal_tensor<T>(Shape, double, Rng&);                          \
  template struct Linear<T>;                                                         \
  template struct Mlp<T>;                                                            \
  template void set_trainable<T>(const ParamList<T>&, bool);                         \
  template std::size_t param_count<T>(const ParamList<T>&);                          \
  template std::uint64_t param_hash<T>(const ParamList<T>&);                         \
  template Tensor<T> take_rows<T>(const Tensor<T>&, std::span<const std::size_t>);

AIMM_INSTANTIATE_NN(float)
AIMM_INSTANTIATE_NN(double)

template void copy_values<float, double>(const ParamList<float>&, const ParamList<double>&);
template void copy_values<double, float>(const ParamList<double>&, const ParamList<float>&);
template void copy_values<float, float>(const ParamList<float>&, const ParamList<float>&);

}  // namespace aimm::nn
