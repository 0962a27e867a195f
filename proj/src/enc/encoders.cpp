#include "aimm/enc/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "aimm/nn/adam.hpp"

namespace aimm::enc {

void to_json(nlohmann::json& j, const EncoderDims& d) {
  j = {{"env_in", d.env_in}, {"csi_in", d.csi_in}, {"hidden", d.hidden}, {"d_enc", d.d_enc}};
}

void from_json(const nlohmann::json& j, EncoderDims& d) {
  j.at("env_in").get_to(d.env_in);
  j.at("csi_in").get_to(d.csi_in);
  j.at("hidden").get_to(d.hidden);
  j.at("d_enc").get_to(d.d_enc);
}

namespace {
constexpr std::uint64_t kEpnnStream = 0x45504e4e;   // "EPNN"
constexpr std::uint64_t kCfennStream = 0x4346454e;  // "CFEN"
}  // namespace

template <typename T>
nn::Mlp<T> EncoderPair<T>::init_epnn(const EncoderDims& d, std::uint64_t seed) {
  Rng rng(seed, {kEpnnStream});
  return nn::Mlp<T>::init({d.env_in, d.hidden, d.hidden, d.d_enc}, rng);
}

template <typename T>
nn::Mlp<T> EncoderPair<T>::init_cfenn(const EncoderDims& d, std::uint64_t seed) {
  Rng rng(seed, {kCfennStream});
  return nn::Mlp<T>::init({d.csi_in, d.hidden, d.hidden, d.d_enc}, rng);
}

template <typename T>
EncoderPair<T> EncoderPair<T>::init(const EncoderDims& dims, std::uint64_t seed) {
  EncoderPair e;
  e.dims = dims;
  e.epnn = init_epnn(dims, seed);
  e.cfenn = init_cfenn(dims, seed);
  e.logit_scale = ad::Var<T>::leaf(
      Tensor<T>({1}, {static_cast<T>(std::log(1.0 / kInitialTemperature))}), true);
  return e;
}

template <typename T>
ad::Var<T> EncoderPair<T>::encode_environment(const ad::Var<T>& x) const {
  if (x.cols() != dims.env_in)
    throw DimensionError("environment input must have " + std::to_string(dims.env_in) +
                         " features, got " + std::to_string(x.cols()));
  return ad::l2_normalize_rows(epnn.forward(x));
}

template <typename T>
ad::Var<T> EncoderPair<T>::encode_channel(const ad::Var<T>& x) const {
  if (x.cols() != dims.csi_in)
    throw DimensionError("channel input must have " + std::to_string(dims.csi_in) +
                         " features, got " + std::to_string(x.cols()));
  return ad::l2_normalize_rows(cfenn.forward(x));
}

template <typename T>
nn::ParamList<T> EncoderPair<T>::epnn_params() const {
  nn::ParamList<T> p;
  epnn.collect("epnn", p);
  return p;
}

template <typename T>
nn::ParamList<T> EncoderPair<T>::cfenn_params() const {
  nn::ParamList<T> p;
  cfenn.collect("cfenn", p);
  return p;
}

template <typename T>
nn::ParamList<T> EncoderPair<T>::all_params() const {
  auto p = epnn_params();
  for (auto& q : cfenn_params()) p.push_back(q);
  p.push_back({"logit_scale", logit_scale});
  return p;
}

template <typename T>
ad::Var<T> info_nce(const ad::Var<T>& env_codes, const ad::Var<T>& csi_codes,
                    const ad::Var<T>& logit_scale) {
  const std::size_t b = env_codes.rows();
  if (b < 2) throw PreconditionError("contrastive batch needs at least 2 pairs");
  if (csi_codes.rows() != b || csi_codes.cols() != env_codes.cols())
    throw DimensionError("contrastive batch halves disagree in shape");
  std::vector<int> labels(b);
  std::iota(labels.begin(), labels.end(), 0);
  const auto logits = ad::mul_scalar(ad::matmul_bt(env_codes, csi_codes), ad::exp(logit_scale));
  const auto forward = ad::cross_entropy(logits, std::span<const int>(labels));
  const auto backward = ad::cross_entropy(ad::transpose(logits), std::span<const int>(labels));
  return ad::scale(ad::add(forward, backward), T(0.5));
}

Tensor<float> environment_inputs(const std::vector<scene::SampleRecord>& records) {
  Tensor<float> x({records.size(), scene::kEnvironmentWidth});
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto f = scene::environment_features(records[i]);
    std::copy(f.begin(), f.end(), x.data() + i * scene::kEnvironmentWidth);
  }
  return x;
}

Tensor<float> channel_inputs(const std::vector<scene::SampleRecord>& records, double csi_scale) {
  if (records.empty()) return Tensor<float>({0, 0});
  const std::size_t n_t = records.front().precoder.size() / 2;
  const std::size_t w = records.front().csi.size();
  if (n_t == 0 || w % (2 * n_t) != 0) throw DimensionError("CSI size is not a multiple of 2·n_t");
  const std::size_t n_c = w / (2 * n_t);
  using C = std::complex<double>;
  auto dft = [](std::size_t n) {
    std::vector<C> f(n * n);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        f[a * n + b] = std::polar(1.0 / std::sqrt(double(n)),
                                  -2.0 * std::numbers::pi * double(a * b % n) / double(n));
    return f;
  };
  const auto ft = dft(n_t), fc = dft(n_c);
  Tensor<float> x({records.size(), n_t * n_c});
  std::vector<C> h(n_t * n_c), tmp(n_t * n_c);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& raw = records[i].csi;
    if (raw.size() != w) throw DimensionError("records disagree in CSI size");
    for (std::size_t k = 0; k < n_t * n_c; ++k) h[k] = C(raw[2 * k], raw[2 * k + 1]) / csi_scale;
    for (std::size_t r = 0; r < n_t; ++r)
      for (std::size_t c = 0; c < n_c; ++c) {
        C acc = 0.0;
        for (std::size_t k = 0; k < n_c; ++k) acc += h[r * n_c + k] * fc[k * n_c + c];
        tmp[r * n_c + c] = acc;
      }
    for (std::size_t r = 0; r < n_t; ++r)
      for (std::size_t c = 0; c < n_c; ++c) {
        C acc = 0.0;
        for (std::size_t k = 0; k < n_t; ++k) acc += ft[r * n_t + k] * tmp[k * n_c + c];
        x.at(i, r * n_c + c) = static_cast<float>(std::abs(acc));
      }
  }
  return x;
}

EncoderPair<float> train_alignment(const Tensor<float>& env, const Tensor<float>& csi,
                                   double csi_scale, const EncoderDims& dims,
                                   const AlignOptions& options, AlignReport* report) {
  if (env.rows() != csi.rows()) throw DimensionError("alignment halves differ in length");
  if (env.rows() < 2 || options.batch < 2)
    throw PreconditionError("alignment needs batches of at least 2 pairs");
  auto enc = EncoderPair<float>::init(dims, options.seed);
  enc.csi_scale = csi_scale;
  nn::Adam opt(enc.all_params(), {.lr = options.lr});
  const std::size_t n = env.rows();
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    Rng rng(options.seed, {0x616c6967 /* "alig" */, epoch});
    const auto order = nn::shuffled_indices(n, rng);
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start + 1 < n; start += options.batch) {
      const std::size_t count = std::min(options.batch, n - start);
      if (count < 2) break;
      const std::span<const std::size_t> idx(order.data() + start, count);
      const auto xe = ad::Var<float>::constant(nn::take_rows(env, idx));
      const auto xc = ad::Var<float>::constant(nn::take_rows(csi, idx));
      const auto loss =
          info_nce(enc.encode_environment(xe), enc.encode_channel(xc), enc.logit_scale);
      opt.zero_grad();
      ad::backward(loss);
      opt.step();
      auto& s = enc.logit_scale.mutable_value()[0];
      s = std::clamp(s, 0.0f, static_cast<float>(kMaxLogitScale));
      total += loss.item();
      ++steps;
    }
    if (report) report->epoch_loss.push_back(total / double(std::max<std::size_t>(steps, 1)));
  }
  return enc;
}

RetrievalStats evaluate_retrieval(const EncoderPair<float>& enc, const Tensor<float>& env,
                                  const Tensor<float>& csi, std::size_t batch) {
  if (batch < 2) throw PreconditionError("retrieval batch needs at least 2 pairs");
  RetrievalStats st;
  std::size_t hits = 0, queries = 0, off = 0;
  double matched = 0.0, mismatched = 0.0;
  for (std::size_t start = 0; start + batch <= env.rows(); start += batch) {
    std::vector<std::size_t> idx(batch);
    std::iota(idx.begin(), idx.end(), start);
    const auto e = enc.encode_environment(ad::Var<float>::constant(nn::take_rows(env, idx)));
    const auto c = enc.encode_channel(ad::Var<float>::constant(nn::take_rows(csi, idx)));
    const auto sim = ad::matmul_bt(e, c).value();
    for (std::size_t i = 0; i < batch; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 0; j < batch; ++j) {
        if (sim.at(i, j) > sim.at(i, best)) best = j;
        if (i == j) {
          matched += sim.at(i, j);
        } else {
          mismatched += sim.at(i, j);
          ++off;
        }
      }
      hits += best == i ? 1 : 0;
      ++queries;
    }
    ++st.batches;
  }
  if (queries == 0) throw EvaluationError("held-out set smaller than one retrieval batch");
  st.top1 = double(hits) / double(queries);
  st.matched_cosine = matched / double(queries);
  st.mismatched_cosine = mismatched / double(off);
  return st;
}

io::Bundle encoders_bundle(const EncoderPair<float>& enc, const nn::ParamList<float>& extra) {
  io::Bundle b;
  b.meta = {{"dims", enc.dims},
            {"csi_scale", enc.csi_scale},
            {"frozen", {{"epnn", true}, {"cfenn", true}}}};
  io::add_params(b, enc.all_params());
  io::add_params(b, extra);
  return b;
}

EncoderPair<float> encoders_from_bundle(const io::Bundle& b) {
  EncoderPair<float> enc;
  try {
    enc = EncoderPair<float>::init(b.meta.at("dims").get<EncoderDims>(), 0);
    enc.csi_scale = b.meta.at("csi_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("encoder checkpoint header incomplete: ") + e.what());
  }
  io::load_params(b, enc.all_params());
  return enc;
}

void save_encoders(const std::filesystem::path& path, const EncoderPair<float>& enc,
                   const nn::ParamList<float>& extra) {
  io::save_bundle(path, "AIMW", encoders_bundle(enc, extra));
}

EncoderPair<float> load_encoders(const std::filesystem::path& path) {
  return encoders_from_bundle(io::load_bundle(path, "AIMW"));
}

template struct EncoderPair<float>;
template struct EncoderPair<double>;
template ad::Var<float> info_nce<float>(const ad::Var<float>&, const ad::Var<float>&,
                                        const ad::Var<float>&);
template ad::Var<double> info_nce<double>(const ad::Var<double>&, const ad::Var<double>&,
                                          const ad::Var<double>&);

}  // namespace aimm::enc
