#pragma once

#include <filesystem>
#include <vector>

#include "aimm/io/bundle.hpp"
#include "aimm/nn/layers.hpp"
#include "aimm/scene/sample.hpp"

namespace aimm::enc {

struct EncoderDims {
  std::size_t env_in = scene::kEnvironmentWidth;
  std::size_t csi_in = 16 * 16;  // angle-delay bins
  std::size_t hidden = 128;
  std::size_t d_enc = 32;
};

void to_json(nlohmann::json& j, const EncoderDims& d);
void from_json(const nlohmann::json& j, EncoderDims& d);

// EPNN (environment) and CFENN (channel) towers plus the contrastive logit
// scale. Each tower is a 3-layer MLP whose output is L2-normalized.
template <typename T>
struct EncoderPair {
  EncoderDims dims;
  nn::Mlp<T> epnn;
  nn::Mlp<T> cfenn;
  ad::Var<T> logit_scale;  // temperature = exp(−logit_scale)
  double csi_scale = 1.0;  // CSI entries are divided by this before encoding

  static EncoderPair init(const EncoderDims& dims, std::uint64_t seed);
  // Fresh random weights for one tower only; used when a benchmark retrains
  // it from scratch.
  static nn::Mlp<T> init_epnn(const EncoderDims& dims, std::uint64_t seed);
  static nn::Mlp<T> init_cfenn(const EncoderDims& dims, std::uint64_t seed);

  ad::Var<T> encode_environment(const ad::Var<T>& x) const;  // [B×env_in] → [B×d_enc]
  ad::Var<T> encode_channel(const ad::Var<T>& x) const;      // [B×csi_in] → [B×d_enc]

  nn::ParamList<T> epnn_params() const;
  nn::ParamList<T> cfenn_params() const;
  nn::ParamList<T> all_params() const;  // epnn, cfenn, logit_scale
};

inline constexpr double kInitialTemperature = 0.07;
inline constexpr double kMaxLogitScale = 4.605170185988091;  // log 100

// Symmetric InfoNCE over the B×B cosine-similarity matrix of matched rows.
template <typename T>
ad::Var<T> info_nce(const ad::Var<T>& env_codes, const ad::Var<T>& csi_codes,
                    const ad::Var<T>& logit_scale);

// Encoder inputs for a set of records.
Tensor<float> environment_inputs(const std::vector<scene::SampleRecord>& records);
// Magnitude of the angle-delay map F_t · (H / csi_scale) · F_c with unitary
// DFTs, n_t·n_c values per record (antenna bin major). Independent of the
// common CSI phase.
Tensor<float> channel_inputs(const std::vector<scene::SampleRecord>& records, double csi_scale);

struct AlignOptions {
  std::size_t epochs = 50;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct AlignReport {
  std::vector<double> epoch_loss;
};

EncoderPair<float> train_alignment(const Tensor<float>& env, const Tensor<float>& csi,
                                   double csi_scale, const EncoderDims& dims,
                                   const AlignOptions& options, AlignReport* report = nullptr);

struct RetrievalStats {
  double top1 = 0.0;            // env → csi retrieval inside each batch
  double matched_cosine = 0.0;  // mean over diagonal pairs
  double mismatched_cosine = 0.0;
  std::size_t batches = 0;
};

// Consecutive full batches of `batch` pairs; a trailing partial batch is
// ignored.
RetrievalStats evaluate_retrieval(const EncoderPair<float>& enc, const Tensor<float>& env,
                                  const Tensor<float>& csi, std::size_t batch = 64);

// "AIMW" checkpoint: meta holds dims, csi_scale and freeze flags. Extra
// parameter lists (adapters) may ride along.
void save_encoders(const std::filesystem::path& path, const EncoderPair<float>& enc,
                   const nn::ParamList<float>& extra = {});
EncoderPair<float> load_encoders(const std::filesystem::path& path);
io::Bundle encoders_bundle(const EncoderPair<float>& enc, const nn::ParamList<float>& extra = {});
EncoderPair<float> encoders_from_bundle(const io::Bundle& b);

}  // namespace aimm::enc
