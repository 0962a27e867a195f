#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <vector>

#include "aimm/instr/instructions.hpp"
#include "aimm/io/bundle.hpp"
#include "aimm/nn/layers.hpp"

namespace aimm::bb {

struct BackboneConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t ffn = 256;
  std::size_t vocab = instr::kVocabSize;
  std::size_t max_len = 8;

  void validate() const;
  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

void to_json(nlohmann::json& j, const BackboneConfig& c);
void from_json(const nlohmann::json& j, BackboneConfig& c);

// Low-rank update for one frozen matrix W0 (a × b): A is a × r, B is r × b.
template <typename T>
struct LoraAdapter {
  ad::Var<T> a;
  ad::Var<T> b;
  std::size_t rank() const { return a.cols(); }
};

// W0 + A·B. Throws ConfigError if the rank is not below both dimensions.
template <typename T>
ad::Var<T> apply_lora(const ad::Var<T>& w0, const LoraAdapter<T>& lora);

// LoRA on Wq and Wk of every layer.
template <typename T>
struct LoraSet {
  std::vector<LoraAdapter<T>> q;
  std::vector<LoraAdapter<T>> k;

  // A ~ N(0, 0.02²), B = 0.
  static LoraSet init(const BackboneConfig& cfg, std::size_t rank, std::uint64_t seed);
  nn::ParamList<T> params() const;
};

template <typename T>
struct Block {
  ad::Var<T> ln1_gain, ln1_bias;
  ad::Var<T> wq, wk, wv, wo;
  ad::Var<T> ln2_gain, ln2_bias;
  nn::Linear<T> ffn_in, ffn_out;
};

template <typename T>
struct Backbone {
  BackboneConfig config;
  ad::Var<T> token_embedding;     // vocab × d_model
  ad::Var<T> position_embedding;  // max_len × d_model
  std::vector<Block<T>> blocks;
  ad::Var<T> final_gain, final_bias;
  // Number of forward passes run; lets callers prove a path skipped the
  // backbone.
  mutable std::size_t forward_calls = 0;

  static Backbone init(const BackboneConfig& cfg, std::uint64_t seed);

  // x packs B sequences of length seq as [B·seq × d_model]. Adds positional
  // embeddings, runs the causal pre-norm blocks and the final norm.
  ad::Var<T> forward(const ad::Var<T>& x, std::size_t seq, const LoraSet<T>* lora = nullptr) const;
  // Output at the last position of each sequence: [B × d_model].
  ad::Var<T> last_output(const ad::Var<T>& x, std::size_t seq,
                         const LoraSet<T>* lora = nullptr) const;
  // Next-token logits with the output projection tied to the token table.
  ad::Var<T> lm_logits(std::span<const int> ids, std::size_t seq,
                       const LoraSet<T>* lora = nullptr) const;

  nn::ParamList<T> params() const;
};

// Deterministic templated sentences over the vocabulary, each exactly
// max_len words.
std::vector<std::vector<int>> synthetic_corpus(std::uint64_t seed, std::size_t count,
                                               std::size_t length, const instr::Vocab& vocab);

struct PretrainOptions {
  std::size_t steps = 1500;
  std::size_t batch = 32;
  double lr = 3e-3;
  std::uint64_t seed = 0;
};

struct PretrainReport {
  double initial_perplexity = 0.0;
  double final_perplexity = 0.0;
  std::vector<double> loss;
};

// Perplexity of next-token prediction over held-out sentences.
double perplexity(const Backbone<float>& bb, const std::vector<std::vector<int>>& sentences);

Backbone<float> pretrain_lm(const BackboneConfig& cfg, const PretrainOptions& options,
                            PretrainReport* report = nullptr);

// "AIMB": meta holds the config, layer count, vocabulary and its hash.
io::Bundle backbone_bundle(const Backbone<float>& bb, const instr::Vocab& vocab,
                           const nlohmann::json& extra = nlohmann::json::object());
Backbone<float> backbone_from_bundle(const io::Bundle& b, const instr::Vocab& vocab);
void save_backbone(const std::filesystem::path& path, const Backbone<float>& bb,
                   const instr::Vocab& vocab, const nlohmann::json& extra = nlohmann::json::object());
Backbone<float> load_backbone(const std::filesystem::path& path, const instr::Vocab& vocab);

// "AIML": one LoRA set; meta holds rank and layer count.
void save_lora(const std::filesystem::path& path, const LoraSet<float>& lora);
LoraSet<float> load_lora(const std::filesystem::path& path, const BackboneConfig& cfg);

}  // namespace aimm::bb
