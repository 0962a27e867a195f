#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "aimm/backbone/backbone.hpp"
#include "aimm/enc/encoders.hpp"
#include "aimm/tasks/tasks.hpp"

namespace aimm::harness {

enum class Variant { full, fp, sp, te, tc, wl, rl, wm };
inline constexpr std::array<Variant, 8> kAllVariants = {
    Variant::full, Variant::fp, Variant::sp, Variant::te,
    Variant::tc,   Variant::wl, Variant::rl, Variant::wm};

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);  // ConfigError on unknown names

// Parameter groups tracked by the freeze census.
inline constexpr std::array<std::string_view, 7> kGroups = {
    "epnn", "cfenn", "adapters", "backbone", "lora", "prefix", "heads"};

struct Layout {
  bool has_prefix = true;
  bool shared_prefix = false;
  bool has_lora = true;
  bool uses_backbone = true;
  bool random_backbone = false;
  bool train_epnn = false;
  bool train_cfenn = false;

  instr::InstructionMode mode() const;
  // Groups whose values must change during training.
  std::vector<std::string> trainable_groups() const;
};

Layout layout_for(Variant v);

struct ModelDims {
  std::size_t n_t = 16;
  std::size_t lora_rank = 4;
};

// Encoders, adapters, backbone, LoRA, prefixes and heads for one run. The
// pretrained encoder and backbone weights are shared with the source
// objects, never copied, and stay frozen.
template <typename T>
struct Model {
  Variant variant = Variant::full;
  Layout layout;
  ModelDims dims;
  enc::EncoderPair<T> encoders;
  nn::Linear<T> env_adapter;
  nn::Linear<T> csi_adapter;
  bb::Backbone<T> backbone;
  bb::LoraSet<T> lora;              // empty without LoRA
  std::vector<ad::Var<T>> prefixes;  // 5, 1 (shared) or none
  std::vector<tasks::TaskHead<T>> heads;  // indexed by TaskId

  // `backbone` is the pretrained one; rl swaps in a random frozen one seeded
  // from `seed`. te/tc replace one encoder tower with fresh weights.
  static Model build(Variant variant, const enc::EncoderPair<T>& encoders,
                     const bb::Backbone<T>& backbone, const ModelDims& dims, std::uint64_t seed);

  const tasks::TaskHead<T>& head(instr::TaskId t) const { return heads[std::size_t(t)]; }
  const nn::Linear<T>& adapter(instr::TaskId t) const;
  bool encoder_trainable(instr::TaskId t) const;

  // Modality code for raw encoder inputs.
  ad::Var<T> encode(instr::TaskId t, const ad::Var<T>& inputs) const;
  // Head output from modality codes [B×d_enc].
  ad::Var<T> forward_codes(instr::TaskId t, const ad::Var<T>& codes) const;

  std::map<std::string, nn::ParamList<T>> groups() const;
  nn::ParamList<T> trainable_params() const;
  nn::ParamList<T> all_params() const;  // every group, in kGroups order
};

// Hash per census group.
template <typename T>
std::map<std::string, std::uint64_t> census(const Model<T>& m);

// Groups whose hash differs between two census snapshots.
std::vector<std::string> changed_groups(const std::map<std::string, std::uint64_t>& before,
                                        const std::map<std::string, std::uint64_t>& after);

// Temporarily marks every parameter of a model as constant, so inference
// builds no backward closures.
template <typename T>
class InferenceGuard {
 public:
  explicit InferenceGuard(const Model<T>& m);
  ~InferenceGuard();
  InferenceGuard(const InferenceGuard&) = delete;
  InferenceGuard& operator=(const InferenceGuard&) = delete;

 private:
  nn::ParamList<T> params_;
  std::vector<bool> flags_;
};

}  // namespace aimm::harness
