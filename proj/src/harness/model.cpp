#include "aimm/harness/model.hpp"

namespace aimm::harness {

using instr::TaskId;

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::fp: return "fp";
    case Variant::sp: return "sp";
    case Variant::te: return "te";
    case Variant::tc: return "tc";
    case Variant::wl: return "wl";
    case Variant::rl: return "rl";
    case Variant::wm: return "wm";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (auto v : kAllVariants)
    if (variant_name(v) == name) return v;
  throw ConfigError("unknown configuration '" + std::string(name) +
                    "' (expected full, fp, sp, te, tc, wl, rl or wm)");
}

instr::InstructionMode Layout::mode() const {
  if (!has_prefix) return instr::InstructionMode::fixed_only;
  return shared_prefix ? instr::InstructionMode::shared : instr::InstructionMode::full;
}

std::vector<std::string> Layout::trainable_groups() const {
  std::vector<std::string> g;
  if (train_epnn) g.push_back("epnn");
  if (train_cfenn) g.push_back("cfenn");
  g.push_back("adapters");
  if (has_lora) g.push_back("lora");
  if (has_prefix) g.push_back("prefix");
  g.push_back("heads");
  return g;
}

Layout layout_for(Variant v) {
  Layout l;
  switch (v) {
    case Variant::full: break;
    case Variant::fp: l.has_prefix = false; break;
    case Variant::sp: l.shared_prefix = true; break;
    case Variant::te: l.train_epnn = true; break;
    case Variant::tc: l.train_cfenn = true; break;
    case Variant::wl: l.has_lora = false; break;
    case Variant::rl: l.random_backbone = true; break;
    case Variant::wm:
      l.has_prefix = false;
      l.has_lora = false;
      l.uses_backbone = false;
      break;
  }
  return l;
}

namespace {
constexpr std::uint64_t kModelStream = 0x4d4f444c;  // "MODL"
}

template <typename T>
Model<T> Model<T>::build(Variant variant, const enc::EncoderPair<T>& encoders,
                         const bb::Backbone<T>& backbone, const ModelDims& dims,
                         std::uint64_t seed) {
  Model m;
  m.variant = variant;
  m.layout = layout_for(variant);
  m.dims = dims;
  m.encoders = encoders;
  if (m.layout.train_epnn) m.encoders.epnn = enc::EncoderPair<T>::init_epnn(encoders.dims, seed + 101);
  if (m.layout.train_cfenn)
    m.encoders.cfenn = enc::EncoderPair<T>::init_cfenn(encoders.dims, seed + 202);
  m.backbone = m.layout.random_backbone ? bb::Backbone<T>::init(backbone.config, seed + 303) : backbone;
  m.backbone.forward_calls = 0;

  const std::size_t d = backbone.config.d_model;
  Rng rng(seed, {kModelStream});
  Rng adapter_rng = rng.split(1), prefix_rng = rng.split(2), head_rng = rng.split(3);
  m.env_adapter = nn::Linear<T>::init(encoders.dims.d_enc, d, adapter_rng);
  m.csi_adapter = nn::Linear<T>::init(encoders.dims.d_enc, d, adapter_rng);
  if (m.layout.has_lora) m.lora = bb::LoraSet<T>::init(backbone.config, dims.lora_rank, seed + 404);
  if (m.layout.has_prefix) {
    const std::size_t count = m.layout.shared_prefix ? 1 : instr::kTaskCount;
    for (std::size_t i = 0; i < count; ++i) m.prefixes.push_back(instr::init_prefix<T>(d, prefix_rng));
  }
  for (auto t : instr::kAllTasks)
    m.heads.push_back(tasks::TaskHead<T>::init(instr::task_spec(t, dims.n_t), d, head_rng));

  // frozen: pretrained towers, backbone; trainable: everything in the layout
  nn::set_trainable(m.encoders.all_params(), false);
  nn::set_trainable(m.backbone.params(), false);
  const auto g = m.groups();
  for (const auto& name : m.layout.trainable_groups()) nn::set_trainable(g.at(name), true);
  return m;
}

template <typename T>
const nn::Linear<T>& Model<T>::adapter(TaskId t) const {
  return instr::task_spec(t, dims.n_t).modality == instr::Modality::channel ? csi_adapter
                                                                            : env_adapter;
}

template <typename T>
bool Model<T>::encoder_trainable(TaskId t) const {
  return instr::task_spec(t, dims.n_t).modality == instr::Modality::channel ? layout.train_cfenn
                                                                            : layout.train_epnn;
}

template <typename T>
ad::Var<T> Model<T>::encode(TaskId t, const ad::Var<T>& inputs) const {
  return instr::task_spec(t, dims.n_t).modality == instr::Modality::channel
             ? encoders.encode_channel(inputs)
             : encoders.encode_environment(inputs);
}

template <typename T>
ad::Var<T> Model<T>::forward_codes(TaskId t, const ad::Var<T>& codes) const {
  const auto spec = instr::task_spec(t, dims.n_t);
  const auto token = adapter(t).forward(codes);
  if (!layout.uses_backbone) return head(t).forward(token);
  ad::Var<T> prefix;
  if (layout.has_prefix) prefix = prefixes[layout.shared_prefix ? 0 : std::size_t(t)];
  const auto block = instr::build_instruction(layout.mode(), spec, prefix, backbone.token_embedding,
                                              instr::default_vocab());
  const std::size_t seq = 1 + block.rows();
  const auto feature = backbone.last_output(ad::prepend_to_block(token, block), seq,
                                            layout.has_lora ? &lora : nullptr);
  return head(t).forward(feature);
}

template <typename T>
std::map<std::string, nn::ParamList<T>> Model<T>::groups() const {
  std::map<std::string, nn::ParamList<T>> g;
  g["epnn"] = encoders.epnn_params();
  g["cfenn"] = encoders.cfenn_params();
  env_adapter.collect("adapter.env", g["adapters"]);
  csi_adapter.collect("adapter.csi", g["adapters"]);
  g["backbone"] = backbone.params();
  g["lora"] = lora.params();
  auto& p = g["prefix"];
  for (std::size_t i = 0; i < prefixes.size(); ++i) p.push_back({"prefix." + std::to_string(i), prefixes[i]});
  auto& h = g["heads"];
  for (const auto& head : heads) head.linear.collect("head." + std::string(head.spec.name), h);
  return g;
}

template <typename T>
nn::ParamList<T> Model<T>::trainable_params() const {
  const auto g = groups();
  nn::ParamList<T> out;
  for (const auto& name : layout.trainable_groups())
    for (const auto& p : g.at(name)) out.push_back(p);
  return out;
}

template <typename T>
nn::ParamList<T> Model<T>::all_params() const {
  const auto g = groups();
  nn::ParamList<T> out;
  for (auto name : kGroups)
    for (const auto& p : g.at(std::string(name))) out.push_back(p);
  return out;
}

template <typename T>
std::map<std::string, std::uint64_t> census(const Model<T>& m) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& [name, params] : m.groups()) out[name] = nn::param_hash(params);
  return out;
}

std::vector<std::string> changed_groups(const std::map<std::string, std::uint64_t>& before,
                                        const std::map<std::string, std::uint64_t>& after) {
  std::vector<std::string> changed;
  for (auto name : kGroups) {
    const std::string key(name);
    if (before.at(key) != after.at(key)) changed.push_back(key);
  }
  return changed;
}

template <typename T>
InferenceGuard<T>::InferenceGuard(const Model<T>& m) : params_(m.all_params()) {
  for (const auto& p : params_) {
    flags_.push_back(p.var.requires_grad());
    if (flags_.back()) p.var.ptr()->requires_grad = false;
  }
}

template <typename T>
InferenceGuard<T>::~InferenceGuard() {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (flags_[i]) params_[i].var.ptr()->requires_grad = true;
}

template struct Model<float>;
template struct Model<double>;
template class InferenceGuard<float>;
template class InferenceGuard<double>;
template std::map<std::string, std::uint64_t> census<float>(const Model<float>&);
template std::map<std::string, std::uint64_t> census<double>(const Model<double>&);

}  // namespace aimm::harness
