#include "aimm/instr/instructions.hpp"

#include <cctype>
#include <sstream>

#include "aimm/io/binary.hpp"
#include "aimm/nn/layers.hpp"

namespace aimm::instr {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> builtin_words() {
  return {"<pad>",     "position", "los",     "status",   "precoding", "beam",     "selection",
          "path",      "loss",     "user",    "information", "the",    "a",        "of",
          "to",        "and",      "for",     "is",       "from",      "at",       "in",
          "with",      "on",       "predict", "estimate", "select",    "report",   "signal",
          "channel",   "antenna",  "array",   "base",     "station",   "building", "street",
          "area",      "map",      "angle",   "delay",    "power",     "gain",     "strong",
          "weak",      "direct",   "reflected", "wall",   "carrier",   "frequency", "band",
          "mobile",    "device",   "link",    "ray",      "wave",      "urban",    "block",
          "vector",    "index",    "value",   "quality",  "best",      "line",     "sight",
          "task"};
}

}  // namespace

Vocab::Vocab() : Vocab(builtin_words()) {}

Vocab::Vocab(std::vector<std::string> words) : words_(std::move(words)) {
  if (words_.size() != kVocabSize)
    throw ConfigError("vocabulary must hold exactly " + std::to_string(kVocabSize) + " words");
  for (std::size_t i = 0; i < words_.size(); ++i) {
    words_[i] = lower(words_[i]);
    if (!index_.emplace(words_[i], static_cast<int>(i)).second)
      throw ConfigError("duplicate vocabulary word " + words_[i]);
  }
}

int Vocab::id(std::string_view word) const {
  const auto it = index_.find(lower(word));
  if (it == index_.end()) throw VocabularyError(std::string(word));
  return it->second;
}

bool Vocab::contains(std::string_view word) const { return index_.contains(lower(word)); }

nlohmann::json Vocab::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < words_.size(); ++i) j[words_[i]] = i;
  return j;
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  std::vector<std::string> words(j.size());
  for (const auto& [word, id] : j.items()) {
    const auto i = id.get<std::size_t>();
    if (i >= words.size() || !words[i].empty())
      throw FormatError("vocabulary ids are not dense", 0);
    words[i] = word;
  }
  return Vocab(std::move(words));
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& w : words_) {
    h = io::fnv1a({reinterpret_cast<const std::uint8_t*>(w.data()), w.size()}, h);
    const std::uint8_t sep = 0;
    h = io::fnv1a({&sep, 1}, h);
  }
  return h;
}

const Vocab& default_vocab() {
  static const Vocab v;
  return v;
}

std::vector<int> tokenize(std::string_view text, const Vocab& vocab) {
  std::istringstream in{std::string(text)};
  std::vector<int> ids;
  for (std::string w; in >> w;) ids.push_back(vocab.id(w));
  return ids;
}

std::array<int, kKeywordSlots> keyword_ids(std::string_view text, const Vocab& vocab) {
  const auto ids = tokenize(text, vocab);
  if (ids.empty() || ids.size() > kKeywordSlots)
    throw ConfigError("keyword \"" + std::string(text) + "\" must be one or two words");
  std::array<int, kKeywordSlots> out{};
  out.fill(kPad);
  for (std::size_t i = 0; i < ids.size(); ++i) out[i] = ids[i];
  return out;
}

TaskSpec task_spec(TaskId id, std::size_t n_t) {
  switch (id) {
    case TaskId::positioning:
      return {id, "positioning", "position", Modality::channel, 2, LossKind::mse,
              MetricKind::cdf90_m};
    case TaskId::los_nlos:
      return {id, "los_nlos", "LOS status", Modality::channel, 2, LossKind::cross_entropy,
              MetricKind::accuracy};
    case TaskId::precoding:
      return {id, "precoding", "precoding", Modality::channel, 2 * n_t, LossKind::sgcs,
              MetricKind::sgcs};
    case TaskId::beam_selection:
      return {id, "beam_selection", "beam selection", Modality::environment, n_t,
              LossKind::focal, MetricKind::top1};
    case TaskId::path_loss:
      return {id, "path_loss", "path loss", Modality::environment, 1, LossKind::mse_standardized,
              MetricKind::rmse_db};
  }
  throw ConfigError("unknown task");
}

std::string_view metric_name(MetricKind m) {
  switch (m) {
    case MetricKind::cdf90_m: return "cdf90_m";
    case MetricKind::accuracy: return "accuracy";
    case MetricKind::sgcs: return "sgcs";
    case MetricKind::top1: return "top1";
    case MetricKind::rmse_db: return "rmse_db";
  }
  return "?";
}

TaskId task_from_name(std::string_view name) {
  for (auto t : kAllTasks)
    if (task_spec(t, 1).name == name) return t;
  throw ConfigError("unknown task " + std::string(name));
}

template <typename T>
ad::Var<T> init_prefix(std::size_t d_model, Rng& rng) {
  return ad::Var<T>::leaf(nn::normal_tensor<T>({kPrefixTokens, d_model}, 0.02, rng), true);
}

template <typename T>
ad::Var<T> build_instruction(InstructionMode mode, const TaskSpec& task, const ad::Var<T>& prefix,
                             const ad::Var<T>& embed_table, const Vocab& vocab) {
  if (embed_table.rows() != vocab.size())
    throw DimensionError("embedding table rows must equal the vocabulary size");
  const auto ids =
      keyword_ids(mode == InstructionMode::shared ? kSharedKeyword : task.keyword, vocab);
  const auto keywords = ad::gather_rows(embed_table, std::span<const int>(ids));
  if (mode == InstructionMode::fixed_only) return keywords;
  if (!prefix.valid() || prefix.rows() != kPrefixTokens || prefix.cols() != embed_table.cols())
    throw DimensionError("prefix must be 3 × d_model");
  return ad::concat_rows<T>({prefix, keywords});
}

template ad::Var<float> init_prefix<float>(std::size_t, Rng&);
template ad::Var<double> init_prefix<double>(std::size_t, Rng&);
template ad::Var<float> build_instruction<float>(InstructionMode, const TaskSpec&,
                                                 const ad::Var<float>&, const ad::Var<float>&,
                                                 const Vocab&);
template ad::Var<double> build_instruction<double>(InstructionMode, const TaskSpec&,
                                                   const ad::Var<double>&, const ad::Var<double>&,
                                                   const Vocab&);

}  // namespace aimm::instr
