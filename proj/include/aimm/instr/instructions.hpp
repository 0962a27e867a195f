#pragma once

#include <nlohmann/json.hpp>

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "aimm/numerics/autodiff.hpp"
#include "aimm/numerics/rng.hpp"

namespace aimm::instr {

inline constexpr std::size_t kVocabSize = 64;
inline constexpr int kPad = 0;
inline constexpr std::size_t kKeywordSlots = 2;
inline constexpr std::size_t kPrefixTokens = 3;

// Closed word-level vocabulary. Ids are dense, PAD is 0, lookups ignore case.
class Vocab {
 public:
  Vocab();  // the built-in 64-word table
  explicit Vocab(std::vector<std::string> words);

  std::size_t size() const noexcept { return words_.size(); }
  // Throws VocabularyError naming the word.
  int id(std::string_view word) const;
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  bool contains(std::string_view word) const;

  nlohmann::json to_json() const;  // {word: id}
  static Vocab from_json(const nlohmann::json& j);
  std::uint64_t hash() const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;
  std::map<std::string, int, std::less<>> index_;
};

const Vocab& default_vocab();

// One id per whitespace-separated word.
std::vector<int> tokenize(std::string_view text, const Vocab& vocab);
// Keyword slot ids, PAD-filled to two; more than two words is a ConfigError.
std::array<int, kKeywordSlots> keyword_ids(std::string_view text, const Vocab& vocab);

enum class TaskId { positioning = 0, los_nlos = 1, precoding = 2, beam_selection = 3, path_loss = 4 };
inline constexpr std::size_t kTaskCount = 5;
inline constexpr std::array<TaskId, kTaskCount> kAllTasks = {
    TaskId::positioning, TaskId::los_nlos, TaskId::precoding, TaskId::beam_selection,
    TaskId::path_loss};

enum class Modality { channel, environment };
enum class LossKind { mse, cross_entropy, sgcs, focal, mse_standardized };
enum class MetricKind { cdf90_m, accuracy, sgcs, top1, rmse_db };

struct TaskSpec {
  TaskId id;
  std::string_view name;
  std::string_view keyword;
  Modality modality;
  std::size_t out_width;
  LossKind loss;
  MetricKind metric;
};

TaskSpec task_spec(TaskId id, std::size_t n_t);
std::string_view metric_name(MetricKind m);
// Inverse of TaskSpec::name; throws ConfigError.
TaskId task_from_name(std::string_view name);

inline constexpr std::string_view kSharedKeyword = "user information";

enum class InstructionMode { full, fixed_only, shared };

// Learnable 3 × d_model prefix, N(0, 0.02²) at init.
template <typename T>
ad::Var<T> init_prefix(std::size_t d_model, Rng& rng);

// Rows: prefix (absent in fixed_only mode) then the two keyword rows taken
// from the embedding table. In shared mode the keyword is "user information"
// for every task and `prefix` must be the shared prefix.
template <typename T>
ad::Var<T> build_instruction(InstructionMode mode, const TaskSpec& task, const ad::Var<T>& prefix,
                             const ad::Var<T>& embed_table, const Vocab& vocab);

}  // namespace aimm::instr
