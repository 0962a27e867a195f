#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "aimm/harness/model.hpp"
#include "aimm/nn/adam.hpp"
#include "aimm/scene/dataset.hpp"

namespace aimm::harness {

using instr::TaskId;

// Encoder inputs, cached frozen codes and labels for one split.
struct SplitData {
  std::size_t n = 0;
  Tensor<float> env_inputs, csi_inputs;
  Tensor<float> env_codes, csi_codes;
  Tensor<float> position;   // N × 2, normalized by side length
  Tensor<float> precoder;   // N × 2·n_t
  Tensor<float> path_loss;  // N × 1, standardized
  std::vector<int> los, beam;
  tasks::EvalTargets targets;

  const Tensor<float>& inputs(TaskId t, std::size_t n_t) const;
  const Tensor<float>& codes(TaskId t, std::size_t n_t) const;
  tasks::LabelBatch<float> labels(TaskId t, std::size_t n_t, std::span<const std::size_t> idx) const;
};

// Training and test data for one model: one area, or every area pooled.
struct AreaSplit {
  std::string label;
  std::vector<std::uint64_t> area_indices;
  std::size_t n_t = 16;
  tasks::PathLossStats path_loss;
  SplitData train, test;
};

SplitData prepare_split(const std::vector<scene::SampleRecord>& records,
                        const std::vector<double>& side_lengths, const enc::EncoderPair<float>& enc,
                        const tasks::PathLossStats& pl, std::size_t n_t);

// Groups dataset records by the area list in the metadata. Throws
// FormatError when metadata and records disagree and EvaluationError on an
// empty split.
std::vector<AreaSplit> prepare_areas(const scene::Dataset& train, const scene::Dataset& test,
                                     const enc::EncoderPair<float>& enc, bool pooled);

struct RunConfig {
  Variant variant = Variant::full;
  std::uint64_t seed = 1;
  std::size_t epochs = 30;
  std::size_t batch = 32;
  nn::AdamOptions adam;
  std::size_t lora_rank = 4;
  bool pooled = false;
  bool eval_each_epoch = false;
};

// Applies key=value lines (epochs, batch, lr, beta1, beta2, eps, lora_rank,
// seed, pooled, eval_each_epoch). '#' starts a comment. ConfigError on
// unknown keys or malformed values.
void apply_config_text(RunConfig& cfg, const std::string& text);

struct TrainState {
  std::uint64_t step = 0;
  std::uint64_t rng_key = 0;
  std::uint64_t rng_counter = 0;
  std::vector<double> recent_loss;  // ring buffer, kLossWindow entries
  static constexpr std::size_t kLossWindow = 64;
};

// Round-robin multi-task training. Each epoch every task sees each of its
// training samples once; steps alternate tasks in fixed order.
class Trainer {
 public:
  Trainer(Model<float>& model, const AreaSplit& data, const RunConfig& cfg);

  std::size_t steps_per_epoch() const { return plan_.size(); }
  std::size_t total_steps() const { return plan_.size() * cfg_.epochs; }
  const TrainState& state() const { return state_; }

  // Runs until state().step == step; on_epoch(e) fires after epoch e ends.
  void run_until(std::uint64_t step, const std::function<void(std::size_t)>& on_epoch = {});
  void run(const std::function<void(std::size_t)>& on_epoch = {}) { run_until(total_steps(), on_epoch); }

  // Trainable parameters, optimizer moments and counters.
  io::Bundle save_state() const;
  void load_state(const io::Bundle& b);

  double mean_recent_loss() const;

 private:
  void step_once();
  const std::vector<std::size_t>& order(std::size_t epoch, TaskId t);

  Model<float>& model_;
  const AreaSplit& data_;
  RunConfig cfg_;
  nn::Adam adam_;
  TrainState state_;
  std::vector<std::pair<TaskId, std::size_t>> plan_;
  std::size_t cached_epoch_ = std::size_t(-1);
  std::map<TaskId, std::vector<std::size_t>> orders_;
};

// Raw head outputs for every sample of a split.
Tensor<double> predict(const Model<float>& model, const SplitData& split, TaskId t);

// Pools predictions from several per-area models and scores them.
class PooledEvaluation {
 public:
  void add(const Model<float>& model, const AreaSplit& area, const SplitData& split);
  std::vector<tasks::MetricReport> reports(const std::string& config, std::uint64_t seed) const;

 private:
  std::map<TaskId, Tensor<double>> predictions_;
  tasks::EvalTargets targets_;
  std::size_t n_t_ = 0;
};

struct Artifacts {
  enc::EncoderPair<float> encoders;
  bb::Backbone<float> backbone;
};

struct AreaOutcome {
  std::string label;
  std::map<std::string, std::uint64_t> census_before, census_after;
  std::vector<std::string> changed;
  std::size_t backbone_calls = 0;
  std::size_t steps = 0;
  double final_loss = 0.0;
};

struct RunResult {
  RunConfig config;
  std::vector<Model<float>> models;  // one per AreaSplit
  std::vector<AreaOutcome> outcomes;
  std::vector<tasks::MetricReport> reports;  // test split, pooled over areas
  std::vector<std::pair<std::size_t, tasks::MetricReport>> history;  // (epoch, report)
  double cpu_seconds = 0.0;  // CPU time of the training thread
};

RunResult run_variant(const RunConfig& cfg, const Artifacts& art, const std::vector<AreaSplit>& areas);

// AIMM_THREADS if set (positive integer), else the hardware concurrency.
std::size_t thread_cap();

// Every variant with the shared seed; results in kAllVariants order.
std::vector<RunResult> ablate(const RunConfig& base, const Artifacts& art,
                              const std::vector<AreaSplit>& areas, std::size_t threads);

std::string csv_text(const std::vector<tasks::MetricReport>& reports);

// Test-split scores of the trivial predictors used as reference points.
struct Baselines {
  double mean_position_cdf90 = 0.0;   // predict each area's training mean position
  double mean_path_loss_rmse = 0.0;   // predict each area's training mean path loss
  double random_sgcs = 0.0;           // expectation 1/n_t for a random unit vector
  double beam_chance = 0.0;           // 1/n_t
};
Baselines baselines(const std::vector<AreaSplit>& areas);

// "AIMC" model checkpoint: every parameter of every per-area model, the
// run configuration, path-loss statistics and the vocabulary.
void save_model(const std::filesystem::path& path, const RunResult& run,
                const std::vector<AreaSplit>& areas);

struct LoadedModel {
  RunConfig config;
  std::vector<std::vector<std::uint64_t>> area_indices;
  std::vector<tasks::PathLossStats> path_loss;
  std::vector<Model<float>> models;
};
LoadedModel load_model(const std::filesystem::path& path);

// Scores a checkpoint on a test dataset; the dataset must cover the
// checkpoint's areas with matching dimensions (CheckpointError otherwise).
std::vector<tasks::MetricReport> evaluate_checkpoint(const LoadedModel& m, const scene::Dataset& test);

}  // namespace aimm::harness
