#pragma once

#include <string>
#include <vector>

#include "aimm/instr/instructions.hpp"
#include "aimm/nn/layers.hpp"

namespace aimm::tasks {

using instr::TaskSpec;

// One linear layer from the backbone feature to the task output.
template <typename T>
struct TaskHead {
  TaskSpec spec;
  nn::Linear<T> linear;

  static TaskHead init(const TaskSpec& spec, std::size_t d_model, Rng& rng);
  ad::Var<T> forward(const ad::Var<T>& feature) const;
};

// Training targets for one batch. Regression and precoding tasks use
// `target`, classification tasks use `classes`.
template <typename T>
struct LabelBatch {
  Tensor<T> target;
  std::vector<int> classes;
};

inline constexpr double kFocalGamma = 2.0;

template <typename T>
ad::Var<T> task_loss(const TaskSpec& spec, const ad::Var<T>& prediction, const LabelBatch<T>& labels,
                     std::size_t* degenerate = nullptr);

struct PathLossStats {
  double mean = 0.0;
  double stddev = 1.0;

  double standardize(double db) const { return (db - mean) / stddev; }
  double destandardize(double z) const { return z * stddev + mean; }
  static PathLossStats fit(const std::vector<double>& db);
};

// Per-sample evaluation targets, in physical units.
struct EvalTargets {
  std::vector<double> x_m, y_m;
  std::vector<double> side_length;
  std::vector<int> los;
  Tensor<double> precoder;  // N × 2·n_t
  std::vector<int> beam;
  std::vector<double> path_loss_db;

  std::size_t size() const { return los.size(); }
};

// Order statistic at index ceil(0.9·N) − 1.
double cdf90(std::vector<double> errors);
double classification_accuracy(const Tensor<double>& logits, const std::vector<int>& labels);
double mean_sgcs(const Tensor<double>& predictions, const Tensor<double>& targets);
double rmse(const std::vector<double>& a, const std::vector<double>& b);
std::size_t argmax_row(const Tensor<double>& m, std::size_t row);

// Task metric from raw head outputs (positions normalized, path loss
// standardized).
double metric_value(const TaskSpec& spec, const Tensor<double>& predictions,
                    const EvalTargets& targets, const PathLossStats& pl);

struct MetricReport {
  std::string config;
  std::string task;
  std::string metric;
  double value = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

inline constexpr const char* kCsvHeader = "config,task,metric,value,n_samples,seed";
std::string csv_row(const MetricReport& r);
// Throws EvaluationError when the value leaves the metric's range.
void validate_report(const MetricReport& r);

}  // namespace aimm::tasks
