#include "aimm/tasks/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace aimm::tasks {

template <typename T>
TaskHead<T> TaskHead<T>::init(const TaskSpec& spec, std::size_t d_model, Rng& rng) {
  return {spec, nn::Linear<T>::init(d_model, spec.out_width, rng)};
}

template <typename T>
ad::Var<T> TaskHead<T>::forward(const ad::Var<T>& feature) const {
  return linear.forward(feature);
}

template <typename T>
ad::Var<T> task_loss(const TaskSpec& spec, const ad::Var<T>& prediction, const LabelBatch<T>& labels,
                     std::size_t* degenerate) {
  if (prediction.cols() != spec.out_width)
    throw DimensionError(std::string(spec.name) + " head must output " +
                         std::to_string(spec.out_width) + " values");
  const std::span<const int> classes(labels.classes);
  switch (spec.loss) {
    case instr::LossKind::mse:
    case instr::LossKind::mse_standardized:
      return ad::mse(prediction, labels.target);
    case instr::LossKind::cross_entropy:
      return ad::cross_entropy(prediction, classes);
    case instr::LossKind::sgcs:
      return ad::sgcs_loss(prediction, labels.target, degenerate);
    case instr::LossKind::focal:
      return ad::focal_loss(prediction, classes, static_cast<T>(kFocalGamma));
  }
  throw ConfigError("unknown loss kind");
}

PathLossStats PathLossStats::fit(const std::vector<double>& db) {
  if (db.size() < 2) throw EvaluationError("path-loss statistics need at least two samples");
  PathLossStats s;
  for (double v : db) s.mean += v;
  s.mean /= double(db.size());
  double ss = 0.0;
  for (double v : db) ss += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(ss / double(db.size()));
  if (!(s.stddev > 0.0)) s.stddev = 1.0;
  return s;
}

double cdf90(std::vector<double> errors) {
  if (errors.empty()) throw EvaluationError("CDF90 of an empty error set");
  std::sort(errors.begin(), errors.end());
  const auto idx = static_cast<std::size_t>(std::ceil(0.9 * double(errors.size()))) - 1;
  return errors[idx];
}

std::size_t argmax_row(const Tensor<double>& m, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < m.cols(); ++c)
    if (m.at(row, c) > m.at(row, best)) best = c;
  return best;
}

double classification_accuracy(const Tensor<double>& logits, const std::vector<int>& labels) {
  if (labels.empty()) throw EvaluationError("accuracy of an empty set");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    hits += argmax_row(logits, i) == static_cast<std::size_t>(labels[i]) ? 1 : 0;
  return double(hits) / double(labels.size());
}

double mean_sgcs(const Tensor<double>& predictions, const Tensor<double>& targets) {
  if (predictions.rows() == 0) throw EvaluationError("SGCS of an empty set");
  const std::size_t n = predictions.cols() / 2;
  double total = 0.0;
  for (std::size_t r = 0; r < predictions.rows(); ++r) {
    double re = 0, im = 0, pp = 0, tt = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double pr = predictions.at(r, 2 * i), pi = predictions.at(r, 2 * i + 1);
      const double tr = targets.at(r, 2 * i), ti = targets.at(r, 2 * i + 1);
      // conj(p)·t
      re += pr * tr + pi * ti;
      im += pr * ti - pi * tr;
      pp += pr * pr + pi * pi;
      tt += tr * tr + ti * ti;
    }
    if (pp > 0 && tt > 0) total += (re * re + im * im) / (pp * tt);
  }
  return total / double(predictions.rows());
}

double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || a.size() != b.size()) throw EvaluationError("RMSE needs equal non-empty sets");
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(ss / double(a.size()));
}

double metric_value(const TaskSpec& spec, const Tensor<double>& predictions,
                    const EvalTargets& t, const PathLossStats& pl) {
  const std::size_t n = t.size();
  if (n == 0) throw EvaluationError("empty evaluation split");
  if (predictions.rows() != n || predictions.cols() != spec.out_width)
    throw DimensionError("predictions do not match the evaluation targets");
  switch (spec.metric) {
    case instr::MetricKind::cdf90_m: {
      std::vector<double> err(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double dx = predictions.at(i, 0) * t.side_length[i] - t.x_m[i];
        const double dy = predictions.at(i, 1) * t.side_length[i] - t.y_m[i];
        err[i] = std::hypot(dx, dy);
      }
      return cdf90(std::move(err));
    }
    case instr::MetricKind::accuracy:
      return classification_accuracy(predictions, t.los);
    case instr::MetricKind::sgcs:
      return mean_sgcs(predictions, t.precoder);
    case instr::MetricKind::top1:
      return classification_accuracy(predictions, t.beam);
    case instr::MetricKind::rmse_db: {
      std::vector<double> db(n);
      for (std::size_t i = 0; i < n; ++i) db[i] = pl.destandardize(predictions.at(i, 0));
      return rmse(db, t.path_loss_db);
    }
  }
  throw ConfigError("unknown metric kind");
}

std::string csv_row(const MetricReport& r) {
  char value[64];
  std::snprintf(value, sizeof value, "%.9g", r.value);
  return r.config + "," + r.task + "," + r.metric + "," + value + "," +
         std::to_string(r.n_samples) + "," + std::to_string(r.seed);
}

void validate_report(const MetricReport& r) {
  const bool unit = r.metric == "accuracy" || r.metric == "top1" || r.metric == "sgcs";
  if (!std::isfinite(r.value) || r.value < 0.0 || (unit && r.value > 1.0))
    throw EvaluationError("metric " + r.metric + " out of range: " + std::to_string(r.value));
}

template struct TaskHead<float>;
template struct TaskHead<double>;
template ad::Var<float> task_loss<float>(const TaskSpec&, const ad::Var<float>&,
                                         const LabelBatch<float>&, std::size_t*);
template ad::Var<double> task_loss<double>(const TaskSpec&, const ad::Var<double>&,
                                           const LabelBatch<double>&, std::size_t*);

}  // namespace aimm::tasks
