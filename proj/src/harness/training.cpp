#include "aimm/harness/training.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include <time.h>

namespace aimm::harness {

namespace {

struct AreaRecords {
  double side_length = 0.0;
  std::vector<scene::SampleRecord> records;
};

std::map<std::uint64_t, AreaRecords> records_by_area(const scene::Dataset& ds) {
  std::map<std::uint64_t, AreaRecords> out;
  std::size_t offset = 0;
  try {
    for (const auto& a : ds.metadata.at("areas")) {
      const auto index = a.at("index").get<std::uint64_t>();
      const auto count = a.at("count").get<std::size_t>();
      if (offset + count > ds.records.size())
        throw FormatError("dataset metadata lists more records than the file holds", 0);
      auto& dst = out[index];
      dst.side_length = a.at("side_length").get<double>();
      dst.records.insert(dst.records.end(), ds.records.begin() + std::ptrdiff_t(offset),
                         ds.records.begin() + std::ptrdiff_t(offset + count));
      offset += count;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset metadata lacks the area list: ") + e.what(), 0);
  }
  if (offset != ds.records.size())
    throw FormatError("dataset metadata does not account for every record", 0);
  return out;
}

Tensor<float> encode_all(const enc::EncoderPair<float>& enc, const Tensor<float>& x, bool channel) {
  const std::size_t n = x.rows();
  Tensor<float> codes({n, enc.dims.d_enc});
  const std::size_t step = 512;
  for (std::size_t start = 0; start < n; start += step) {
    std::vector<std::size_t> idx(std::min(step, n - start));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    const auto in = ad::Var<float>::constant(nn::take_rows(x, idx));
    const auto c = channel ? enc.encode_channel(in) : enc.encode_environment(in);
    std::copy(c.value().values().begin(), c.value().values().end(),
              codes.data() + start * enc.dims.d_enc);
  }
  return codes;
}

std::uint64_t area_seed(std::uint64_t seed, std::size_t area) {
  return Rng(seed, {0x41524541 /* "AREA" */, area}).next_u64();
}

constexpr std::uint64_t kShuffleStream = 0x53485546;  // "SHUF"

double thread_cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_THREAD_CPUTIME_ID, &ts);
  return double(ts.tv_sec) + 1e-9 * double(ts.tv_nsec);
}

}  // namespace

const Tensor<float>& SplitData::inputs(TaskId t, std::size_t n_t) const {
  return instr::task_spec(t, n_t).modality == instr::Modality::channel ? csi_inputs : env_inputs;
}

const Tensor<float>& SplitData::codes(TaskId t, std::size_t n_t) const {
  return instr::task_spec(t, n_t).modality == instr::Modality::channel ? csi_codes : env_codes;
}

tasks::LabelBatch<float> SplitData::labels(TaskId t, std::size_t /*n_t*/,
                                           std::span<const std::size_t> idx) const {
  tasks::LabelBatch<float> lb;
  auto pick = [&](const std::vector<int>& src) {
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = src[idx[i]];
    return out;
  };
  switch (t) {
    case TaskId::positioning: lb.target = nn::take_rows(position, idx); break;
    case TaskId::los_nlos: lb.classes = pick(los); break;
    case TaskId::precoding: lb.target = nn::take_rows(precoder, idx); break;
    case TaskId::beam_selection: lb.classes = pick(beam); break;
    case TaskId::path_loss: lb.target = nn::take_rows(path_loss, idx); break;
  }
  return lb;
}

SplitData prepare_split(const std::vector<scene::SampleRecord>& records,
                        const std::vector<double>& side_lengths, const enc::EncoderPair<float>& enc,
                        const tasks::PathLossStats& pl, std::size_t n_t) {
  if (records.empty()) throw EvaluationError("empty data split");
  if (side_lengths.size() != records.size()) throw DimensionError("one side length per record");
  SplitData s;
  s.n = records.size();
  s.env_inputs = enc::environment_inputs(records);
  s.csi_inputs = enc::channel_inputs(records, enc.csi_scale);
  s.env_codes = encode_all(enc, s.env_inputs, false);
  s.csi_codes = encode_all(enc, s.csi_inputs, true);
  s.position = Tensor<float>({s.n, 2});
  s.precoder = Tensor<float>({s.n, 2 * n_t});
  s.path_loss = Tensor<float>({s.n, 1});
  s.targets.precoder = Tensor<double>({s.n, 2 * n_t});
  for (std::size_t i = 0; i < s.n; ++i) {
    const auto& r = records[i];
    if (r.precoder.size() != 2 * n_t) throw DimensionError("precoder width disagrees with n_t");
    const double L = side_lengths[i];
    s.position.at(i, 0) = static_cast<float>(r.position[0] / L);
    s.position.at(i, 1) = static_cast<float>(r.position[1] / L);
    for (std::size_t k = 0; k < 2 * n_t; ++k) {
      s.precoder.at(i, k) = r.precoder[k];
      s.targets.precoder.at(i, k) = r.precoder[k];
    }
    s.path_loss.at(i, 0) = static_cast<float>(pl.standardize(r.path_loss_db));
    s.los.push_back(r.los ? 1 : 0);
    s.beam.push_back(r.beam_index);
    s.targets.x_m.push_back(r.position[0]);
    s.targets.y_m.push_back(r.position[1]);
    s.targets.side_length.push_back(L);
    s.targets.path_loss_db.push_back(r.path_loss_db);
  }
  s.targets.los = s.los;
  s.targets.beam = s.beam;
  return s;
}

std::vector<AreaSplit> prepare_areas(const scene::Dataset& train, const scene::Dataset& test,
                                     const enc::EncoderPair<float>& enc, bool pooled) {
  if (train.n_t != test.n_t || train.n_c != test.n_c)
    throw FormatError("train and test datasets differ in dimensions", 8);
  if (train.n_t * train.n_c != enc.dims.csi_in)
    throw CheckpointError("encoder input width does not match the dataset CSI size");
  const auto tr = records_by_area(train);
  const auto te = records_by_area(test);
  std::vector<std::vector<std::uint64_t>> groups;
  if (pooled) {
    groups.emplace_back();
    for (const auto& [index, _] : tr) groups.back().push_back(index);
  } else {
    for (const auto& [index, _] : tr) groups.push_back({index});
  }
  std::vector<AreaSplit> out;
  for (const auto& g : groups) {
    AreaSplit a;
    a.n_t = train.n_t;
    a.area_indices = g;
    a.label = pooled ? "pooled" : "area" + std::to_string(g.front());
    std::vector<scene::SampleRecord> trr, ter;
    std::vector<double> trl, tel;
    for (auto index : g) {
      const auto it = te.find(index);
      if (it == te.end())
        throw FormatError("test split has no samples for area " + std::to_string(index), 0);
      const auto& t = tr.at(index);
      trr.insert(trr.end(), t.records.begin(), t.records.end());
      trl.insert(trl.end(), t.records.size(), t.side_length);
      ter.insert(ter.end(), it->second.records.begin(), it->second.records.end());
      tel.insert(tel.end(), it->second.records.size(), it->second.side_length);
    }
    std::vector<double> db;
    for (const auto& r : trr) db.push_back(r.path_loss_db);
    a.path_loss = tasks::PathLossStats::fit(db);
    a.train = prepare_split(trr, trl, enc, a.path_loss, a.n_t);
    a.test = prepare_split(ter, tel, enc, a.path_loss, a.n_t);
    out.push_back(std::move(a));
  }
  return out;
}

void apply_config_text(RunConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto as_size = [&] {
      std::size_t v = 0;
      const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size())
        throw ConfigError("line " + std::to_string(lineno) + ": " + key + " needs an integer");
      return v;
    };
    auto as_double = [&] {
      char* end = nullptr;
      const double v = std::strtod(value.c_str(), &end);
      if (value.empty() || end != value.c_str() + value.size())
        throw ConfigError("line " + std::to_string(lineno) + ": " + key + " needs a number");
      return v;
    };
    auto as_bool = [&] {
      if (value == "true" || value == "1") return true;
      if (value == "false" || value == "0") return false;
      throw ConfigError("line " + std::to_string(lineno) + ": " + key + " needs true or false");
    };
    if (key == "epochs") cfg.epochs = as_size();
    else if (key == "batch") cfg.batch = as_size();
    else if (key == "lr") cfg.adam.lr = as_double();
    else if (key == "beta1") cfg.adam.beta1 = as_double();
    else if (key == "beta2") cfg.adam.beta2 = as_double();
    else if (key == "eps") cfg.adam.eps = as_double();
    else if (key == "lora_rank") cfg.lora_rank = as_size();
    else if (key == "seed") cfg.seed = as_size();
    else if (key == "pooled") cfg.pooled = as_bool();
    else if (key == "eval_each_epoch") cfg.eval_each_epoch = as_bool();
    else throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  if (cfg.batch == 0) throw ConfigError("batch must be positive");
  if (!(cfg.adam.lr > 0.0)) throw ConfigError("lr must be positive");
}

Trainer::Trainer(Model<float>& model, const AreaSplit& data, const RunConfig& cfg)
    : model_(model), data_(data), cfg_(cfg), adam_(model.trainable_params(), cfg.adam) {
  if (cfg_.batch == 0) throw ConfigError("batch must be positive");
  const std::size_t batches = (data.train.n + cfg_.batch - 1) / cfg_.batch;
  for (std::size_t b = 0; b < batches; ++b)
    for (auto t : instr::kAllTasks) plan_.emplace_back(t, b);
  const Rng rng(cfg_.seed, {kShuffleStream});
  state_.rng_key = rng.key();
}

const std::vector<std::size_t>& Trainer::order(std::size_t epoch, TaskId t) {
  if (epoch != cached_epoch_) {
    orders_.clear();
    for (auto task : instr::kAllTasks) {
      Rng rng = Rng::from_state(state_.rng_key, 0).split(epoch).split(std::size_t(task));
      orders_[task] = nn::shuffled_indices(data_.train.n, rng);
    }
    cached_epoch_ = epoch;
  }
  return orders_.at(t);
}

void Trainer::step_once() {
  const std::size_t spe = plan_.size();
  const auto [t, b] = plan_[state_.step % spe];
  const auto& ord = order(state_.step / spe, t);
  const std::size_t start = b * cfg_.batch;
  const std::span<const std::size_t> idx(ord.data() + start,
                                         std::min(cfg_.batch, data_.train.n - start));
  const std::size_t n_t = data_.n_t;
  const auto codes =
      model_.encoder_trainable(t)
          ? model_.encode(t, ad::Var<float>::constant(nn::take_rows(data_.train.inputs(t, n_t), idx)))
          : ad::Var<float>::constant(nn::take_rows(data_.train.codes(t, n_t), idx));
  const auto loss = tasks::task_loss(instr::task_spec(t, n_t), model_.forward_codes(t, codes),
                                     data_.train.labels(t, n_t, idx));
  adam_.zero_grad();
  ad::backward(loss);
  adam_.step();
  auto& ring = state_.recent_loss;
  if (ring.size() < TrainState::kLossWindow) ring.push_back(loss.item());
  else ring[state_.step % TrainState::kLossWindow] = loss.item();
  ++state_.step;
  state_.rng_counter = state_.step;
}

void Trainer::run_until(std::uint64_t step, const std::function<void(std::size_t)>& on_epoch) {
  if (step > total_steps()) throw ConfigError("requested step beyond the training schedule");
  while (state_.step < step) {
    step_once();
    if (state_.step % plan_.size() == 0 && on_epoch) on_epoch(state_.step / plan_.size() - 1);
  }
  adam_.zero_grad();
}

double Trainer::mean_recent_loss() const {
  const auto& r = state_.recent_loss;
  if (r.empty()) return 0.0;
  double s = 0.0;
  for (double v : r) s += v;
  return s / double(r.size());
}

io::Bundle Trainer::save_state() const {
  io::Bundle b;
  auto& a = const_cast<nn::Adam&>(adam_);
  b.meta = {{"step", state_.step},
            {"rng_key", state_.rng_key},
            {"rng_counter", state_.rng_counter},
            {"recent_loss", state_.recent_loss},
            {"adam_steps", a.step_counts()},
            {"variant", variant_name(cfg_.variant)},
            {"seed", cfg_.seed}};
  const auto& params = adam_.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    b.add("param/" + params[i].name, params[i].var.value());
    b.add("m/" + params[i].name, a.first_moments()[i]);
    b.add("v/" + params[i].name, a.second_moments()[i]);
  }
  return b;
}

void Trainer::load_state(const io::Bundle& b) {
  try {
    if (b.meta.at("variant").get<std::string>() != variant_name(cfg_.variant))
      throw CheckpointError("training state belongs to another configuration");
    state_.step = b.meta.at("step").get<std::uint64_t>();
    state_.rng_key = b.meta.at("rng_key").get<std::uint64_t>();
    state_.rng_counter = b.meta.at("rng_counter").get<std::uint64_t>();
    state_.recent_loss = b.meta.at("recent_loss").get<std::vector<double>>();
    adam_.step_counts() = b.meta.at("adam_steps").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("training state header incomplete: ") + e.what());
  }
  const auto& params = adam_.params();
  if (adam_.step_counts().size() != params.size())
    throw CheckpointError("training state has a different parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& v = b.get("param/" + params[i].name);
    if (v.shape() != params[i].var.shape())
      throw CheckpointError("shape mismatch for " + params[i].name);
    params[i].var.ptr()->value = v;
    adam_.first_moments()[i] = b.get("m/" + params[i].name);
    adam_.second_moments()[i] = b.get("v/" + params[i].name);
  }
  cached_epoch_ = std::size_t(-1);
}

Tensor<double> predict(const Model<float>& model, const SplitData& split, TaskId t) {
  const InferenceGuard<float> guard(model);
  const std::size_t n_t = model.dims.n_t;
  const std::size_t width = instr::task_spec(t, n_t).out_width;
  Tensor<double> out({split.n, width});
  const std::size_t step = 256;
  for (std::size_t start = 0; start < split.n; start += step) {
    std::vector<std::size_t> idx(std::min(step, split.n - start));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
    const auto codes =
        model.encoder_trainable(t)
            ? model.encode(t, ad::Var<float>::constant(nn::take_rows(split.inputs(t, n_t), idx)))
            : ad::Var<float>::constant(nn::take_rows(split.codes(t, n_t), idx));
    const auto y = model.forward_codes(t, codes).value();
    for (std::size_t i = 0; i < y.size(); ++i) out[start * width + i] = y[i];
  }
  return out;
}

void PooledEvaluation::add(const Model<float>& model, const AreaSplit& area, const SplitData& split) {
  n_t_ = area.n_t;
  for (auto t : instr::kAllTasks) {
    auto p = predict(model, split, t);
    if (t == TaskId::path_loss)
      for (auto& v : p.values()) v = area.path_loss.destandardize(v);
    auto& dst = predictions_[t];
    if (dst.empty()) {
      dst = std::move(p);
    } else {
      auto vals = dst.values();
      vals.insert(vals.end(), p.values().begin(), p.values().end());
      dst = Tensor<double>({dst.rows() + p.rows(), dst.cols()}, std::move(vals));
    }
  }
  const auto& s = split.targets;
  auto append = [](auto& a, const auto& b) { a.insert(a.end(), b.begin(), b.end()); };
  append(targets_.x_m, s.x_m);
  append(targets_.y_m, s.y_m);
  append(targets_.side_length, s.side_length);
  append(targets_.los, s.los);
  append(targets_.beam, s.beam);
  append(targets_.path_loss_db, s.path_loss_db);
  if (targets_.precoder.empty()) {
    targets_.precoder = s.precoder;
  } else {
    auto vals = targets_.precoder.values();
    vals.insert(vals.end(), s.precoder.values().begin(), s.precoder.values().end());
    targets_.precoder = Tensor<double>({targets_.precoder.rows() + s.precoder.rows(),
                                        targets_.precoder.cols()}, std::move(vals));
  }
}

std::vector<tasks::MetricReport> PooledEvaluation::reports(const std::string& config,
                                                           std::uint64_t seed) const {
  if (targets_.size() == 0) throw EvaluationError("nothing to evaluate");
  std::vector<tasks::MetricReport> out;
  const tasks::PathLossStats identity{0.0, 1.0};  // predictions already in dB
  for (auto t : instr::kAllTasks) {
    const auto spec = instr::task_spec(t, n_t_);
    tasks::MetricReport r{config,
                          std::string(spec.name),
                          std::string(instr::metric_name(spec.metric)),
                          tasks::metric_value(spec, predictions_.at(t), targets_, identity),
                          targets_.size(),
                          seed};
    tasks::validate_report(r);
    out.push_back(std::move(r));
  }
  return out;
}

RunResult run_variant(const RunConfig& cfg, const Artifacts& art, const std::vector<AreaSplit>& areas) {
  if (areas.empty()) throw EvaluationError("no areas to train on");
  const double cpu_start = thread_cpu_seconds();
  RunResult r;
  r.config = cfg;
  PooledEvaluation pooled;
  const std::string name(variant_name(cfg.variant));
  for (std::size_t a = 0; a < areas.size(); ++a) {
    const auto& area = areas[a];
    const std::uint64_t seed = area_seed(cfg.seed, a);
    auto model = Model<float>::build(cfg.variant, art.encoders, art.backbone,
                                     {area.n_t, cfg.lora_rank}, seed);
    AreaOutcome out;
    out.label = area.label;
    out.census_before = census(model);
    RunConfig local = cfg;
    local.seed = seed;
    Trainer trainer(model, area, local);
    trainer.run([&](std::size_t epoch) {
      if (!cfg.eval_each_epoch) return;
      PooledEvaluation ev;
      ev.add(model, area, area.test);
      for (auto& rep : ev.reports(name + ":" + area.label, cfg.seed))
        r.history.emplace_back(epoch, std::move(rep));
    });
    out.census_after = census(model);
    out.changed = changed_groups(out.census_before, out.census_after);
    out.steps = trainer.state().step;
    out.final_loss = trainer.mean_recent_loss();
    pooled.add(model, area, area.test);
    out.backbone_calls = model.backbone.forward_calls;
    r.outcomes.push_back(std::move(out));
    r.models.push_back(std::move(model));
  }
  r.reports = pooled.reports(name, cfg.seed);
  r.cpu_seconds = thread_cpu_seconds() - cpu_start;
  return r;
}

std::size_t thread_cap() {
  if (const char* env = std::getenv("AIMM_THREADS"); env && *env) {
    std::size_t v = 0;
    const std::string s(env);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || v == 0)
      throw ConfigError("AIMM_THREADS must be a positive integer, got '" + s + "'");
    return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<RunResult> ablate(const RunConfig& base, const Artifacts& art,
                              const std::vector<AreaSplit>& areas, std::size_t threads) {
  // shared pretrained weights are read by every worker; freeze them up front
  nn::set_trainable(art.encoders.all_params(), false);
  nn::set_trainable(art.backbone.params(), false);
  std::vector<RunResult> results(kAllVariants.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < kAllVariants.size();) {
      try {
        RunConfig cfg = base;
        cfg.variant = kAllVariants[i];
        results[i] = run_variant(cfg, art, areas);
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(threads, 1, kAllVariants.size());
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  return results;
}

std::string csv_text(const std::vector<tasks::MetricReport>& reports) {
  std::string s = std::string(tasks::kCsvHeader) + "\n";
  for (const auto& r : reports) s += tasks::csv_row(r) + "\n";
  return s;
}

Baselines baselines(const std::vector<AreaSplit>& areas) {
  Baselines b;
  std::vector<double> pos_err, pl_pred, pl_true;
  for (const auto& a : areas) {
    const auto& tr = a.train.targets;
    double mx = 0, my = 0, mdb = 0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
      mx += tr.x_m[i];
      my += tr.y_m[i];
      mdb += tr.path_loss_db[i];
    }
    mx /= double(tr.size());
    my /= double(tr.size());
    mdb /= double(tr.size());
    const auto& te = a.test.targets;
    for (std::size_t i = 0; i < te.size(); ++i) {
      pos_err.push_back(std::hypot(te.x_m[i] - mx, te.y_m[i] - my));
      pl_pred.push_back(mdb);
      pl_true.push_back(te.path_loss_db[i]);
    }
    b.random_sgcs = 1.0 / double(a.n_t);
    b.beam_chance = 1.0 / double(a.n_t);
  }
  b.mean_position_cdf90 = tasks::cdf90(pos_err);
  b.mean_path_loss_rmse = tasks::rmse(pl_pred, pl_true);
  return b;
}

namespace {

template <typename T>
nn::ParamList<T> prefixed(const nn::ParamList<T>& params, const std::string& prefix) {
  nn::ParamList<T> out;
  for (const auto& p : params) out.push_back({prefix + p.name, p.var});
  return out;
}

}  // namespace

void save_model(const std::filesystem::path& path, const RunResult& run,
                const std::vector<AreaSplit>& areas) {
  if (run.models.size() != areas.size()) throw DimensionError("one model per area split");
  const auto& first = run.models.front();
  nlohmann::json area_meta = nlohmann::json::array();
  for (const auto& a : areas)
    area_meta.push_back({{"label", a.label},
                         {"indices", a.area_indices},
                         {"pl_mean", a.path_loss.mean},
                         {"pl_std", a.path_loss.stddev}});
  io::Bundle b;
  b.meta = {{"variant", variant_name(run.config.variant)},
            {"seed", run.config.seed},
            {"epochs", run.config.epochs},
            {"batch", run.config.batch},
            {"lr", run.config.adam.lr},
            {"lora_rank", run.config.lora_rank},
            {"pooled", run.config.pooled},
            {"n_t", first.dims.n_t},
            {"encoder_dims", first.encoders.dims},
            {"csi_scale", first.encoders.csi_scale},
            {"backbone", first.backbone.config},
            {"vocab", instr::default_vocab().to_json()},
            {"areas", area_meta}};
  for (std::size_t k = 0; k < run.models.size(); ++k)
    io::add_params(b, prefixed(run.models[k].all_params(), "m" + std::to_string(k) + "/"));
  io::save_bundle(path, "AIMC", b);
}

LoadedModel load_model(const std::filesystem::path& path) {
  const auto b = io::load_bundle(path, "AIMC");
  LoadedModel m;
  enc::EncoderDims dims;
  bb::BackboneConfig bcfg;
  double csi_scale = 1.0;
  std::size_t n_t = 0;
  try {
    m.config.variant = parse_variant(b.meta.at("variant").get<std::string>());
    m.config.seed = b.meta.at("seed").get<std::uint64_t>();
    m.config.epochs = b.meta.at("epochs").get<std::size_t>();
    m.config.batch = b.meta.at("batch").get<std::size_t>();
    m.config.adam.lr = b.meta.at("lr").get<double>();
    m.config.lora_rank = b.meta.at("lora_rank").get<std::size_t>();
    m.config.pooled = b.meta.at("pooled").get<bool>();
    n_t = b.meta.at("n_t").get<std::size_t>();
    dims = b.meta.at("encoder_dims").get<enc::EncoderDims>();
    csi_scale = b.meta.at("csi_scale").get<double>();
    bcfg = b.meta.at("backbone").get<bb::BackboneConfig>();
    if (!(instr::Vocab::from_json(b.meta.at("vocab")) == instr::default_vocab()))
      throw CheckpointError("checkpoint vocabulary differs from this build");
    for (const auto& a : b.meta.at("areas")) {
      m.area_indices.push_back(a.at("indices").get<std::vector<std::uint64_t>>());
      m.path_loss.push_back({a.at("pl_mean").get<double>(), a.at("pl_std").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("model checkpoint header incomplete: ") + e.what());
  }
  for (std::size_t k = 0; k < m.area_indices.size(); ++k) {
    // fresh source weights per area so loaded values are never shared
    auto encoders = enc::EncoderPair<float>::init(dims, 0);
    encoders.csi_scale = csi_scale;
    const auto backbone = bb::Backbone<float>::init(bcfg, 0);
    auto model = Model<float>::build(m.config.variant, encoders, backbone,
                                     {n_t, m.config.lora_rank}, 0);
    io::load_params(b, prefixed(model.all_params(), "m" + std::to_string(k) + "/"));
    m.models.push_back(std::move(model));
  }
  return m;
}

std::vector<tasks::MetricReport> evaluate_checkpoint(const LoadedModel& m, const scene::Dataset& test) {
  if (test.records.empty()) throw EvaluationError("empty test split");
  const auto by_area = records_by_area(test);
  PooledEvaluation ev;
  for (std::size_t k = 0; k < m.models.size(); ++k) {
    const auto& model = m.models[k];
    if (test.n_t != model.dims.n_t || test.n_t * test.n_c != model.encoders.dims.csi_in)
      throw CheckpointError("dataset dimensions do not match the checkpoint topology");
    AreaSplit area;
    area.n_t = model.dims.n_t;
    area.area_indices = m.area_indices[k];
    area.path_loss = m.path_loss[k];
    std::vector<scene::SampleRecord> recs;
    std::vector<double> sides;
    for (auto index : area.area_indices) {
      const auto it = by_area.find(index);
      if (it == by_area.end())
        throw CheckpointError("test data has no samples for area " + std::to_string(index));
      recs.insert(recs.end(), it->second.records.begin(), it->second.records.end());
      sides.insert(sides.end(), it->second.records.size(), it->second.side_length);
    }
    area.test = prepare_split(recs, sides, model.encoders, area.path_loss, area.n_t);
    ev.add(model, area, area.test);
  }
  return ev.reports(std::string(variant_name(m.config.variant)), m.config.seed);
}

}  // namespace aimm::harness
