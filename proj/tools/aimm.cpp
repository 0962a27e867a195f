// Command-line front end: data generation, pretraining stages, training,
// evaluation and the ablation sweep.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aimm/harness/pipeline.hpp"

namespace fs = std::filesystem;
using namespace aimm;
using namespace aimm::harness;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kDependency = 4 };

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read config file " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

// Rows are appended; the header is written only into a new or empty file.
void append_csv(const fs::path& p, const std::vector<tasks::MetricReport>& reports) {
  const bool fresh = !fs::exists(p) || fs::file_size(p) == 0;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot write " + p.string());
  if (fresh) out << tasks::kCsvHeader << '\n';
  for (const auto& r : reports) out << tasks::csv_row(r) << '\n';
}

void print_reports(const std::vector<tasks::MetricReport>& reports) {
  for (const auto& r : reports)
    std::fprintf(stderr, "  %-15s %-9s %.4f\n", r.task.c_str(), r.metric.c_str(), r.value);
}

struct RunOptions {
  std::uint64_t seed = 1;
  std::string config_file;
  std::size_t epochs = 0;
  bool pooled = false;
  fs::path data, encoders, backbone;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--seed", o.seed, "Run seed")->capture_default_str();
  cmd->add_option("--data", o.data, "Data directory from `gen`")->required();
  cmd->add_option("--config-file", o.config_file, "key=value overrides");
  cmd->add_option("--epochs", o.epochs, "Override the epoch count");
  cmd->add_flag("--pooled", o.pooled, "One model for all areas instead of one per area");
  cmd->add_option("--encoders", o.encoders, "Encoder checkpoint (default DATA/encoders.aimw)");
  cmd->add_option("--backbone", o.backbone, "Backbone checkpoint (default DATA/backbone.aimb)");
}

RunConfig make_config(RunOptions& o, Variant v) {
  RunConfig cfg;
  cfg.variant = v;
  cfg.seed = o.seed;
  if (!o.config_file.empty()) apply_config_text(cfg, read_text(o.config_file));
  if (o.epochs) cfg.epochs = o.epochs;
  if (o.pooled) cfg.pooled = true;
  if (o.encoders.empty()) o.encoders = o.data / DataFiles::encoders;
  if (o.backbone.empty()) o.backbone = o.data / DataFiles::backbone;
  return cfg;
}

std::vector<AreaSplit> load_areas(const RunOptions& o, const Artifacts& art, bool pooled) {
  const auto train = read_required(o.data / DataFiles::train, "gen");
  const auto test = read_required(o.data / DataFiles::test, "gen");
  return prepare_areas(train, test, art.encoders, pooled);
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Multi-task wireless model trainer on synthetic scenes"};
  app.require_subcommand(1);

  DataLayout layout;
  fs::path gen_out;
  auto* gen = app.add_subcommand("gen", "Generate train/test and alignment datasets");
  gen->add_option("--seed", layout.seed)->capture_default_str();
  gen->add_option("--areas", layout.areas, "Downstream areas")->capture_default_str();
  gen->add_option("--samples", layout.samples, "Training samples per area (test gets a quarter)")
      ->capture_default_str();
  gen->add_option("--align-areas", layout.align_areas)->capture_default_str();
  gen->add_option("--align-samples", layout.align_samples, "Alignment pairs per area")
      ->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->required();

  fs::path align_data, align_out;
  enc::AlignOptions align_opts{.seed = 1};
  auto* align = app.add_subcommand("align", "Contrastive pretraining of the two encoders");
  align->add_option("--data", align_data)->required();
  align->add_option("--epochs", align_opts.epochs)->capture_default_str();
  align->add_option("--seed", align_opts.seed)->capture_default_str();
  align->add_option("--lr", align_opts.lr)->capture_default_str();
  align->add_option("--out", align_out, "Encoder checkpoint (default DATA/encoders.aimw)");

  fs::path lm_out;
  bb::PretrainOptions lm_opts{.seed = 1};
  auto* lm = app.add_subcommand("pretrain-lm", "Pretrain the language backbone");
  lm->add_option("--steps", lm_opts.steps)->capture_default_str();
  lm->add_option("--seed", lm_opts.seed)->capture_default_str();
  lm->add_option("--out", lm_out, "Backbone checkpoint")->required();

  RunOptions train_opts;
  std::string train_variant;
  fs::path train_out;
  auto* train = app.add_subcommand("train", "Train one configuration");
  train->add_option("--config", train_variant, "full, fp, sp, te, tc, wl, rl or wm")->required();
  add_run_options(train, train_opts);
  train->add_option("--out", train_out, "Output directory")->required();

  fs::path eval_ckpt, eval_data, eval_csv;
  std::string eval_split = "test";
  auto* eval = app.add_subcommand("eval", "Score a model checkpoint");
  eval->add_option("--ckpt", eval_ckpt)->required();
  eval->add_option("--data", eval_data)->required();
  eval->add_option("--csv", eval_csv, "CSV file to append to")->required();
  eval->add_option("--split", eval_split)->check(CLI::IsMember({"test", "train"}))->capture_default_str();

  RunOptions ab_opts;
  fs::path ab_csv;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and score all eight configurations");
  add_run_options(ablate_cmd, ab_opts);
  ablate_cmd->add_option("--csv", ab_csv)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  if (gen->parsed()) {
    layout.test_samples = std::max<std::size_t>(1, layout.samples / 4);
    write_data(gen_out, generate_data(layout));
    std::fprintf(stderr, "wrote %zu areas x (%zu + %zu) samples and %zu alignment pairs to %s\n",
                 layout.areas, layout.samples, layout.test_samples,
                 layout.align_areas * layout.align_samples, gen_out.c_str());
  } else if (align->parsed()) {
    const auto a = read_required(align_data / DataFiles::align, "gen");
    const auto t = read_required(align_data / DataFiles::align_test, "gen");
    const auto out = run_alignment(a, t, align_opts);
    if (align_out.empty()) align_out = align_data / DataFiles::encoders;
    enc::save_encoders(align_out, out.encoders);
    std::fprintf(stderr,
                 "alignment loss %.4f -> %.4f; held-out top-1 %.3f, cosine matched %.3f vs "
                 "mismatched %.3f\n",
                 out.report.epoch_loss.front(), out.report.epoch_loss.back(), out.heldout.top1,
                 out.heldout.matched_cosine, out.heldout.mismatched_cosine);
  } else if (lm->parsed()) {
    bb::PretrainReport rep;
    const auto b = bb::pretrain_lm({}, lm_opts, &rep);
    bb::save_backbone(lm_out, b, instr::default_vocab());
    std::fprintf(stderr, "perplexity %.2f -> %.2f\n", rep.initial_perplexity, rep.final_perplexity);
  } else if (train->parsed()) {
    const auto cfg = make_config(train_opts, parse_variant(train_variant));
    const auto art = load_artifacts(cfg.variant, train_opts.encoders, train_opts.backbone);
    const auto areas = load_areas(train_opts, art, cfg.pooled);
    auto run_cfg = cfg;
    run_cfg.eval_each_epoch = true;
    const auto run = run_variant(run_cfg, art, areas);
    fs::create_directories(train_out);
    save_model(train_out / "model.ckpt", run, areas);
    for (std::size_t k = 0; k < run.models.size(); ++k)
      if (run.models[k].layout.has_lora)
        bb::save_lora(train_out / ("lora_" + areas[k].label + ".aiml"), run.models[k].lora);
    write_text(train_out / "metrics.csv", csv_text(run.reports));
    std::string hist = "epoch," + std::string(tasks::kCsvHeader) + "\n";
    for (const auto& [epoch, r] : run.history)
      hist += std::to_string(epoch) + "," + tasks::csv_row(r) + "\n";
    write_text(train_out / "history.csv", hist);
    std::fprintf(stderr, "%s, seed %llu, %zu model(s):\n", train_variant.c_str(),
                 static_cast<unsigned long long>(cfg.seed), run.models.size());
    print_reports(run.reports);
  } else if (eval->parsed()) {
    if (!fs::exists(eval_ckpt)) throw DependencyError("train", eval_ckpt.string() + " not found");
    const auto model = load_model(eval_ckpt);
    const auto data = read_required(
        eval_data / (eval_split == "test" ? DataFiles::test : DataFiles::train), "gen");
    const auto reports = evaluate_checkpoint(model, data);
    append_csv(eval_csv, reports);
    print_reports(reports);
  } else if (ablate_cmd->parsed()) {
    const auto cfg = make_config(ab_opts, Variant::full);
    const auto art = load_artifacts_all(ab_opts.encoders, ab_opts.backbone);
    const auto areas = load_areas(ab_opts, art, cfg.pooled);
    const auto results = ablate(cfg, art, areas, thread_cap());
    std::vector<tasks::MetricReport> all;
    for (const auto& r : results) all.insert(all.end(), r.reports.begin(), r.reports.end());
    write_text(ab_csv, csv_text(all));
    for (const auto& r : results) {
      std::fprintf(stderr, "%s\n", std::string(variant_name(r.config.variant)).c_str());
      print_reports(r.reports);
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const VocabularyError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const DependencyError& e) {
    std::fprintf(stderr, "dependency error: %s\n", e.what());
    return kDependency;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return kData;
  } catch (const EvaluationError& e) {
    std::fprintf(stderr, "evaluation error: %s\n", e.what());
    return kData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
}
