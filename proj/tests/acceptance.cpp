// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.
//
//   acceptance [--only 1,2,...] [--seed S]
//
// The ordering and outcome checks are tied to kPinnedSeed; they were fixed
// before the first full run and are not expected to hold for every seed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "aimm/harness/pipeline.hpp"
#include "aimm/io/binary.hpp"
#include "aimm/numerics/grad_check.hpp"
#include "oracles.hpp"

using namespace aimm;
using namespace aimm::harness;
using V = ad::Var<double>;
using clk = std::chrono::steady_clock;

namespace {

constexpr std::uint64_t kPinnedSeed = 1;

struct Line {
  int id;
  std::string name;
  bool pass;
  std::string detail;
  double seconds;
};

std::vector<Line> g_lines;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void report(int id, const std::string& name, bool pass, const std::string& detail, double seconds) {
  g_lines.push_back({id, name, pass, detail, seconds});
  std::printf("[%s] criterion %d: %s | %s (%.1f s)\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str(), seconds);
  std::fflush(stdout);
}

double since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

Tensor<double> random_tensor(Rng& rng, const Shape& shape, double sd = 1.0) {
  return nn::normal_tensor<double>(shape, sd, rng);
}

// ---------------------------------------------------------------------------
// 1. gradients

struct OpCase {
  std::string name;
  std::vector<Shape> shapes;
  std::function<V(const std::vector<V>&)> apply;
};

std::vector<OpCase> op_cases() {
  static const std::vector<int> ids{4, 0, 4, 2};
  static const std::vector<int> labels{0, 2, 1, 2};
  static const Tensor<double> target = [] {
    Rng r(99);
    return random_tensor(r, {4, 6});
  }();
  return {
      {"matmul", {{3, 4}, {4, 5}}, [](auto& l) { return ad::matmul(l[0], l[1]); }},
      {"matmul_bt", {{4, 5}, {3, 5}}, [](auto& l) { return ad::matmul_bt(l[0], l[1]); }},
      {"transpose", {{4, 5}}, [](auto& l) { return ad::transpose(l[0]); }},
      {"add", {{3, 4}, {3, 4}}, [](auto& l) { return ad::add(l[0], l[1]); }},
      {"sub", {{3, 4}, {3, 4}}, [](auto& l) { return ad::sub(l[0], l[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](auto& l) { return ad::mul(l[0], l[1]); }},
      {"scale", {{3, 4}}, [](auto& l) { return ad::scale(l[0], 0.7); }},
      {"add_row", {{3, 4}, {4}}, [](auto& l) { return ad::add_row(l[0], l[1]); }},
      {"mul_scalar", {{3, 4}, {1}}, [](auto& l) { return ad::mul_scalar(l[0], l[1]); }},
      {"exp", {{3, 4}}, [](auto& l) { return ad::exp(l[0]); }},
      {"gelu", {{4, 6}}, [](auto& l) { return ad::gelu(l[0]); }},
      {"softmax_rows", {{4, 6}}, [](auto& l) { return ad::softmax_rows(l[0]); }},
      {"layer_norm", {{4, 6}, {6}, {6}},
       [](auto& l) { return ad::layer_norm(l[0], l[1], l[2], 1e-5); }},
      {"l2_normalize_rows", {{4, 6}}, [](auto& l) { return ad::l2_normalize_rows(l[0]); }},
      {"sum", {{3, 3}}, [](auto& l) { return ad::sum(ad::mul(l[0], l[0])); }},
      {"mean", {{3, 3}}, [](auto& l) { return ad::mean(ad::mul(l[0], l[0])); }},
      {"gather_rows", {{5, 3}}, [](auto& l) { return ad::gather_rows(l[0], ids); }},
      {"concat_rows", {{2, 3}, {4, 3}}, [](auto& l) { return ad::concat_rows<double>({l[0], l[1]}); }},
      {"slice_rows", {{5, 3}}, [](auto& l) { return ad::slice_rows(l[0], 1, 3); }},
      {"prepend_to_block", {{3, 4}, {2, 4}}, [](auto& l) { return ad::prepend_to_block(l[0], l[1]); }},
      {"add_positional", {{6, 4}, {5, 4}}, [](auto& l) { return ad::add_positional(l[0], l[1], 3); }},
      {"last_rows", {{6, 4}}, [](auto& l) { return ad::last_rows(l[0], 3); }},
      {"causal_attention", {{8, 6}, {8, 6}, {8, 6}},
       [](auto& l) { return ad::causal_attention(l[0], l[1], l[2], 4, 2); }},
      {"apply_lora", {{5, 4}, {5, 2}, {2, 4}},
       [](auto& l) { return bb::apply_lora<double>(l[0], {l[1], l[2]}); }},
      {"mse", {{4, 6}}, [](auto& l) { return ad::mse(l[0], target); }},
      {"cross_entropy", {{4, 3}}, [](auto& l) { return ad::cross_entropy(l[0], labels); }},
      {"focal_loss", {{4, 3}}, [](auto& l) { return ad::focal_loss(l[0], labels, 2.0); }},
      {"sgcs_loss", {{4, 6}}, [](auto& l) { return ad::sgcs_loss(l[0], target); }},
      {"info_nce", {{4, 5}, {4, 5}, {1}},
       [](auto& l) {
         return enc::info_nce(ad::l2_normalize_rows(l[0]), ad::l2_normalize_rows(l[1]), l[2]);
       }},
  };
}

void criterion_gradients() {
  const auto t0 = clk::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0;
  auto note = [&](double err, const std::string& name) {
    ++checks;
    if (err > worst) worst = err, worst_name = name;
  };
  for (const auto& op : op_cases()) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed, {std::hash<std::string>{}(op.name)});
      std::vector<V> leaves;
      for (const auto& s : op.shapes) leaves.push_back(V::leaf(random_tensor(rng, s), true));
      const auto out_shape = op.apply(leaves).shape();
      const auto w = V::constant(random_tensor(rng, out_shape));
      note(ad::grad_check_leaves([&] { return ad::sum(ad::mul(op.apply(leaves), w)); }, leaves),
           op.name);
    }
  }

  // full per-task loss through the model, every configuration
  enc::EncoderDims ed;
  ed.env_in = 6;
  ed.csi_in = 8;
  ed.hidden = 5;
  ed.d_enc = 4;
  bb::BackboneConfig bc;
  bc.d_model = 8;
  bc.n_layers = 2;
  bc.n_heads = 2;
  bc.ffn = 12;
  const std::size_t n_t = 4, batch = 3;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto encoders = enc::EncoderPair<double>::init(ed, 100 + seed);
    const auto backbone = bb::Backbone<double>::init(bc, 200 + seed);
    for (auto v : kAllVariants) {
      const auto model = Model<double>::build(v, encoders, backbone, {n_t, 2}, 300 + seed);
      // LoRA B starts at zero; move it off zero so its gradient path is exercised
      Rng rng(seed, {0x4752 /* "GR" */, std::uint64_t(v)});
      for (const auto& p : model.groups().at("lora"))
        p.var.ptr()->value = random_tensor(rng, p.var.shape(), 0.1);
      nn::ParamList<double> trainable = model.trainable_params();
      std::vector<V> leaves;
      for (const auto& p : trainable) leaves.push_back(p.var);
      for (auto t : instr::kAllTasks) {
        const auto spec = instr::task_spec(t, n_t);
        const auto channel = spec.modality == instr::Modality::channel;
        const auto x = random_tensor(rng, {batch, channel ? ed.csi_in : ed.env_in});
        tasks::LabelBatch<double> lb;
        if (spec.loss == instr::LossKind::cross_entropy || spec.loss == instr::LossKind::focal) {
          for (std::size_t i = 0; i < batch; ++i)
            lb.classes.push_back(int(rng.uniform_int(0, std::int64_t(spec.out_width) - 1)));
        } else {
          lb.target = random_tensor(rng, {batch, spec.out_width});
        }
        auto loss = [&] {
          return tasks::task_loss(spec, model.forward_codes(t, model.encode(t, V::constant(x))), lb);
        };
        ad::GradCheckOptions opts;
        opts.coords_per_leaf = 4;
        opts.seed = seed;
        // two stacked blocks plus encoder and head: plain central differences
        // at 1e-6 sit at the rounding floor here
        opts.fourth_order = true;
        opts.step = 1e-4;
        note(ad::grad_check_leaves(loss, leaves, opts),
             std::string(variant_name(v)) + "/" + std::string(spec.name));
      }
    }
  }
  const double secs = since(t0);
  report(1, "gradient suite", worst < 1e-4 && secs < 60.0,
         fmt("%zu checks over 10 seeds, max relative error %.2e (%s); limit 1e-4 in < 60 s", checks,
             worst, worst_name.c_str()),
         secs);
}

// ---------------------------------------------------------------------------
// 2. labels

void criterion_labels(std::uint64_t seed) {
  const auto t0 = clk::now();
  const scene::ChannelConfig cfg;
  double worst_sgcs = 1.0, worst_fspl = 0.0;
  std::size_t beam_bad = 0, los_bad = 0, los_count = 0;
  const std::size_t n = 1000;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t area_index = i % 50;
    const auto area = scene::generate_scene(seed, area_index);
    const auto smp = scene::generate_sample(area, seed, area_index, 5'000'000 + i, cfg);
    worst_sgcs = std::min(worst_sgcs, sgcs(smp.labels.precoder, oracle::power_iteration_u1(smp.csi)));
    beam_bad += smp.labels.beam_index != oracle::brute_force_beam(smp.csi);
    const bool los = !oracle::edge_blocked(smp.scene.bs_pos, smp.scene.ue_pos, smp.scene.buildings);
    los_bad += smp.labels.los != los;
    los_count += los;
    // the same endpoints with every building removed
    auto open = smp.scene;
    open.buildings.clear();
    const auto ps = scene::trace_paths(open, cfg);
    const auto labels = scene::make_labels(open, ps, scene::csi_matrix(ps, cfg), cfg);
    const double d = std::hypot(open.ue_pos.x - open.bs_pos.x, open.ue_pos.y - open.bs_pos.y);
    worst_fspl = std::max(worst_fspl, std::abs(labels.path_loss_db - oracle::fspl_db(cfg.f_center, d, cfg.c)));
  }
  const double secs = since(t0);
  report(2, "label oracles", worst_sgcs > 1.0 - 1e-8 && beam_bad == 0 && los_bad == 0 &&
                                 worst_fspl < 1e-6 && secs < 120.0,
         fmt("%zu samples (%zu LOS): min precoder SGCS 1-%.1e, beam mismatches %zu, LOS "
             "mismatches %zu, max FSPL error %.1e dB",
             n, los_count, 1.0 - worst_sgcs, beam_bad, los_bad, worst_fspl),
         secs);
}

// ---------------------------------------------------------------------------
// 3. identities

void criterion_identities(std::uint64_t seed) {
  const auto t0 = clk::now();
  std::vector<std::string> failed;

  const bb::BackboneConfig bc;
  const auto backbone = bb::Backbone<float>::init(bc, seed);
  const auto lora = bb::LoraSet<float>::init(bc, 4, seed + 1);
  Rng rng(seed, {0x4944 /* "ID" */});
  const auto x = ad::Var<float>::constant(nn::normal_tensor<float>({5 * 6, bc.d_model}, 1.0, rng));
  if (!(backbone.forward(x, 6, &lora).value() == backbone.forward(x, 6).value()))
    failed.push_back("LoRA(B=0)");

  double focal_gap = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const auto logits = V::constant(random_tensor(rng, {8, 5}, 3.0));
    std::vector<int> labels;
    for (int i = 0; i < 8; ++i) labels.push_back(int(rng.uniform_int(0, 4)));
    focal_gap = std::max(focal_gap, std::abs(ad::focal_loss(logits, labels, 0.0).item() -
                                             ad::cross_entropy(logits, labels).item()));
  }
  if (!(focal_gap <= 1e-12)) failed.push_back("focal");

  double phase_gap = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    CVector a(16), b(16);
    for (auto& z : a) z = {rng.normal(), rng.normal()};
    for (auto& z : b) z = {rng.normal(), rng.normal()};
    const cplx rot = std::polar(1.0, rng.uniform(0.0, 2.0 * std::numbers::pi));
    CVector ar = a;
    for (auto& z : ar) z *= rot;
    phase_gap = std::max(phase_gap, std::abs(sgcs(a, b) - sgcs(ar, b)));
  }
  if (!(phase_gap <= 1e-9)) failed.push_back("SGCS phase");

  const auto cb = dft_codebook(16);
  double unitary_gap = 0.0;
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) {
      cplx acc = 0.0;
      for (std::size_t m = 0; m < 16; ++m) acc += std::conj(cb(m, i)) * cb(m, j);
      unitary_gap = std::max(unitary_gap, std::abs(acc - cplx(i == j ? 1.0 : 0.0)));
    }
  if (!(unitary_gap <= 1e-12)) failed.push_back("DFT unitarity");

  const double c90 = tasks::cdf90({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  if (c90 != 9.0) failed.push_back("CDF90");

  std::string which;
  for (const auto& f : failed) which += " " + f;
  report(3, "architectural identities", failed.empty(),
         fmt("LoRA(B=0) bitwise %s; |focal0-CE| %.1e; SGCS phase %.1e; codebook %.1e; CDF90 %.0f%s",
             failed.empty() || failed.front() != "LoRA(B=0)" ? "equal" : "differs", focal_gap,
             phase_gap, unitary_gap, c90, which.empty() ? "" : (" | failed:" + which).c_str()),
         since(t0));
}

// ---------------------------------------------------------------------------
// Shared desk-scale pipeline.

struct World {
  GeneratedData data;
  AlignmentOutcome align;
  bb::PretrainReport lm_report;
  Artifacts art;
  std::vector<AreaSplit> areas;
  double align_seconds = 0, lm_seconds = 0;
};

World build_world(std::uint64_t seed) {
  World w;
  DataLayout layout;
  layout.seed = seed;
  w.data = generate_data(layout);
  auto t = clk::now();
  w.align = run_alignment(w.data.align, w.data.align_test, {.seed = seed});
  w.align_seconds = since(t);
  t = clk::now();
  w.art.encoders = w.align.encoders;
  w.art.backbone = bb::pretrain_lm({}, {.seed = seed}, &w.lm_report);
  nn::set_trainable(w.art.backbone.params(), false);
  w.lm_seconds = since(t);
  w.areas = prepare_areas(w.data.train, w.data.test, w.art.encoders, false);
  return w;
}

// Higher is better for every metric except the error-type ones.
bool better(const tasks::MetricReport& a, const tasks::MetricReport& b, bool strict) {
  const bool lower = a.metric == "cdf90_m" || a.metric == "rmse_db";
  if (strict) return lower ? a.value < b.value : a.value > b.value;
  return lower ? a.value <= b.value : a.value >= b.value;
}

const tasks::MetricReport& find(const RunResult& r, const std::string& task) {
  for (const auto& m : r.reports)
    if (m.task == task) return m;
  throw EvaluationError("no report for " + task);
}

// ---------------------------------------------------------------------------
// 8. alignment

void criterion_alignment(const World& w) {
  const auto& h = w.align.heldout;
  report(8, "alignment retrieval", h.top1 > 10.0 / 64.0 && h.matched_cosine > h.mismatched_cosine,
         fmt("held-out top-1 %.3f at B=64 over %zu batches (need > %.3f); matched cosine %.3f vs "
             "mismatched %.3f; loss %.3f -> %.3f",
             h.top1, h.batches, 10.0 / 64.0, h.matched_cosine, h.mismatched_cosine,
             w.align.report.epoch_loss.front(), w.align.report.epoch_loss.back()),
         w.align_seconds);
}

// ---------------------------------------------------------------------------
// 4. census

void criterion_census(const std::vector<RunResult>& runs, double secs) {
  std::string detail;
  bool ok = runs.size() == kAllVariants.size();
  for (const auto& r : runs) {
    const auto want = layout_for(r.config.variant).trainable_groups();
    bool this_ok = true;
    for (const auto& o : r.outcomes) this_ok = this_ok && o.changed == want;
    if (r.config.variant == Variant::wm)
      for (const auto& o : r.outcomes) this_ok = this_ok && o.backbone_calls == 0;
    if (r.config.variant == Variant::wl)
      this_ok = this_ok && nn::param_count(r.models.front().groups().at("lora")) == 0;
    ok = ok && this_ok;
    std::string changed;
    for (const auto& g : r.outcomes.front().changed) changed += (changed.empty() ? "" : "+") + g;
    detail += fmt("%s%s:%s%s", detail.empty() ? "" : "; ", std::string(variant_name(r.config.variant)).c_str(),
                  changed.c_str(), this_ok ? "" : "(MISMATCH)");
  }
  report(4, "freeze census", ok, detail, secs);
}

// ---------------------------------------------------------------------------
// 5. outcome of the full configuration

void criterion_outcome(const World& w, const RunResult& full) {
  const auto base = baselines(w.areas);
  const std::size_t n_t = w.areas.front().n_t;
  const double los = find(full, "los_nlos").value;
  const double beam = find(full, "beam_selection").value;
  const double pos = find(full, "positioning").value;
  const double sg = find(full, "precoding").value;
  const double pl = find(full, "path_loss").value;
  // pooled test-label spread, for reference; the bar uses the within-area one
  std::vector<double> all;
  for (const auto& a : w.areas) all.insert(all.end(), a.test.targets.path_loss_db.begin(), a.test.targets.path_loss_db.end());
  double mean = 0, var = 0;
  for (double v : all) mean += v;
  mean /= double(all.size());
  for (double v : all) var += (v - mean) * (v - mean);
  const double pooled_std = std::sqrt(var / double(all.size()));

  struct Check {
    const char* name;
    bool ok;
    std::string text;
  };
  const std::vector<Check> checks = {
      {"los", los >= 0.85, fmt("LOS acc %.3f (>= 0.85)", los)},
      {"beam", beam >= 5.0 / double(n_t), fmt("beam top-1 %.3f (>= %.3f)", beam, 5.0 / double(n_t))},
      {"pos", pos <= 0.7 * base.mean_position_cdf90,
       fmt("pos CDF90 %.1f m (<= 0.7 x %.1f = %.1f)", pos, base.mean_position_cdf90, 0.7 * base.mean_position_cdf90)},
      {"sgcs", sg >= 0.5 && sg >= 3.0 * base.random_sgcs,
       fmt("precoding SGCS %.3f (>= 0.5 and >= %.3f)", sg, 3.0 * base.random_sgcs)},
      {"pl", pl <= 0.8 * base.mean_path_loss_rmse,
       fmt("path loss RMSE %.2f dB (<= 0.8 x %.2f = %.2f; pooled label std %.2f)", pl,
           base.mean_path_loss_rmse, 0.8 * base.mean_path_loss_rmse, pooled_std)},
      {"time", full.cpu_seconds < 900.0, fmt("training CPU %.0f s (< 900)", full.cpu_seconds)},
  };
  bool ok = true;
  std::string detail, failed;
  for (const auto& c : checks) {
    ok = ok && c.ok;
    detail += (detail.empty() ? "" : "; ") + c.text;
    if (!c.ok) failed += std::string(failed.empty() ? "" : ",") + c.name;
  }
  if (!failed.empty()) detail += " | failed: " + failed;
  report(5, "desk-scale outcome (full)", ok, detail, full.cpu_seconds);
}

// ---------------------------------------------------------------------------
// 6. orderings

void criterion_orderings(const std::vector<RunResult>& runs) {
  auto run = [&](Variant v) -> const RunResult& {
    for (const auto& r : runs)
      if (r.config.variant == v) return r;
    throw EvaluationError("missing run");
  };
  const auto& full = run(Variant::full);
  auto wins = [&](Variant other, bool strict) {
    std::size_t n = 0;
    for (const auto& m : full.reports) n += better(m, find(run(other), m.task), strict);
    return n;
  };
  const bool sp_sgcs = better(find(full, "precoding"), find(run(Variant::sp), "precoding"), true);
  const bool sp_beam = better(find(full, "beam_selection"), find(run(Variant::sp), "beam_selection"), true);
  const auto rl = wins(Variant::rl, false);
  const auto wm = wins(Variant::wm, true);
  report(6, "ablation orderings", sp_sgcs && sp_beam && rl >= 3 && wm >= 3,
         fmt("full>sp precoding %s (%.3f vs %.3f), beam %s (%.3f vs %.3f); full>=rl on %zu/5; "
             "full>wm on %zu/5",
             sp_sgcs ? "yes" : "no", find(full, "precoding").value, find(run(Variant::sp), "precoding").value,
             sp_beam ? "yes" : "no", find(full, "beam_selection").value,
             find(run(Variant::sp), "beam_selection").value, rl, wm),
         0.0);
}

// ---------------------------------------------------------------------------
// 7. determinism and persistence

std::vector<std::uint8_t> slurp(const std::filesystem::path& p) { return io::read_file(p); }

void criterion_determinism(const World& w, const RunResult& full_run, std::uint64_t seed) {
  const auto t0 = clk::now();
  std::vector<std::string> failed;
  const auto dir = std::filesystem::temp_directory_path() / fmt("aimm_acceptance_%llu", (unsigned long long)seed);
  std::filesystem::create_directories(dir);

  // repeated ablation on a reduced split: byte-identical CSV, also across thread counts
  scene::Dataset small_train = w.data.train, small_test = w.data.test;
  {
    DataLayout l;
    l.seed = seed;
    l.samples = 120;
    l.test_samples = 30;
    l.align_areas = 1;
    l.align_samples = 1;
    l.align_test_samples = 1;
    const auto d = generate_data(l);
    small_train = d.train;
    small_test = d.test;
  }
  const auto small = prepare_areas(small_train, small_test, w.art.encoders, false);
  RunConfig base;
  base.seed = seed;
  base.epochs = 3;
  auto sweep_csv = [&](std::size_t threads) {
    std::vector<tasks::MetricReport> all;
    for (const auto& r : ablate(base, w.art, small, threads))
      all.insert(all.end(), r.reports.begin(), r.reports.end());
    return csv_text(all);
  };
  const auto csv1 = sweep_csv(thread_cap());
  const auto csv2 = sweep_csv(thread_cap());
  const auto csv3 = sweep_csv(thread_cap() == 1 ? 2 : 1);
  if (csv1 != csv2) failed.push_back("repeated ablate");
  if (csv1 != csv3) failed.push_back("ablate across thread counts");

  // dataset round trip
  scene::write_dataset(dir / "train.aimm", w.data.train);
  const auto back = scene::read_dataset(dir / "train.aimm");
  if (!(back.records == w.data.train.records) || scene::encode_dataset(back) != slurp(dir / "train.aimm"))
    failed.push_back("dataset");

  // checkpoints: save, load, save again
  save_model(dir / "model.ckpt", full_run, w.areas);
  const auto loaded = load_model(dir / "model.ckpt");
  RunResult again;
  again.config = loaded.config;
  again.models = loaded.models;
  save_model(dir / "model2.ckpt", again, w.areas);
  if (slurp(dir / "model.ckpt") != slurp(dir / "model2.ckpt")) failed.push_back("model checkpoint");
  if (csv_text(evaluate_checkpoint(loaded, w.data.test)) != csv_text(full_run.reports))
    failed.push_back("checkpoint metrics");

  enc::save_encoders(dir / "enc.aimw", w.art.encoders);
  enc::save_encoders(dir / "enc2.aimw", enc::load_encoders(dir / "enc.aimw"));
  if (slurp(dir / "enc.aimw") != slurp(dir / "enc2.aimw")) failed.push_back("encoder checkpoint");
  bb::save_backbone(dir / "bb.aimb", w.art.backbone, instr::default_vocab());
  bb::save_backbone(dir / "bb2.aimb", bb::load_backbone(dir / "bb.aimb", instr::default_vocab()),
                    instr::default_vocab());
  if (slurp(dir / "bb.aimb") != slurp(dir / "bb2.aimb")) failed.push_back("backbone checkpoint");
  const auto& lora = full_run.models.front().lora;
  bb::save_lora(dir / "l.aiml", lora);
  bb::save_lora(dir / "l2.aiml", bb::load_lora(dir / "l.aiml", w.art.backbone.config));
  if (slurp(dir / "l.aiml") != slurp(dir / "l2.aiml")) failed.push_back("LoRA file");

  // resume mid-epoch from a serialized state
  {
    RunConfig cfg = base;
    const ModelDims dims{small.front().n_t, cfg.lora_rank};
    auto straight = Model<float>::build(cfg.variant, w.art.encoders, w.art.backbone, dims, 77);
    Trainer t1(straight, small.front(), cfg);
    t1.run();
    auto first = Model<float>::build(cfg.variant, w.art.encoders, w.art.backbone, dims, 77);
    Trainer t2(first, small.front(), cfg);
    t2.run_until(t2.steps_per_epoch() + 7);
    io::save_bundle(dir / "state.aims", "AIMS", t2.save_state());
    auto resumed = Model<float>::build(cfg.variant, w.art.encoders, w.art.backbone, dims, 77);
    Trainer t3(resumed, small.front(), cfg);
    t3.load_state(io::load_bundle(dir / "state.aims", "AIMS"));
    t3.run();
    bool same = census(resumed) == census(straight);
    for (auto t : instr::kAllTasks)
      same = same && predict(resumed, small.front().test, t) == predict(straight, small.front().test, t);
    if (!same) failed.push_back("resume");
  }
  std::filesystem::remove_all(dir);

  std::string which;
  for (const auto& f : failed) which += (which.empty() ? "" : ", ") + f;
  report(7, "determinism and persistence", failed.empty(),
         failed.empty() ? fmt("3 reduced ablations identical (%zu CSV bytes); dataset, model, encoder, "
                              "backbone, LoRA files byte-exact; resume bit-exact",
                              csv1.size())
                        : "failed: " + which,
         since(t0));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  std::uint64_t seed = kPinnedSeed;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--only") && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else if (!std::strcmp(argv[i], "--seed") && i + 1 < argc) {
      seed = std::stoull(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: acceptance [--only 1,2,...] [--seed S]\n");
      return 2;
    }
  }
  auto want = [&](int id) { return only.empty() || only.contains(id); };
  std::printf("acceptance run, seed %llu, %zu thread(s)\n", (unsigned long long)seed, thread_cap());

  try {
    if (want(1)) criterion_gradients();
    if (want(2)) criterion_labels(seed);
    if (want(3)) criterion_identities(seed);
    if (want(4) || want(5) || want(6) || want(7) || want(8)) {
      auto t = clk::now();
      const World w = build_world(seed);
      std::printf("pipeline: data %zu+%zu samples, alignment %.0f s, backbone pretraining %.0f s "
                  "(perplexity %.2f -> %.2f), setup total %.0f s\n",
                  w.data.train.records.size(), w.data.test.records.size(), w.align_seconds,
                  w.lm_seconds, w.lm_report.initial_perplexity, w.lm_report.final_perplexity, since(t));
      if (want(8)) criterion_alignment(w);
      if (want(4) || want(5) || want(6) || want(7)) {
        RunConfig base;
        base.seed = seed;
        t = clk::now();
        const auto runs = ablate(base, w.art, w.areas, thread_cap());
        const double secs = since(t);
        std::printf("ablation: %zu configurations in %.0f s\n%s", runs.size(), secs,
                    std::string(tasks::kCsvHeader).c_str());
        std::printf("\n");
        for (const auto& r : runs)
          for (const auto& m : r.reports) std::printf("%s\n", tasks::csv_row(m).c_str());
        const auto b = baselines(w.areas);
        std::printf("baselines: mean-position CDF90 %.2f m, mean path-loss RMSE %.2f dB, random SGCS "
                    "%.4f, beam chance %.4f\n",
                    b.mean_position_cdf90, b.mean_path_loss_rmse, b.random_sgcs, b.beam_chance);
        if (want(4)) criterion_census(runs, secs);
        if (want(5)) criterion_outcome(w, runs.front());
        if (want(6)) criterion_orderings(runs);
        if (want(7)) criterion_determinism(w, runs.front(), seed);
      }
    }
  } catch (const std::exception& e) {
    std::printf("[FAIL] acceptance aborted: %s\n", e.what());
    return 1;
  }

  std::size_t passed = 0;
  for (const auto& l : g_lines) passed += l.pass;
  std::printf("summary: %zu/%zu criteria passed\n", passed, g_lines.size());
  return passed == g_lines.size() ? 0 : 1;
}
