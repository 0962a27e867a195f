#include "aimm/harness/pipeline.hpp"

namespace aimm::harness {

GeneratedData generate_data(const DataLayout& l) {
  if (l.areas == 0 || l.samples == 0 || l.test_samples == 0)
    throw ConfigError("need at least one area and one training and test sample");
  if (l.align_areas == 0 || l.align_samples == 0 || l.align_test_samples == 0)
    throw ConfigError("alignment corpus must not be empty");
  if (l.samples + l.test_samples > kAlignFirstSample)
    throw ConfigError("downstream samples would overlap the alignment corpus");
  std::vector<scene::AreaSpec> train, test, align, align_test;
  for (std::uint64_t a = 0; a < l.areas; ++a) {
    train.push_back({a, 0, l.samples});
    test.push_back({a, l.samples, l.test_samples});
  }
  for (std::uint64_t a = 0; a < l.align_areas; ++a) {
    align.push_back({a, kAlignFirstSample, l.align_samples});
    align_test.push_back({a, kAlignFirstSample + l.align_samples, l.align_test_samples});
  }
  return {scene::build_dataset(l.seed, train, l.channel, "train"),
          scene::build_dataset(l.seed, test, l.channel, "test"),
          scene::build_dataset(l.seed, align, l.channel, "align"),
          scene::build_dataset(l.seed, align_test, l.channel, "align_test")};
}

void write_data(const std::filesystem::path& dir, const GeneratedData& d) {
  std::filesystem::create_directories(dir);
  scene::write_dataset(dir / DataFiles::train, d.train);
  scene::write_dataset(dir / DataFiles::test, d.test);
  scene::write_dataset(dir / DataFiles::align, d.align);
  scene::write_dataset(dir / DataFiles::align_test, d.align_test);
}

scene::Dataset read_required(const std::filesystem::path& path, const std::string& stage) {
  if (!std::filesystem::exists(path)) throw DependencyError(stage, path.string() + " not found");
  return scene::read_dataset(path);
}

AlignmentOutcome run_alignment(const scene::Dataset& align, const scene::Dataset& align_test,
                               const enc::AlignOptions& options, std::size_t eval_batch) {
  AlignmentOutcome out;
  const double scale = align.csi_rms();
  enc::EncoderDims dims;
  dims.csi_in = align.n_t * align.n_c;
  out.encoders = enc::train_alignment(enc::environment_inputs(align.records),
                                      enc::channel_inputs(align.records, scale), scale, dims,
                                      options, &out.report);
  nn::set_trainable(out.encoders.all_params(), false);
  Rng rng(options.seed, {0x48454c44 /* "HELD" */});
  const auto order = nn::shuffled_indices(align_test.records.size(), rng);
  out.heldout = enc::evaluate_retrieval(
      out.encoders, nn::take_rows(enc::environment_inputs(align_test.records), order),
      nn::take_rows(enc::channel_inputs(align_test.records, scale), order), eval_batch);
  return out;
}

namespace {

enc::EncoderPair<float> load_encoders_checked(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p))
    throw DependencyError("align", "encoder checkpoint " + p.string() + " not found");
  auto e = enc::load_encoders(p);
  nn::set_trainable(e.all_params(), false);
  return e;
}

bb::Backbone<float> load_backbone_checked(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p))
    throw DependencyError("pretrain-lm", "backbone checkpoint " + p.string() + " not found");
  auto b = bb::load_backbone(p, instr::default_vocab());
  nn::set_trainable(b.params(), false);
  return b;
}

}  // namespace

Artifacts load_artifacts(Variant v, const std::filesystem::path& encoders,
                         const std::filesystem::path& backbone) {
  const auto layout = layout_for(v);
  Artifacts a{load_encoders_checked(encoders), {}};
  if (layout.uses_backbone && !layout.random_backbone) {
    a.backbone = load_backbone_checked(backbone);
  } else {
    // only the shape matters here: rl draws its own weights, wm never runs it
    a.backbone = bb::Backbone<float>::init({}, 0);
    nn::set_trainable(a.backbone.params(), false);
  }
  return a;
}

Artifacts load_artifacts_all(const std::filesystem::path& encoders,
                             const std::filesystem::path& backbone) {
  return {load_encoders_checked(encoders), load_backbone_checked(backbone)};
}

}  // namespace aimm::harness
