#pragma once

#include <filesystem>
#include <optional>

#include "aimm/harness/training.hpp"

namespace aimm::harness {

// Sample budget of a generated data directory. Downstream areas are
// 0..areas-1 with training samples [0, samples) and test samples
// [samples, samples + test_samples). The alignment corpus draws its own
// sample indices from kAlignFirstSample upward, so it never repeats a
// downstream sample.
struct DataLayout {
  std::uint64_t seed = 1;
  std::size_t areas = 2;
  std::size_t samples = 2000;
  std::size_t test_samples = 500;
  std::size_t align_areas = 5;
  std::size_t align_samples = 400;
  std::size_t align_test_samples = 64;
  scene::ChannelConfig channel;
};

inline constexpr std::uint64_t kAlignFirstSample = 1'000'000;

struct DataFiles {
  static constexpr const char* train = "train.aimm";
  static constexpr const char* test = "test.aimm";
  static constexpr const char* align = "align.aimm";
  static constexpr const char* align_test = "align_test.aimm";
  static constexpr const char* encoders = "encoders.aimw";
  static constexpr const char* backbone = "backbone.aimb";
};

struct GeneratedData {
  scene::Dataset train, test, align, align_test;
};

GeneratedData generate_data(const DataLayout& layout);
void write_data(const std::filesystem::path& dir, const GeneratedData& data);

// Reads a dataset, reporting a missing file as a dependency on `stage`.
scene::Dataset read_required(const std::filesystem::path& path, const std::string& stage);

struct AlignmentOutcome {
  enc::EncoderPair<float> encoders;
  enc::AlignReport report;
  enc::RetrievalStats heldout;
};

// Contrastive pretraining on `align`, scored by in-batch retrieval on a
// seeded shuffle of `align_test` so batches mix areas like training does.
AlignmentOutcome run_alignment(const scene::Dataset& align, const scene::Dataset& align_test,
                               const enc::AlignOptions& options, std::size_t eval_batch = 64);

// Pretrained weights a variant needs. Paths that the variant does not use
// may be missing; a required one that is missing raises DependencyError.
Artifacts load_artifacts(Variant v, const std::filesystem::path& encoders,
                         const std::filesystem::path& backbone);

// Artifacts for all eight variants (pretrained backbone required).
Artifacts load_artifacts_all(const std::filesystem::path& encoders,
                             const std::filesystem::path& backbone);

}  // namespace aimm::harness
