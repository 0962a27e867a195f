#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "aimm/scene/channel.hpp"

namespace aimm::scene {

// Double-precision labels straight from the oracles.
struct TaskLabels {
  Point position;  // meters
  bool los = false;
  double path_loss_db = 0.0;
  CVector precoder;  // unit norm, n_t entries
  std::size_t beam_index = 0;
};

// One dataset row, stored at file precision (f32).
struct SampleRecord {
  std::array<std::uint8_t, kGridCells> grid{};
  std::array<float, 2> bs_xy{};
  std::array<float, 2> ue_xy{};
  std::vector<float> csi;  // n_t rows × n_c columns, (re, im) interleaved
  std::array<float, 2> position{};
  bool los = false;
  float path_loss_db = 0.0f;
  std::vector<float> precoder;  // 2·n_t, (re, im) interleaved
  std::uint16_t beam_index = 0;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

// Throws OutageError when paths is empty.
TaskLabels make_labels(const Scene& scene, const PathSet& paths, const ComplexMatrix& csi,
                       const ChannelConfig& config);

// Σ_f |c_kᴴ h(f)|² for each DFT beam c_k.
std::vector<double> beam_energies(const ComplexMatrix& csi);

SampleRecord to_record(const Scene& scene, const ComplexMatrix& csi, const TaskLabels& labels);

// Environment-modality input: 256 occupancy values then bs_xy, ue_xy.
std::vector<float> environment_features(const SampleRecord& r);

struct Sample {
  Scene scene;  // with the sampled UE position
  PathSet paths;
  ComplexMatrix csi;
  TaskLabels labels;
  int attempts = 0;  // UE draws needed to avoid outage
};

// Places the UE for (seed, area, sample_index) uniformly in free space at
// least 1 m from the BS; draws that end in outage (no path) are redrawn.
Sample generate_sample(const Scene& area, std::uint64_t seed, std::uint64_t area_index,
                       std::uint64_t sample_index, const ChannelConfig& config);

}  // namespace aimm::scene
