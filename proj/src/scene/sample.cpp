#include "aimm/scene/sample.hpp"

#include <cmath>

#include "aimm/numerics/rng.hpp"

namespace aimm::scene {

std::vector<double> beam_energies(const ComplexMatrix& csi) {
  const ComplexMatrix codebook = dft_codebook(csi.rows());
  const ComplexMatrix proj = codebook.adjoint() * csi;
  std::vector<double> energy(csi.rows(), 0.0);
  for (std::size_t k = 0; k < proj.rows(); ++k)
    for (std::size_t f = 0; f < proj.cols(); ++f) energy[k] += std::norm(proj(k, f));
  return energy;
}

TaskLabels make_labels(const Scene& scene, const PathSet& paths, const ComplexMatrix& csi,
                       const ChannelConfig& config) {
  if (paths.empty()) throw OutageError("no propagation path between BS and UE");
  if (csi.rows() != config.n_t || csi.cols() != config.n_c)
    throw DimensionError("make_labels: CSI shape does not match the channel config");
  TaskLabels out;
  out.position = scene.ue_pos;
  out.los = paths.has_direct();
  double power = 0.0;
  for (const auto& p : paths.paths) power += std::norm(p.alpha);
  out.path_loss_db = -10.0 * std::log10(power);
  out.precoder = svd_principal(csi).u1;
  const auto energy = beam_energies(csi);
  for (std::size_t k = 1; k < energy.size(); ++k)
    if (energy[k] > energy[out.beam_index]) out.beam_index = k;
  return out;
}

SampleRecord to_record(const Scene& scene, const ComplexMatrix& csi, const TaskLabels& labels) {
  SampleRecord r;
  r.grid = occupancy_grid(scene);
  const double L = scene.side_length;
  r.bs_xy = {static_cast<float>(scene.bs_pos.x / L), static_cast<float>(scene.bs_pos.y / L)};
  r.ue_xy = {static_cast<float>(scene.ue_pos.x / L), static_cast<float>(scene.ue_pos.y / L)};
  r.csi.reserve(2 * csi.rows() * csi.cols());
  for (const auto& z : csi.entries()) {
    r.csi.push_back(static_cast<float>(z.real()));
    r.csi.push_back(static_cast<float>(z.imag()));
  }
  r.position = {static_cast<float>(labels.position.x), static_cast<float>(labels.position.y)};
  r.los = labels.los;
  r.path_loss_db = static_cast<float>(labels.path_loss_db);
  for (const auto& z : labels.precoder) {
    r.precoder.push_back(static_cast<float>(z.real()));
    r.precoder.push_back(static_cast<float>(z.imag()));
  }
  r.beam_index = static_cast<std::uint16_t>(labels.beam_index);
  return r;
}

std::vector<float> environment_features(const SampleRecord& r) {
  std::vector<float> x(kEnvironmentWidth);
  for (std::size_t i = 0; i < kGridCells; ++i) x[i] = static_cast<float>(r.grid[i]);
  x[kGridCells + 0] = r.bs_xy[0];
  x[kGridCells + 1] = r.bs_xy[1];
  x[kGridCells + 2] = r.ue_xy[0];
  x[kGridCells + 3] = r.ue_xy[1];
  return x;
}

Sample generate_sample(const Scene& area, std::uint64_t seed, std::uint64_t area_index,
                       std::uint64_t sample_index, const ChannelConfig& config) {
  Sample s;
  s.scene = area;
  const double L = area.side_length;
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(seed, {0x75650000ULL /* "ue" */, area_index, sample_index, attempt});
    const Point p{rng.uniform(0.0, L), rng.uniform(0.0, L)};
    s.attempts = static_cast<int>(attempt) + 1;
    bool inside = false;
    for (const auto& r : area.buildings) inside = inside || r.contains(p);
    if (inside || distance(p, area.bs_pos) < 1.0) continue;
    s.scene.ue_pos = p;
    s.paths = trace_paths(s.scene, config);
    if (s.paths.empty()) continue;
    s.csi = csi_matrix(s.paths, config);
    s.labels = make_labels(s.scene, s.paths, s.csi, config);
    return s;
  }
}

}  // namespace aimm::scene
