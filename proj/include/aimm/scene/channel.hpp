#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <vector>

#include "aimm/numerics/complex_matrix.hpp"
#include "aimm/scene/scene.hpp"

namespace aimm::scene {

inline constexpr double kSpeedOfLight = 299792458.0;

struct ChannelConfig {
  std::size_t n_t = 16;
  std::size_t n_c = 16;
  double f_center = 28e9;
  double bandwidth = 50e6;
  double antenna_spacing = kSpeedOfLight / 28e9 / 2.0;  // half wavelength at f_center
  double c = kSpeedOfLight;
  std::size_t max_paths = 5;
  double reflection_coeff = 0.3;

  // Throws ConfigError on violated invariants.
  void validate() const;
  // f_k = f_center + (k − (n_c−1)/2) · bandwidth/(n_c−1)
  double subcarrier(std::size_t k) const;

  friend bool operator==(const ChannelConfig&, const ChannelConfig&) = default;
};

void to_json(nlohmann::json& j, const ChannelConfig& c);
void from_json(const nlohmann::json& j, ChannelConfig& c);

struct Path {
  cplx alpha;
  double tau = 0.0;    // seconds
  double theta = 0.0;  // departure angle from the ULA axis, radians in [0, π]
  int bounces = 0;
  friend bool operator==(const Path&, const Path&) = default;
};

// Sorted by descending |alpha|, at most max_paths entries.
struct PathSet {
  std::vector<Path> paths;
  bool empty() const noexcept { return paths.empty(); }
  bool has_direct() const noexcept;
};

// Direct path plus first-order specular reflections (image method) off the
// exterior faces of every building. Throws PreconditionError when the UE is
// inside a building.
PathSet trace_paths(const Scene& scene, const ChannelConfig& config);

// a(θ) with entry m = exp(−j·β·m·cos θ), β = 2π·d·f/c.
CVector steering_vector(double theta, double f, const ChannelConfig& config);

// h(f) = Σ_i α_i · exp(−j·2π·f·τ_i) · a(θ_i, f)
CVector channel_response(const PathSet& paths, double f, const ChannelConfig& config);

// n_t × n_c matrix whose column k is h(f_k).
ComplexMatrix csi_matrix(const PathSet& paths, const ChannelConfig& config);

}  // namespace aimm::scene
