#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "aimm/scene/geometry.hpp"

namespace aimm::scene {

inline constexpr std::size_t kGridSide = 16;
inline constexpr std::size_t kGridCells = kGridSide * kGridSide;
// Occupancy grid plus normalized BS and UE coordinates.
inline constexpr std::size_t kEnvironmentWidth = kGridCells + 4;

struct Scene {
  double side_length = 0.0;
  std::vector<Rect> buildings;
  Point bs_pos;
  double bs_boresight = 0.0;  // orientation of the ULA axis, radians
  Point ue_pos;

  friend bool operator==(const Scene&, const Scene&) = default;
};

// Deterministic for fixed (seed, area_index). Side length is uniform in
// [100, 200] m with 3–8 disjoint buildings placed by rejection sampling; if
// 1000 attempts do not suffice the area is redrawn from the next sub-seed.
Scene generate_scene(std::uint64_t seed, std::uint64_t area_index);

// Checks the Scene invariants (bounds, disjointness, BS/UE in free space).
bool scene_valid(const Scene& s);

// Row-major 16×16 grid; a cell is 1 when its center lies inside a building.
// Row index follows y, column index follows x.
std::array<std::uint8_t, kGridCells> occupancy_grid(const Scene& s);

}  // namespace aimm::scene
