#include "aimm/scene/scene.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

#include "aimm/numerics/rng.hpp"

namespace aimm::scene {

bool segment_blocked(Point a, Point b, const Rect& r) {
  const Point d = b - a;
  double t_enter = 0.0, t_exit = 1.0;
  const double lo[2] = {r.x_min, r.y_min};
  const double hi[2] = {r.x_max, r.y_max};
  const double origin[2] = {a.x, a.y};
  const double dir[2] = {d.x, d.y};
  for (int axis = 0; axis < 2; ++axis) {
    if (dir[axis] == 0.0) {
      // parallel: must lie strictly between the slab planes
      if (origin[axis] <= lo[axis] || origin[axis] >= hi[axis]) return false;
      continue;
    }
    double t0 = (lo[axis] - origin[axis]) / dir[axis];
    double t1 = (hi[axis] - origin[axis]) / dir[axis];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  return t_exit - t_enter > 1e-9;
}

bool segment_blocked(Point a, Point b, const std::vector<Rect>& rects) {
  return std::any_of(rects.begin(), rects.end(),
                     [&](const Rect& r) { return segment_blocked(a, b, r); });
}

namespace {

constexpr int kMaxAttempts = 1000;
constexpr double kBuildingGap = 2.0;  // meters between footprints

bool in_free_space(Point p, const std::vector<Rect>& rects, double margin) {
  return std::none_of(rects.begin(), rects.end(), [&](const Rect& r) {
    return p.x > r.x_min - margin && p.x < r.x_max + margin && p.y > r.y_min - margin &&
           p.y < r.y_max + margin;
  });
}

// One placement attempt sequence; false when the attempt budget runs out.
bool try_generate(Rng& rng, Scene& s) {
  s.side_length = rng.uniform(100.0, 200.0);
  const auto count = static_cast<std::size_t>(rng.uniform_int(3, 8));
  const double side = s.side_length;
  int attempts = 0;
  s.buildings.clear();
  while (s.buildings.size() < count) {
    if (++attempts > kMaxAttempts) return false;
    const double w = rng.uniform(0.08, 0.22) * side;
    const double h = rng.uniform(0.08, 0.22) * side;
    const double x0 = rng.uniform(0.02 * side, 0.98 * side - w);
    const double y0 = rng.uniform(0.02 * side, 0.98 * side - h);
    const Rect r{x0, y0, x0 + w, y0 + h};
    const bool clash = std::any_of(s.buildings.begin(), s.buildings.end(),
                                   [&](const Rect& o) { return r.overlaps(o, kBuildingGap); });
    if (!clash) s.buildings.push_back(r);
  }
  for (;;) {
    if (++attempts > kMaxAttempts) return false;
    const Point p{rng.uniform(0.05 * side, 0.95 * side), rng.uniform(0.05 * side, 0.95 * side)};
    if (in_free_space(p, s.buildings, 1.0)) {
      s.bs_pos = p;
      break;
    }
  }
  s.bs_boresight = rng.uniform(0.0, std::numbers::pi);
  for (;;) {
    if (++attempts > kMaxAttempts) return false;
    const Point p{rng.uniform(0.0, side), rng.uniform(0.0, side)};
    if (in_free_space(p, s.buildings, 0.0) && distance(p, s.bs_pos) >= 1.0) {
      s.ue_pos = p;
      return true;
    }
  }
}

}  // namespace

Scene generate_scene(std::uint64_t seed, std::uint64_t area_index) {
  Scene s;
  for (std::uint64_t sub = 0;; ++sub) {
    Rng rng(seed, {0x61726561ULL /* "area" */, area_index, sub});
    if (try_generate(rng, s)) return s;
  }
}

bool scene_valid(const Scene& s) {
  const double L = s.side_length;
  for (std::size_t i = 0; i < s.buildings.size(); ++i) {
    const Rect& r = s.buildings[i];
    if (!(r.x_min > 0 && r.y_min > 0 && r.x_max < L && r.y_max < L)) return false;
    if (!(r.x_min < r.x_max && r.y_min < r.y_max)) return false;
    for (std::size_t j = i + 1; j < s.buildings.size(); ++j)
      if (r.overlaps(s.buildings[j])) return false;
    if (r.contains(s.bs_pos) || r.contains(s.ue_pos)) return false;
  }
  return true;
}

std::array<std::uint8_t, kGridCells> occupancy_grid(const Scene& s) {
  std::array<std::uint8_t, kGridCells> grid{};
  const double cell = s.side_length / static_cast<double>(kGridSide);
  for (std::size_t row = 0; row < kGridSide; ++row)
    for (std::size_t col = 0; col < kGridSide; ++col) {
      const Point c{(static_cast<double>(col) + 0.5) * cell, (static_cast<double>(row) + 0.5) * cell};
      grid[row * kGridSide + col] = std::any_of(s.buildings.begin(), s.buildings.end(),
                                                [&](const Rect& r) { return r.contains(c); });
    }
  return grid;
}

}  // namespace aimm::scene
