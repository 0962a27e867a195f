#pragma once

#include <cmath>
#include <vector>

namespace aimm::scene {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Point&, const Point&) = default;
};

inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double length(Point a) { return std::hypot(a.x, a.y); }
inline double distance(Point a, Point b) { return length(a - b); }

// Axis-aligned building footprint.
struct Rect {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  bool contains(Point p) const { return p.x > x_min && p.x < x_max && p.y > y_min && p.y < y_max; }
  bool overlaps(const Rect& o, double gap = 0.0) const {
    return x_min < o.x_max + gap && o.x_min < x_max + gap && y_min < o.y_max + gap &&
           o.y_min < y_max + gap;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

// True when the segment a→b passes through the interior of r for a positive
// length (slab method). Touching an edge or corner does not block.
bool segment_blocked(Point a, Point b, const Rect& r);

bool segment_blocked(Point a, Point b, const std::vector<Rect>& rects);

}  // namespace aimm::scene
