#pragma once

// Independent reference routines used only by tests. None of these call the
// library code paths they are compared against.

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "aimm/numerics/complex_matrix.hpp"
#include "aimm/scene/geometry.hpp"

namespace aimm::oracle {

// Principal left singular vector via plain power iteration on h·hᴴ, started
// from the all-ones vector.
inline CVector power_iteration_u1(const ComplexMatrix& h, int steps = 200) {
  const std::size_t m = h.rows(), n = h.cols();
  std::vector<cplx> g(m * m, cplx(0, 0));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t k = 0; k < n; ++k) g[i * m + j] += h(i, k) * std::conj(h(j, k));
  CVector x(m, cplx(1.0, 0.0));
  for (int s = 0; s < steps; ++s) {
    CVector y(m, cplx(0, 0));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) y[i] += g[i * m + j] * x[j];
    double nrm = 0;
    for (auto& z : y) nrm += std::norm(z);
    nrm = std::sqrt(nrm);
    for (auto& z : y) z /= nrm;
    x = y;
  }
  return x;
}

// Exhaustive beam search: for every beam and every subcarrier accumulate
// |Σ_m conj(c_k[m]) h_m(f)|² with the codebook entries written out directly.
inline std::size_t brute_force_beam(const ComplexMatrix& h) {
  const std::size_t n = h.rows();
  std::size_t best = 0;
  double best_energy = -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    double energy = 0.0;
    for (std::size_t f = 0; f < h.cols(); ++f) {
      cplx acc(0, 0);
      for (std::size_t m = 0; m < n; ++m) {
        const double angle = -2.0 * std::numbers::pi * double(m) * double(k) / double(n);
        const cplx c = std::polar(1.0 / std::sqrt(double(n)), angle);
        acc += std::conj(c) * h(m, f);
      }
      energy += std::norm(acc);
    }
    if (energy > best_energy) {
      best_energy = energy;
      best = k;
    }
  }
  return best;
}

// Segment/rectangle test by checking the segment against each of the four
// edges for a proper crossing.
inline bool segments_cross(scene::Point p1, scene::Point p2, scene::Point q1, scene::Point q2) {
  auto orient = [](scene::Point a, scene::Point b, scene::Point c) {
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
  };
  const double d1 = orient(q1, q2, p1), d2 = orient(q1, q2, p2);
  const double d3 = orient(p1, p2, q1), d4 = orient(p1, p2, q2);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

inline bool edge_blocked(scene::Point a, scene::Point b, const std::vector<scene::Rect>& rects) {
  for (const auto& r : rects) {
    const scene::Point c00{r.x_min, r.y_min}, c10{r.x_max, r.y_min}, c11{r.x_max, r.y_max},
        c01{r.x_min, r.y_max};
    if (segments_cross(a, b, c00, c10) || segments_cross(a, b, c10, c11) ||
        segments_cross(a, b, c11, c01) || segments_cross(a, b, c01, c00))
      return true;
  }
  return false;
}

// Free-space path loss 20·log10(4π·f·d/c).
inline double fspl_db(double f, double d, double c) {
  return 20.0 * std::log10(4.0 * std::numbers::pi * f * d / c);
}

}  // namespace aimm::oracle
