#include "aimm/scene/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace aimm::scene {

void ChannelConfig::validate() const {
  if (n_t < 2) throw ConfigError("n_t must be at least 2");
  if (n_c < 2) throw ConfigError("n_c must be at least 2");
  if (!(f_center > 0)) throw ConfigError("f_center must be positive");
  if (!(bandwidth > 0 && bandwidth < f_center))
    throw ConfigError("bandwidth must be positive and below f_center");
  if (!(antenna_spacing > 0)) throw ConfigError("antenna spacing must be positive");
  if (!(c > 0)) throw ConfigError("speed of light must be positive");
  if (max_paths < 1) throw ConfigError("max_paths must be at least 1");
  if (!(reflection_coeff > 0 && reflection_coeff <= 1))
    throw ConfigError("reflection coefficient must lie in (0, 1]");
  if (n_t > 65535) throw ConfigError("n_t exceeds the u16 dataset field");
}

double ChannelConfig::subcarrier(std::size_t k) const {
  const double offset = static_cast<double>(k) - static_cast<double>(n_c - 1) / 2.0;
  return f_center + offset * bandwidth / static_cast<double>(n_c - 1);
}

void to_json(nlohmann::json& j, const ChannelConfig& c) {
  j = nlohmann::json{{"n_t", c.n_t},
                     {"n_c", c.n_c},
                     {"f_center", c.f_center},
                     {"bandwidth", c.bandwidth},
                     {"antenna_spacing", c.antenna_spacing},
                     {"c", c.c},
                     {"max_paths", c.max_paths},
                     {"reflection_coeff", c.reflection_coeff}};
}

void from_json(const nlohmann::json& j, ChannelConfig& c) {
  j.at("n_t").get_to(c.n_t);
  j.at("n_c").get_to(c.n_c);
  j.at("f_center").get_to(c.f_center);
  j.at("bandwidth").get_to(c.bandwidth);
  j.at("antenna_spacing").get_to(c.antenna_spacing);
  j.at("c").get_to(c.c);
  j.at("max_paths").get_to(c.max_paths);
  j.at("reflection_coeff").get_to(c.reflection_coeff);
}

bool PathSet::has_direct() const noexcept {
  return std::any_of(paths.begin(), paths.end(), [](const Path& p) { return p.bounces == 0; });
}

namespace {

// exp(−j·2π·cycles), reducing to the fractional part first so large
// frequency·delay products keep full phase precision.
cplx phasor(double cycles) {
  const double frac = cycles - std::floor(cycles);
  return std::polar(1.0, -2.0 * std::numbers::pi * frac);
}

double departure_angle(Point bs, Point toward, double boresight) {
  const Point d = toward - bs;
  const double n = length(d);
  const double c = (d.x * std::cos(boresight) + d.y * std::sin(boresight)) / n;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Path make_path(double dist, int bounces, double theta, const ChannelConfig& config) {
  Path p;
  p.tau = dist / config.c;
  p.theta = theta;
  p.bounces = bounces;
  const double amplitude = config.c / (4.0 * std::numbers::pi * config.f_center * dist) *
                           std::pow(config.reflection_coeff, bounces);
  p.alpha = amplitude * phasor(config.f_center * p.tau);
  return p;
}

struct Face {
  Point a, b;     // endpoints
  int axis;       // 0: vertical face (x const), 1: horizontal face (y const)
  double coord;   // the constant coordinate
  double normal;  // outward direction along the axis, ±1
};

std::array<Face, 4> faces(const Rect& r) {
  return {Face{{r.x_min, r.y_min}, {r.x_min, r.y_max}, 0, r.x_min, -1.0},
          Face{{r.x_max, r.y_min}, {r.x_max, r.y_max}, 0, r.x_max, +1.0},
          Face{{r.x_min, r.y_min}, {r.x_max, r.y_min}, 1, r.y_min, -1.0},
          Face{{r.x_min, r.y_max}, {r.x_max, r.y_max}, 1, r.y_max, +1.0}};
}

}  // namespace

PathSet trace_paths(const Scene& scene, const ChannelConfig& config) {
  for (const auto& r : scene.buildings)
    if (r.contains(scene.ue_pos)) throw PreconditionError("UE lies inside a building");
  const Point bs = scene.bs_pos, ue = scene.ue_pos;
  PathSet out;
  if (!segment_blocked(bs, ue, scene.buildings)) {
    out.paths.push_back(make_path(distance(bs, ue), 0,
                                  departure_angle(bs, ue, scene.bs_boresight), config));
  }
  for (const auto& r : scene.buildings) {
    for (const Face& f : faces(r)) {
      const double bs_c = f.axis == 0 ? bs.x : bs.y;
      const double ue_c = f.axis == 0 ? ue.x : ue.y;
      // both terminals strictly in front of the exterior face
      if ((bs_c - f.coord) * f.normal <= 0.0 || (ue_c - f.coord) * f.normal <= 0.0) continue;
      Point image = bs;
      (f.axis == 0 ? image.x : image.y) = 2.0 * f.coord - bs_c;
      const double image_c = 2.0 * f.coord - bs_c;
      const double t = (f.coord - image_c) / (ue_c - image_c);
      Point hit = image + t * (ue - image);
      (f.axis == 0 ? hit.x : hit.y) = f.coord;
      const double along = f.axis == 0 ? hit.y : hit.x;
      const double lo = f.axis == 0 ? f.a.y : f.a.x;
      const double hi = f.axis == 0 ? f.b.y : f.b.x;
      if (!(along > lo && along < hi)) continue;
      if (segment_blocked(bs, hit, scene.buildings) || segment_blocked(hit, ue, scene.buildings))
        continue;
      out.paths.push_back(make_path(distance(image, ue), 1,
                                    departure_angle(bs, hit, scene.bs_boresight), config));
    }
  }
  std::stable_sort(out.paths.begin(), out.paths.end(), [](const Path& a, const Path& b) {
    return std::abs(a.alpha) > std::abs(b.alpha);
  });
  if (out.paths.size() > config.max_paths) out.paths.resize(config.max_paths);
  return out;
}

CVector steering_vector(double theta, double f, const ChannelConfig& config) {
  const double beta = 2.0 * std::numbers::pi * config.antenna_spacing * f / config.c;
  const double ct = std::cos(theta);
  CVector a(config.n_t);
  for (std::size_t m = 0; m < config.n_t; ++m)
    a[m] = std::polar(1.0, -beta * static_cast<double>(m) * ct);
  return a;
}

CVector channel_response(const PathSet& paths, double f, const ChannelConfig& config) {
  CVector h(config.n_t, cplx(0.0, 0.0));
  for (const auto& p : paths.paths) {
    const cplx gain = p.alpha * phasor(f * p.tau);
    const CVector a = steering_vector(p.theta, f, config);
    for (std::size_t m = 0; m < config.n_t; ++m) h[m] += gain * a[m];
  }
  return h;
}

ComplexMatrix csi_matrix(const PathSet& paths, const ChannelConfig& config) {
  ComplexMatrix h(config.n_t, config.n_c);
  for (std::size_t k = 0; k < config.n_c; ++k)
    h.set_column(k, channel_response(paths, config.subcarrier(k), config));
  return h;
}

}  // namespace aimm::scene
