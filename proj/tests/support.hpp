#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#include <mvlayout/geometry.hpp>
#include <mvlayout/layout3d.hpp>
#include <mvlayout/metrics.hpp>
#include <mvlayout/synth.hpp>

namespace testing_support {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(MVLAYOUT_FIXTURES) / name;
}

inline mvl::synth::SceneSpec load_scene(const std::string& name) {
  std::ifstream f(fixture(name));
  return nlohmann::json::parse(f).get<mvl::synth::SceneSpec>();
}

// Column distance on the wrapped longitude axis plus row distance.
inline double pixel_distance(const mvl::Vec2& a, const mvl::Vec2& b, int width) {
  double du = std::abs(a.x() - b.x());
  du = std::min(du, width - du);
  return std::hypot(du, a.y() - b.y());
}

inline mvl::Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  mvl::Vec3 v;
  do v = {n(rng), n(rng), n(rng)};
  while (v.norm() < 1e-6);
  return v.normalized();
}

inline mvl::Pose random_pose(std::mt19937_64& rng, double spread = 2.0) {
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  std::uniform_real_distribution<double> pos(-spread, spread);
  mvl::Pose p;
  p.rotation = Eigen::AngleAxisd(angle(rng), random_unit(rng)).toRotationMatrix();
  p.translation = {pos(rng), pos(rng), pos(rng)};
  return p;
}

// Axis-aligned textured box room.
inline mvl::synth::RoomSpec box_room(double w, double l, double h, double x0 = 0.0, double z0 = 0.0) {
  mvl::synth::RoomSpec r;
  r.floor = {{x0, z0}, {x0 + w, z0}, {x0 + w, z0 + l}, {x0, z0 + l}};
  r.height = h;
  r.floor_texture = {mvl::synth::TextureKind::noise, 0.5, 0.45, 0.4, 11};
  r.ceiling_texture = {mvl::synth::TextureKind::noise, 0.6, 0.45, 0.4, 12};
  r.wall_textures = {{mvl::synth::TextureKind::noise, 0.5, 0.45, 0.4, 13}};
  return r;
}

// Ground-truth 3D layout of a rendered view, optionally with per-element
// depth noise.
inline mvl::Layout3D gt_layout(const mvl::synth::RenderedView& v, std::size_t id, double sigma = 0.0,
                               std::mt19937_64* rng = nullptr) {
  std::vector<double> d = v.gt_element_depths;
  if (sigma > 0.0 && rng) {
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& x : d) x = std::max(0.05, x + n(*rng));
  }
  return mvl::lift(v.layout_gt, d, v.pose, id);
}

inline mvl::LiftableView liftable(const mvl::synth::RenderedView& v, mvl::Layout3D layout) {
  return {v.layout_gt.camera, v.layout_gt.labels, std::move(layout)};
}

}  // namespace testing_support
