#pragma once

#include <span>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "layout2d.hpp"

namespace mvl {

struct Element3D {
  std::size_t id = 0;
  ElementKind kind = ElementKind::wall;
  Vec3 orientation = kUp;  // camera frame
  double depth = 1.0;      // camera-to-plane distance, meters
  WorldPlane plane;
  std::vector<Vec3> polygon;  // world-frame boundary, on `plane`
  double peak_probability = 1.0;
  long pixel_count = 0;
};

// One view's metric layout in world coordinates.
struct Layout3D {
  std::size_t view_id = 0;
  Pose pose;
  std::vector<Element3D> elements;
};

// Places every element plane at its depth along its orientation and moves it
// to the world frame. Boundary polygons come from intersecting the element's
// corner rays with its plane; corners whose ray misses the plane are dropped.
inline Layout3D lift(const Layout2D& layout, std::span<const double> depths, const Pose& pose,
                     std::size_t view_id = 0, std::span<const double> peak_probabilities = {}) {
  validate(pose);
  if (depths.size() != layout.elements.size())
    throw DomainError("lift needs one depth per layout element");
  if (!peak_probabilities.empty() && peak_probabilities.size() != depths.size())
    throw DomainError("lift needs one peak probability per layout element");
  Layout3D out;
  out.view_id = view_id;
  out.pose = pose;
  for (std::size_t j = 0; j < layout.elements.size(); ++j) {
    const auto& el = layout.elements[j];
    const Plane plane(el.orientation, depths[j]);
    Element3D e;
    e.id = j;
    e.kind = el.kind;
    e.orientation = el.orientation;
    e.depth = depths[j];
    e.plane = to_world(plane, pose);
    e.pixel_count = el.pixel_count;
    e.peak_probability = peak_probabilities.empty() ? 1.0 : peak_probabilities[j];
    for (auto c : el.corner_loop) {
      const Vec3 ray = pixel_to_ray(layout.camera, layout.corners[c].pixel);
      if (const auto t = intersect(plane, ray)) e.polygon.push_back(pose.to_world(*t * ray));
    }
    out.elements.push_back(std::move(e));
  }
  return out;
}

// Camera height above the floor: the distance from the camera center to the
// single floor element's plane.
inline double camera_height(const Layout3D& layout) {
  const Element3D* floor = nullptr;
  for (const auto& e : layout.elements) {
    if (e.kind != ElementKind::floor) continue;
    if (floor) throw DomainError("layout has more than one floor element");
    floor = &e;
  }
  if (!floor) throw DomainError("layout has no floor element");
  return floor->plane.signed_distance(layout.pose.center());
}

}  // namespace mvl
