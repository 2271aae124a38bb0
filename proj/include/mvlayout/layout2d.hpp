#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "errors.hpp"
#include "geometry.hpp"
#include "raster.hpp"

namespace mvl {

enum class ElementKind { floor, ceiling, wall };

inline std::string_view to_string(ElementKind k) {
  switch (k) {
    case ElementKind::floor: return "floor";
    case ElementKind::ceiling: return "ceiling";
    case ElementKind::wall: return "wall";
  }
  return "wall";
}

inline ElementKind parse_kind(std::string_view s) {
  if (s == "floor") return ElementKind::floor;
  if (s == "ceiling") return ElementKind::ceiling;
  if (s == "wall") return ElementKind::wall;
  throw DomainError("unknown layout element kind '" + std::string(s) + "'");
}

struct Corner {
  Vec2 pixel = Vec2::Zero();
  double relative_depth = 1.0;
};

struct Edge {
  std::size_t a = 0;
  std::size_t b = 0;
};

// Declared element: its kind plus the loop of corner indices bounding it.
struct ElementSpec {
  ElementKind kind = ElementKind::wall;
  std::vector<std::size_t> corners;
};

// What a 2D layout estimator hands over: corners with relative depths, the
// edges joining them, and the corner loop of every element.
struct LayoutSpec {
  std::vector<Corner> corners;
  std::vector<Edge> edges;
  std::vector<ElementSpec> elements;
};

struct LayoutElement {
  ElementKind kind = ElementKind::wall;
  Vec3 orientation = kUp;  // unit, camera frame, faces the camera
  std::vector<std::size_t> corner_loop;
  long pixel_count = 0;
};

// Piecewise-planar model covering the whole panorama. labels(u, v) is the
// index of the element owning that pixel; every pixel has exactly one owner.
struct Layout2D {
  SphericalCamera camera;
  std::vector<Corner> corners;
  std::vector<Edge> edges;
  std::vector<LayoutElement> elements;
  Raster<std::int32_t> labels;

  Raster<std::uint8_t> region_mask(std::size_t element) const {
    Raster<std::uint8_t> m(labels.width(), labels.height(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i)
      m[i] = labels[i] == static_cast<std::int32_t>(element) ? 1 : 0;
    return m;
  }
};

using Mask = Raster<std::uint8_t>;

namespace detail {

struct PixelIndex {
  int u;
  int v;
};

inline PixelIndex pixel_of(const SphericalCamera& cam, const Vec2& p) {
  return {wrap_column(static_cast<int>(std::floor(p.x())), cam.width),
          clamp_row(static_cast<int>(std::floor(p.y())), cam.height)};
}

inline bool eight_adjacent(const PixelIndex& a, const PixelIndex& b, int width) {
  int du = std::abs(a.u - b.u);
  du = std::min(du, width - du);
  return du <= 1 && std::abs(a.v - b.v) <= 1;
}

// Marks the pixels crossed by the shorter great-circle arc between two
// viewing directions; the marked set is 8-connected, so it blocks a
// 4-connected flood fill.
inline void rasterize_arc(Mask& boundary, const SphericalCamera& cam, const Vec3& from,
                          const Vec3& to) {
  const Vec3 a = from.normalized();
  const Vec3 b = to.normalized();
  const double theta = std::atan2(a.cross(b).norm(), a.dot(b));
  auto at = [&](double t) -> Vec3 {
    if (theta < 1e-12) return a;
    return (std::sin((1.0 - t) * theta) * a + std::sin(t * theta) * b) / std::sin(theta);
  };
  if (theta > std::numbers::pi - 1e-9) throw DomainError("layout edge joins antipodal corners");

  PixelIndex cur = pixel_of(cam, pixel_unchecked(cam, a));
  boundary(cur.u, cur.v) = 1;
  if (theta < 1e-12) return;
  const double max_dt = 0.25 * cam.pixel_angle() / theta;
  double t = 0.0;
  double dt = max_dt;
  while (t < 1.0) {
    const double tn = std::min(1.0, t + dt);
    const PixelIndex next = pixel_of(cam, pixel_unchecked(cam, at(tn)));
    if (!eight_adjacent(cur, next, cam.width) && dt > 1e-10) {
      dt *= 0.5;
      continue;
    }
    boundary(next.u, next.v) = 1;
    cur = next;
    t = tn;
    dt = std::min(max_dt, dt * 2.0);
  }
}

inline Mask rasterize_edges(const std::vector<Corner>& corners, const std::vector<Edge>& edges,
                            const SphericalCamera& cam) {
  Mask boundary(cam.width, cam.height, 0);
  for (const auto& e : edges) {
    if (e.a >= corners.size() || e.b >= corners.size() || e.a == e.b)
      throw DomainError("layout edge references an invalid corner pair");
    rasterize_arc(boundary, cam, pixel_to_ray(cam, corners[e.a].pixel),
                  pixel_to_ray(cam, corners[e.b].pixel));
  }
  return boundary;
}

// 4-connected components of the non-boundary pixels, longitude wrapping.
// Boundary pixels get -1. Components are numbered in raster order.
inline int label_components(const Mask& boundary, Raster<std::int32_t>& labels) {
  const int w = boundary.width();
  const int h = boundary.height();
  labels = Raster<std::int32_t>(w, h, -1);
  std::vector<PixelIndex> queue;
  int count = 0;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (boundary(u, v) || labels(u, v) >= 0) continue;
      queue.clear();
      queue.push_back({u, v});
      labels(u, v) = count;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const auto [pu, pv] = queue[head];
        const PixelIndex nbrs[4] = {{wrap_column(pu - 1, w), pv},
                                    {wrap_column(pu + 1, w), pv},
                                    {pu, pv - 1},
                                    {pu, pv + 1}};
        for (const auto& n : nbrs) {
          if (n.v < 0 || n.v >= h) continue;
          if (boundary(n.u, n.v) || labels(n.u, n.v) >= 0) continue;
          labels(n.u, n.v) = count;
          queue.push_back(n);
        }
      }
      ++count;
    }
  }
  return count;
}

// Gives every unlabeled (-1) pixel the label of its upper neighbor, else its
// left, right, or lower neighbor, sweeping until all pixels are owned. Each
// sweep only reads labels fixed by earlier sweeps.
inline void assign_unlabeled(Raster<std::int32_t>& labels) {
  const int w = labels.width();
  const int h = labels.height();
  bool pending = true;
  while (pending) {
    pending = false;
    const Raster<std::int32_t> prev = labels;
    bool progressed = false;
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        if (prev(u, v) >= 0) continue;
        std::int32_t pick = -1;
        if (v > 0 && prev(u, v - 1) >= 0) pick = prev(u, v - 1);
        else if (prev(wrap_column(u - 1, w), v) >= 0) pick = prev(wrap_column(u - 1, w), v);
        else if (prev(wrap_column(u + 1, w), v) >= 0) pick = prev(wrap_column(u + 1, w), v);
        else if (v + 1 < h && prev(u, v + 1) >= 0) pick = prev(u, v + 1);
        if (pick >= 0) {
          labels(u, v) = pick;
          progressed = true;
        } else {
          pending = true;
        }
      }
    }
    if (pending && !progressed) throw LayoutTopologyError("layout boundaries cover the whole panorama");
  }
}

inline std::vector<Mask> masks_from_labels(const Raster<std::int32_t>& labels, int count) {
  std::vector<Mask> masks(count, Mask(labels.width(), labels.height(), 0));
  for (int v = 0; v < labels.height(); ++v)
    for (int u = 0; u < labels.width(); ++u) masks[labels(u, v)](u, v) = 1;
  return masks;
}

// Nearest non-boundary pixel to `start` by breadth-first search.
inline PixelIndex nearest_free(const Mask& boundary, PixelIndex start) {
  if (!boundary(start.u, start.v)) return start;
  const int w = boundary.width();
  const int h = boundary.height();
  Mask seen(w, h, 0);
  std::vector<PixelIndex> queue{start};
  seen(start.u, start.v) = 1;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const auto [pu, pv] = queue[head];
    if (!boundary(pu, pv)) return {pu, pv};
    const PixelIndex nbrs[4] = {{pu, pv - 1}, {wrap_column(pu - 1, w), pv},
                                {wrap_column(pu + 1, w), pv}, {pu, pv + 1}};
    for (const auto& n : nbrs) {
      if (n.v < 0 || n.v >= h || seen(n.u, n.v)) continue;
      seen(n.u, n.v) = 1;
      queue.push_back(n);
    }
  }
  throw LayoutTopologyError("layout boundaries cover the whole panorama");
}

}  // namespace detail

// Splits the panorama into the regions enclosed by the layout edges. Edges
// are rasterized as great-circle arcs (projections of straight 3D segments);
// pixels on an edge join a neighboring region by the upper/left rule.
inline std::vector<Mask> extract_regions(const std::vector<Corner>& corners,
                                         const std::vector<Edge>& edges,
                                         const SphericalCamera& cam) {
  const Mask boundary = detail::rasterize_edges(corners, edges, cam);
  Raster<std::int32_t> labels;
  const int count = detail::label_components(boundary, labels);
  if (count == 0) throw LayoutTopologyError("layout boundaries cover the whole panorama");
  detail::assign_unlabeled(labels);
  return detail::masks_from_labels(labels, count);
}

namespace detail {

// Normal of a fitted layout plane snapped to the vertical or horizontal
// direction. Within `snap_deg` of vertical -> exactly vertical; otherwise the
// vertical component is dropped.
inline Vec3 snap_orientation(const Vec3& n, double snap_deg = 15.0) {
  const double cos_to_up = std::abs(n.normalized().dot(kUp));
  if (cos_to_up >= std::cos(snap_deg * std::numbers::pi / 180.0))
    return n.y() >= 0.0 ? kUp : Vec3(-kUp);
  Vec3 h(n.x(), 0.0, n.z());
  const double len = h.norm();
  if (len < 1e-15) throw DomainError("cannot snap a vertical normal to horizontal");
  return h / len;
}

}  // namespace detail

// Orientation of the plane through the corners lifted by their relative
// depths: least-squares normal, snapped to vertical/horizontal, signed to face
// the camera.
inline Vec3 element_orientation(const std::vector<Corner>& polygon, const SphericalCamera& cam) {
  if (polygon.size() < 3) throw DomainError("element orientation needs at least 3 corners");
  double max_depth = 0.0;
  for (const auto& c : polygon) {
    if (!(c.relative_depth > 0.0)) throw DomainError("corner relative depth must be positive");
    max_depth = std::max(max_depth, c.relative_depth);
  }
  std::vector<Vec3> pts;
  pts.reserve(polygon.size());
  Vec3 mean = Vec3::Zero();
  for (const auto& c : polygon) {
    pts.push_back(pixel_to_ray(cam, c.pixel) * (c.relative_depth / max_depth));
    mean += pts.back();
  }
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const auto& ev = eig.eigenvalues();  // ascending
  if (!(ev(1) > 1e-12 * std::max(ev(2), 1e-300)) || ev(2) <= 0.0)
    throw DomainError("corner polygon is degenerate (collinear or coincident)");
  Vec3 n = detail::snap_orientation(eig.eigenvectors().col(0));
  if (n.dot(mean) > 0.0) n = -n;
  return n;
}

// Per-pixel binary cross-entropy on the corner maps plus L1 on the edge maps.
inline double layout_loss_2d(const Raster<double>& pred_corner, const Raster<double>& pred_edge,
                             const Raster<double>& gt_corner, const Raster<double>& gt_edge) {
  if (!pred_corner.same_shape(gt_corner) || !pred_edge.same_shape(gt_edge) ||
      !pred_corner.same_shape(pred_edge))
    throw DomainError("layout loss maps must share dimensions");
  double ce = 0.0;
  for (std::size_t i = 0; i < pred_corner.size(); ++i) {
    const double p = pred_corner[i];
    if (!(p > 0.0 && p < 1.0)) throw DomainError("corner probabilities must lie in (0, 1)");
    const double g = gt_corner[i];
    ce -= g * std::log(p) + (1.0 - g) * std::log1p(-p);
  }
  double l1 = 0.0;
  for (std::size_t i = 0; i < pred_edge.size(); ++i) l1 += std::abs(pred_edge[i] - gt_edge[i]);
  return ce + l1;
}

// Builds the full per-view layout: rasterizes the edges, floods the regions,
// matches each declared element to the region containing its lifted-corner
// centroid, and fits each element orientation.
inline Layout2D build_layout(const LayoutSpec& spec, const SphericalCamera& cam) {
  if (spec.elements.empty()) throw DomainError("layout has no elements");
  for (const auto& c : spec.corners) {
    if (!(c.pixel.x() >= 0.0 && c.pixel.x() < cam.width && c.pixel.y() >= 0.0 &&
          c.pixel.y() < cam.height))
      throw DomainError("layout corner outside the panorama");
    if (!(c.relative_depth > 0.0)) throw DomainError("corner relative depth must be positive");
  }
  for (const auto& e : spec.edges) {
    bool referenced = false;
    for (const auto& el : spec.elements) {
      const auto& loop = el.corners;
      for (std::size_t k = 0; k < loop.size() && !referenced; ++k) {
        const auto p = loop[k];
        const auto q = loop[(k + 1) % loop.size()];
        referenced = (p == e.a && q == e.b) || (p == e.b && q == e.a);
      }
      if (referenced) break;
    }
    if (!referenced) throw LayoutTopologyError("layout edge is not on any element boundary");
  }

  Layout2D out;
  out.camera = cam;
  out.corners = spec.corners;
  out.edges = spec.edges;

  const Mask boundary = detail::rasterize_edges(spec.corners, spec.edges, cam);
  Raster<std::int32_t> components;
  const int count = detail::label_components(boundary, components);
  if (count == 0) throw LayoutTopologyError("layout boundaries cover the whole panorama");

  std::vector<std::int32_t> owner(count, -1);
  for (std::size_t j = 0; j < spec.elements.size(); ++j) {
    const auto& el = spec.elements[j];
    std::vector<Corner> polygon;
    for (auto idx : el.corners) {
      if (idx >= spec.corners.size()) throw DomainError("element references a missing corner");
      polygon.push_back(spec.corners[idx]);
    }
    LayoutElement element;
    element.kind = el.kind;
    element.corner_loop = el.corners;
    element.orientation = element_orientation(polygon, cam);
    const bool vertical = std::abs(element.orientation.dot(kUp)) > 1.0 - 1e-6;
    if (vertical != (el.kind != ElementKind::wall))
      throw DomainError("element " + std::to_string(j) + " orientation contradicts its kind '" +
                        std::string(to_string(el.kind)) + "'");
    out.elements.push_back(element);

    Vec3 centroid = Vec3::Zero();
    for (const auto& c : polygon) centroid += pixel_to_ray(cam, c.pixel) * c.relative_depth;
    const auto seed = detail::nearest_free(
        boundary, detail::pixel_of(cam, detail::pixel_unchecked(cam, centroid)));
    const int comp = components(seed.u, seed.v);
    if (owner[comp] >= 0)
      throw LayoutTopologyError("open layout boundary: elements " + std::to_string(owner[comp]) +
                                " and " + std::to_string(j) + " flood into the same region");
    owner[comp] = static_cast<std::int32_t>(j);
  }

  out.labels = Raster<std::int32_t>(cam.width, cam.height, -1);
  std::vector<long> comp_size(count, 0);
  for (std::size_t i = 0; i < components.size(); ++i) {
    if (components[i] >= 0) {
      ++comp_size[components[i]];
      out.labels[i] = owner[components[i]];
    }
  }
  if (spec.elements.size() >= 2) {
    for (int c = 0; c < count; ++c)
      if (comp_size[c] > 0.9 * cam.pixel_count())
        throw LayoutTopologyError("open layout boundary: one region floods over 90% of the panorama");
  }
  detail::assign_unlabeled(out.labels);
  for (std::size_t i = 0; i < out.labels.size(); ++i) ++out.elements[out.labels[i]].pixel_count;
  return out;
}

inline void to_json(nlohmann::json& j, const LayoutSpec& s) {
  j = nlohmann::json::object();
  auto& corners = j["corners"] = nlohmann::json::array();
  for (const auto& c : s.corners)
    corners.push_back({{"u", c.pixel.x()}, {"v", c.pixel.y()}, {"relative_depth", c.relative_depth}});
  auto& edges = j["edges"] = nlohmann::json::array();
  for (const auto& e : s.edges) edges.push_back({e.a, e.b});
  auto& elements = j["elements"] = nlohmann::json::array();
  for (const auto& e : s.elements)
    elements.push_back({{"kind", std::string(to_string(e.kind))}, {"corners", e.corners}});
}

inline void from_json(const nlohmann::json& j, LayoutSpec& s) {
  s = {};
  for (const auto& c : j.at("corners"))
    s.corners.push_back({{c.at("u").get<double>(), c.at("v").get<double>()},
                         c.at("relative_depth").get<double>()});
  for (const auto& e : j.at("edges")) {
    if (e.size() != 2) throw DomainError("layout edge must list two corner indices");
    s.edges.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>()});
  }
  for (const auto& e : j.at("elements"))
    s.elements.push_back({parse_kind(e.at("kind").get<std::string>()),
                          e.at("corners").get<std::vector<std::size_t>>()});
}

}  // namespace mvl
