#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "confidence.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "layout2d.hpp"
#include "parallel.hpp"
#include "raster.hpp"

namespace mvl::synth {

enum class TextureKind { constant, checker, noise };

// Procedural albedo on a surface parameterised in meters.
struct Texture {
  TextureKind kind = TextureKind::noise;
  double base = 0.5;
  double contrast = 0.4;
  double scale = 0.3;  // checker cell size / coarsest noise wavelength, meters
  std::uint64_t seed = 0;
  std::array<double, 3> tint{1.0, 1.0, 1.0};

  double value(double s, double t) const;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline double lattice(std::int64_t ix, std::int64_t iy, std::uint64_t seed) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(ix) * 0x632BE59BD9B4E019ull ^
                                                       static_cast<std::uint64_t>(iy) * 0x85157AF5ull));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Smoothly interpolated lattice noise in [0, 1).
inline double value_noise(double x, double y, std::uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy);
  auto smooth = [](double a) { return a * a * (3.0 - 2.0 * a); };
  const double ax = smooth(x - fx), ay = smooth(y - fy);
  const double a = lattice(ix, iy, seed), b = lattice(ix + 1, iy, seed);
  const double c = lattice(ix, iy + 1, seed), d = lattice(ix + 1, iy + 1, seed);
  return (1 - ay) * ((1 - ax) * a + ax * b) + ay * ((1 - ax) * c + ax * d);
}

// Uniform double in [0, 1) from the raw engine output, so sampled scenes do
// not depend on the standard library's distribution implementations.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

inline double Texture::value(double s, double t) const {
  double x = base;
  switch (kind) {
    case TextureKind::constant:
      break;
    case TextureKind::checker: {
      const auto cs = static_cast<std::int64_t>(std::floor(s / scale));
      const auto ct = static_cast<std::int64_t>(std::floor(t / scale));
      x += ((cs + ct) & 1) ? contrast / 2 : -contrast / 2;
      break;
    }
    case TextureKind::noise: {
      double n = 0.0, wsum = 0.0, w = 0.5, freq = 1.0 / scale;
      for (int octave = 0; octave < 4; ++octave) {
        n += w * detail::value_noise(s * freq, t * freq, seed + 1013 * octave);
        wsum += w;
        w *= 0.6;
        freq *= 2.1;
      }
      x += contrast * (n / wsum - 0.5) * 2.0;
      break;
    }
  }
  return std::clamp(x, 0.0, 1.0);
}

struct Occluder {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();
  Texture texture;
};

// Convex room: floor polygon in the x-z plane (meters, either winding),
// extruded from y = 0 to y = height.
struct RoomSpec {
  std::vector<Vec2> floor;
  double height = 2.6;
  Texture floor_texture;
  Texture ceiling_texture;
  std::vector<Texture> wall_textures;  // one for all walls, or one per wall
  std::vector<Occluder> occluders;
};

struct ViewSpec {
  std::size_t room = 0;
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;  // radians about +y
};

struct SceneSpec {
  SphericalCamera camera{512, 256};
  int supersample = 2;
  std::vector<RoomSpec> rooms;
  std::vector<ViewSpec> views;  // explicit poses; sampled when empty
  int n_views = 0;
  std::uint64_t seed = 0;
};

struct RenderedView {
  RgbImage image;
  Raster<double> depth_gt;  // layout depth of the owning element, meters
  SemanticMap semantic_gt;
  LayoutSpec layout_spec;
  Layout2D layout_gt;
  std::vector<double> gt_element_depths;
  std::vector<WorldPlane> gt_planes;
  Pose pose;
  std::size_t room = 0;
  double camera_height = 0.0;
};

// Ray-castable form of a RoomSpec. Surfaces are numbered floor = 0,
// ceiling = 1, wall k = 2 + k; layout elements follow the same order.
class RoomGeometry {
 public:
  explicit RoomGeometry(const RoomSpec& spec) : spec_(spec) {
    const auto& p = spec.floor;
    const std::size_t n = p.size();
    if (n < 3) throw DomainError("room floor polygon needs at least 3 vertices");
    if (!(spec.height > 0.0)) throw DomainError("room height must be positive");
    double area = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const Vec2& a = p[k];
      const Vec2& b = p[(k + 1) % n];
      area += a.x() * b.y() - b.x() * a.y();
    }
    const double sign = area > 0.0 ? 1.0 : -1.0;
    if (std::abs(area) < 1e-9) throw DomainError("room floor polygon has no area");
    for (std::size_t k = 0; k < n; ++k) {
      const Vec2 e0 = p[(k + 1) % n] - p[k];
      const Vec2 e1 = p[(k + 2) % n] - p[(k + 1) % n];
      if (sign * (e0.x() * e1.y() - e0.y() * e1.x()) <= 1e-12)
        throw DomainError("room floor polygon must be strictly convex");
      // Interior lies to the left of each edge for positive signed area in
      // (x, z) coordinates.
      Vec2 nrm = sign * Vec2(-e0.y(), e0.x());
      nrm.normalize();
      walls_.push_back({p[k], e0.normalized(), e0.norm(), nrm, -nrm.dot(p[k])});
    }
    if (!spec.wall_textures.empty() && spec.wall_textures.size() != 1 && spec.wall_textures.size() != n)
      throw DomainError("wall textures must be given once or per wall");
    for (const auto& o : spec.occluders) {
      if (!(o.min.array() < o.max.array()).all()) throw DomainError("occluder box is empty");
      for (int c = 0; c < 8; ++c) {
        const Vec3 q((c & 1) ? o.max.x() : o.min.x(), (c & 2) ? o.max.y() : o.min.y(),
                     (c & 4) ? o.max.z() : o.min.z());
        if (!contains(q, -1e-9)) throw DomainError("occluder box must lie inside its room");
      }
    }
  }

  struct Wall {
    Vec2 start;
    Vec2 dir;
    double length;
    Vec2 inward;   // unit inward normal in (x, z)
    double offset;  // inward·p + offset >= 0 inside
  };

  const RoomSpec& spec() const { return spec_; }
  std::size_t wall_count() const { return walls_.size(); }
  std::size_t surface_count() const { return walls_.size() + 2; }
  const Wall& wall(std::size_t k) const { return walls_[k]; }

  // Inward-facing world plane of a surface.
  WorldPlane plane(std::size_t surface) const {
    if (surface == 0) return {kUp, 0.0};
    if (surface == 1) return {-kUp, spec_.height};
    const auto& w = walls_[surface - 2];
    return {Vec3(w.inward.x(), 0.0, w.inward.y()), w.offset};
  }

  bool contains(const Vec3& x, double margin = 0.0) const {
    if (x.y() < margin || x.y() > spec_.height - margin) return false;
    for (const auto& w : walls_)
      if (w.inward.dot(Vec2(x.x(), x.z())) + w.offset < margin) return false;
    return true;
  }

  struct Hit {
    double t = std::numeric_limits<double>::infinity();
    int surface = -1;   // layout surface, when no occluder is hit first
    int occluder = -1;  // occluder index, when it is the first hit
    int axis = 0;       // slab axis of the occluder face
  };

  // First layout surface met by a ray leaving `origin` (inside the room).
  Hit cast_layout(const Vec3& origin, const Vec3& dir) const {
    Hit hit;
    for (std::size_t s = 0; s < surface_count(); ++s) {
      const WorldPlane p = plane(s);
      const double denom = p.normal.dot(dir);
      if (!(denom < 0.0)) continue;
      const double t = -p.signed_distance(origin) / denom;
      if (t < hit.t) {
        hit.t = t;
        hit.surface = static_cast<int>(s);
      }
    }
    return hit;
  }

  // First hit including occluder boxes.
  Hit cast(const Vec3& origin, const Vec3& dir) const {
    Hit hit = cast_layout(origin, dir);
    for (std::size_t i = 0; i < spec_.occluders.size(); ++i) {
      const auto& o = spec_.occluders[i];
      double t0 = 0.0, t1 = hit.t;
      int axis = -1;
      bool miss = false;
      for (int a = 0; a < 3 && !miss; ++a) {
        if (std::abs(dir[a]) < 1e-15) {
          miss = origin[a] < o.min[a] || origin[a] > o.max[a];
          continue;
        }
        double ta = (o.min[a] - origin[a]) / dir[a];
        double tb = (o.max[a] - origin[a]) / dir[a];
        if (ta > tb) std::swap(ta, tb);
        if (ta > t0) {
          t0 = ta;
          axis = a;
        }
        t1 = std::min(t1, tb);
        miss = t0 > t1;
      }
      if (!miss && axis >= 0 && t0 < hit.t) {
        hit.t = t0;
        hit.occluder = static_cast<int>(i);
        hit.axis = axis;
      }
    }
    return hit;
  }

  // Albedo and semantic label of a hit point.
  std::pair<Rgb8, SemanticLabel> shade(const Hit& hit, const Vec3& x) const {
    const Texture* tex = nullptr;
    double s = 0.0, t = 0.0;
    SemanticLabel label = SemanticLabel::wall;
    if (hit.occluder >= 0) {
      tex = &spec_.occluders[hit.occluder].texture;
      const int a = (hit.axis + 1) % 3, b = (hit.axis + 2) % 3;
      s = x[a];
      t = x[b];
      label = SemanticLabel::clutter;
    } else if (hit.surface == 0) {
      tex = &spec_.floor_texture;
      s = x.x();
      t = x.z();
      label = SemanticLabel::floor;
    } else if (hit.surface == 1) {
      tex = &spec_.ceiling_texture;
      s = x.x();
      t = x.z();
      label = SemanticLabel::ceiling;
    } else {
      const std::size_t k = static_cast<std::size_t>(hit.surface - 2);
      static const Texture fallback;
      tex = spec_.wall_textures.empty() ? &fallback
            : spec_.wall_textures.size() == 1 ? &spec_.wall_textures[0]
                                              : &spec_.wall_textures[k];
      s = walls_[k].dir.dot(Vec2(x.x(), x.z()) - walls_[k].start);
      t = x.y();
    }
    const double g = tex->value(s, t);
    Rgb8 rgb{};
    for (int c = 0; c < 3; ++c)
      rgb[c] = static_cast<std::uint8_t>(std::lround(std::clamp(g * tex->tint[c], 0.0, 1.0) * 255.0));
    return {rgb, label};
  }

 private:
  RoomSpec spec_;
  std::vector<Wall> walls_;
};

// Ground-truth 2D layout of a convex room seen from `pose`: floor corners,
// ceiling corners, the edges between them, and elements ordered
// floor, ceiling, walls.
inline LayoutSpec room_layout(const RoomGeometry& room, const Pose& pose, const SphericalCamera& cam) {
  LayoutSpec spec;
  const std::size_t n = room.wall_count();
  const auto& poly = room.spec().floor;
  for (int level = 0; level < 2; ++level) {
    const double y = level == 0 ? 0.0 : room.spec().height;
    for (std::size_t k = 0; k < n; ++k) {
      const Vec3 x_cam = pose.to_camera(Vec3(poly[k].x(), y, poly[k].y()));
      spec.corners.push_back({ray_to_pixel(cam, x_cam), x_cam.norm()});
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    spec.edges.push_back({k, (k + 1) % n});
    spec.edges.push_back({n + k, n + (k + 1) % n});
    spec.edges.push_back({k, n + k});
  }
  ElementSpec floor{ElementKind::floor, {}}, ceiling{ElementKind::ceiling, {}};
  for (std::size_t k = 0; k < n; ++k) {
    floor.corners.push_back(k);
    ceiling.corners.push_back(n + k);
  }
  spec.elements.push_back(floor);
  spec.elements.push_back(ceiling);
  for (std::size_t k = 0; k < n; ++k)
    spec.elements.push_back({ElementKind::wall, {k, (k + 1) % n, n + (k + 1) % n, n + k}});
  return spec;
}

// Renders one equirectangular view of a room. Image pixels are box-filtered
// over supersample^2 rays; semantics and depth use the pixel-center ray.
inline RenderedView render(const RoomGeometry& room, const Pose& pose, const SphericalCamera& cam,
                           int supersample = 2, int threads = 1) {
  validate(pose);
  if (!room.contains(pose.center(), 1e-6)) throw DomainError("camera pose lies outside the room");
  if ((pose.rotation * kUp - kUp).norm() > 1e-9) throw DomainError("synthetic cameras must be upright");
  if (supersample < 1) throw DomainError("supersample factor must be >= 1");
  for (const auto& o : room.spec().occluders) {
    const Vec3& c = pose.center();
    if ((c.array() >= o.min.array()).all() && (c.array() <= o.max.array()).all())
      throw DomainError("camera pose lies inside an occluder");
  }

  RenderedView out;
  out.pose = pose;
  out.camera_height = pose.center().y();
  out.image = RgbImage(cam.width, cam.height);
  out.semantic_gt = SemanticMap(cam.width, cam.height);
  const Vec3 origin = pose.center();
  parallel_for(static_cast<std::size_t>(cam.height), threads, [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < cam.width; ++u) {
      const Vec3 dir = pose.rotation * mvl::detail::ray_unchecked(cam, u + 0.5, v + 0.5);
      const auto hit = room.cast(origin, dir);
      out.semantic_gt(u, v) = static_cast<std::uint8_t>(room.shade(hit, origin + hit.t * dir).second);
      std::array<int, 3> acc{0, 0, 0};
      for (int a = 0; a < supersample; ++a) {
        for (int b = 0; b < supersample; ++b) {
          const Vec3 d = pose.rotation * mvl::detail::ray_unchecked(cam, u + (b + 0.5) / supersample,
                                                     v + (a + 0.5) / supersample);
          const auto h = room.cast(origin, d);
          const auto rgb = room.shade(h, origin + h.t * d).first;
          for (int c = 0; c < 3; ++c) acc[c] += rgb[c];
        }
      }
      const int n = supersample * supersample;
      for (int c = 0; c < 3; ++c)
        out.image(u, v)[c] = static_cast<std::uint8_t>((acc[c] + n / 2) / n);
    }
  });

  out.layout_spec = room_layout(room, pose, cam);
  out.layout_gt = build_layout(out.layout_spec, cam);
  for (std::size_t s = 0; s < room.surface_count(); ++s) {
    out.gt_planes.push_back(room.plane(s));
    out.gt_element_depths.push_back(room.plane(s).signed_distance(origin));
  }
  out.depth_gt = Raster<double>(cam.width, cam.height);
  for (std::size_t i = 0; i < out.depth_gt.size(); ++i)
    out.depth_gt[i] = out.gt_element_depths[out.layout_gt.labels[i]];
  return out;
}

// Deterministic camera placements: round-robin over rooms, uniformly inside
// each room (0.6 m from walls, clear of occluders), heights in [1.2, 1.9] m,
// random yaw.
inline std::vector<ViewSpec> sample_views(const SceneSpec& scene, int n_views, std::uint64_t seed) {
  if (n_views < 1) throw DomainError("scene needs at least one view");
  if (scene.rooms.empty()) throw DomainError("scene has no rooms");
  std::mt19937_64 rng(seed);
  std::vector<ViewSpec> views;
  for (int i = 0; i < n_views; ++i) {
    const std::size_t r = static_cast<std::size_t>(i) % scene.rooms.size();
    const RoomGeometry room(scene.rooms[r]);
    Vec2 lo = scene.rooms[r].floor.front(), hi = lo;
    for (const auto& p : scene.rooms[r].floor) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      const double x = lo.x() + detail::uniform01(rng) * (hi.x() - lo.x());
      const double z = lo.y() + detail::uniform01(rng) * (hi.y() - lo.y());
      const double y = std::min(1.2 + 0.7 * detail::uniform01(rng), room.spec().height - 0.3);
      const double yaw = 2.0 * std::numbers::pi * detail::uniform01(rng);
      const Vec3 c(x, y, z);
      bool ok = room.contains(Vec3(x, room.spec().height / 2, z), 0.6) && room.contains(c, 0.2);
      for (const auto& o : room.spec().occluders)
        ok = ok && !(x > o.min.x() - 0.3 && x < o.max.x() + 0.3 && z > o.min.z() - 0.3 &&
                     z < o.max.z() + 0.3);
      if (ok) {
        views.push_back({r, c, yaw});
        placed = true;
      }
    }
    if (!placed) throw DomainError("could not place a camera inside room " + std::to_string(r));
  }
  return views;
}

// Renders every view of the scene: the explicit views when given (the first
// n_views of them), otherwise n_views sampled placements.
inline std::vector<RenderedView> make_scene(const SceneSpec& scene, int n_views, std::uint64_t seed,
                                            int threads = 1) {
  if (n_views < 1) throw DomainError("scene needs at least one view");
  std::vector<ViewSpec> views;
  if (!scene.views.empty()) {
    if (static_cast<std::size_t>(n_views) > scene.views.size())
      throw DomainError("scene lists fewer explicit views than requested");
    views.assign(scene.views.begin(), scene.views.begin() + n_views);
  } else {
    views = sample_views(scene, n_views, seed);
  }
  std::vector<RoomGeometry> rooms;
  for (const auto& r : scene.rooms) rooms.emplace_back(r);
  std::vector<RenderedView> out;
  for (const auto& v : views) {
    if (v.room >= rooms.size()) throw DomainError("view references a missing room");
    out.push_back(render(rooms[v.room], Pose::upright(v.position, v.yaw), scene.camera,
                         scene.supersample, threads));
    out.back().room = v.room;
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON scene specs

inline void from_json(const nlohmann::json& j, Texture& t) {
  t = {};
  const auto kind = j.value("type", std::string("noise"));
  if (kind == "constant") t.kind = TextureKind::constant;
  else if (kind == "checker") t.kind = TextureKind::checker;
  else if (kind == "noise") t.kind = TextureKind::noise;
  else throw DomainError("unknown texture type '" + kind + "'");
  t.base = j.value("base", t.base);
  t.contrast = j.value("contrast", t.contrast);
  t.scale = j.value("scale", t.scale);
  t.seed = j.value("seed", t.seed);
  if (j.contains("tint")) t.tint = j.at("tint").get<std::array<double, 3>>();
  if (!(t.scale > 0.0)) throw DomainError("texture scale must be positive");
}

inline void to_json(nlohmann::json& j, const Texture& t) {
  static constexpr const char* names[] = {"constant", "checker", "noise"};
  j = {{"type", names[static_cast<int>(t.kind)]}, {"base", t.base}, {"contrast", t.contrast},
       {"scale", t.scale}, {"seed", t.seed}, {"tint", t.tint}};
}

inline Vec3 vec3_from_json(const nlohmann::json& j) {
  if (j.size() != 3) throw DomainError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline void from_json(const nlohmann::json& j, RoomSpec& r) {
  r = {};
  for (const auto& p : j.at("floor")) {
    if (p.size() != 2) throw DomainError("floor polygon vertices are [x, z] pairs");
    r.floor.emplace_back(p[0].get<double>(), p[1].get<double>());
  }
  r.height = j.at("height").get<double>();
  if (j.contains("textures")) {
    const auto& t = j.at("textures");
    if (t.contains("floor")) r.floor_texture = t.at("floor").get<Texture>();
    if (t.contains("ceiling")) r.ceiling_texture = t.at("ceiling").get<Texture>();
    if (t.contains("walls")) {
      const auto& w = t.at("walls");
      if (w.is_array()) r.wall_textures = w.get<std::vector<Texture>>();
      else r.wall_textures = {w.get<Texture>()};
    }
  }
  for (const auto& o : j.value("occluders", nlohmann::json::array())) {
    Occluder occ;
    occ.min = vec3_from_json(o.at("min"));
    occ.max = vec3_from_json(o.at("max"));
    if (o.contains("texture")) occ.texture = o.at("texture").get<Texture>();
    r.occluders.push_back(occ);
  }
}

inline void from_json(const nlohmann::json& j, SceneSpec& s) {
  s = {};
  if (j.contains("camera")) {
    const auto& c = j.at("camera");
    s.camera = SphericalCamera(c.at("width").get<int>(), c.at("height").get<int>());
  }
  s.supersample = j.value("supersample", 2);
  s.rooms = j.at("rooms").get<std::vector<RoomSpec>>();
  for (const auto& v : j.value("views", nlohmann::json::array())) {
    ViewSpec vs;
    vs.room = v.value("room", std::size_t{0});
    vs.position = vec3_from_json(v.at("position"));
    vs.yaw = v.value("yaw_deg", 0.0) * std::numbers::pi / 180.0;
    s.views.push_back(vs);
  }
  s.n_views = j.value("n_views", static_cast<int>(s.views.size()));
  s.seed = j.value("seed", std::uint64_t{0});
  for (const auto& r : s.rooms) RoomGeometry check(r);
}

}  // namespace mvl::synth
