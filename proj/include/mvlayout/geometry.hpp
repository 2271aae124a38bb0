#pragma once

#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <json.hpp>

#include "errors.hpp"

namespace mvl {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline const Vec3 kUp{0.0, 1.0, 0.0};

// Rigid transform taking camera coordinates to world coordinates:
//   X_world = rotation * X_cam + translation.
// translation is therefore the camera center in world coordinates.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }

  // Upright camera at `center`, rotated by `yaw` radians about the up axis.
  static Pose upright(const Vec3& center, double yaw) {
    Pose p;
    p.rotation = Eigen::AngleAxisd(yaw, kUp).toRotationMatrix();
    p.translation = center;
    return p;
  }

  Vec3 to_world(const Vec3& x_cam) const { return rotation * x_cam + translation; }
  Vec3 to_camera(const Vec3& x_world) const {
    return rotation.transpose() * (x_world - translation);
  }
  const Vec3& center() const { return translation; }
};

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return (r.transpose() * r - Mat3::Identity()).norm() < tol && r.determinant() > 0.0;
}

inline void validate(const Pose& p) {
  if (!is_rotation(p.rotation)) throw DomainError("pose rotation is not orthonormal with det +1");
  if (!p.translation.allFinite()) throw DomainError("pose translation is not finite");
}

// a ∘ b: apply b first, then a.
inline Pose compose(const Pose& a, const Pose& b) {
  return {a.rotation * b.rotation, a.rotation * b.translation + a.translation};
}

inline Pose invert(const Pose& a) {
  const Mat3 rt = a.rotation.transpose();
  return {rt, -(rt * a.translation)};
}

// Equirectangular camera. Longitude spans the columns, latitude the rows.
struct SphericalCamera {
  int width = 0;
  int height = 0;

  SphericalCamera() = default;
  SphericalCamera(int w, int h) : width(w), height(h) {
    if (w < 8 || w != 2 * h) throw DomainError("equirectangular camera needs width = 2*height >= 8");
  }

  // Angular size of one pixel.
  double pixel_angle() const { return 2.0 * std::numbers::pi / width; }
  long pixel_count() const { return static_cast<long>(width) * height; }

  friend bool operator==(const SphericalCamera&, const SphericalCamera&) = default;
};

namespace detail {

// Unchecked fast path shared by the sweep kernels.
inline Vec3 ray_unchecked(const SphericalCamera& cam, double u, double v) {
  constexpr double pi = std::numbers::pi;
  const double lon = (u / cam.width) * 2.0 * pi - pi;
  const double lat = pi / 2.0 - (v / cam.height) * pi;
  const double c = std::cos(lat);
  return {c * std::sin(lon), std::sin(lat), c * std::cos(lon)};
}

inline Vec2 pixel_unchecked(const SphericalCamera& cam, const Vec3& d) {
  constexpr double pi = std::numbers::pi;
  const double lon = std::atan2(d.x(), d.z());
  const double lat = std::atan2(d.y(), std::sqrt(d.x() * d.x() + d.z() * d.z()));
  double u = (lon + pi) / (2.0 * pi) * cam.width;
  if (u >= cam.width) u -= cam.width;
  if (u < 0.0) u += cam.width;
  const double v = (pi / 2.0 - lat) / pi * cam.height;
  return {u, v};
}

}  // namespace detail

// Unit viewing direction of a continuous pixel position. y is up, the image
// center looks along +z.
inline Vec3 pixel_to_ray(const SphericalCamera& cam, const Vec2& pixel) {
  if (!(pixel.x() >= 0.0 && pixel.x() < cam.width && pixel.y() >= 0.0 && pixel.y() < cam.height))
    throw DomainError("pixel out of panorama bounds");
  return detail::ray_unchecked(cam, pixel.x(), pixel.y());
}

// Inverse of pixel_to_ray. u is wrapped to [0, width), v lies in [0, height].
inline Vec2 ray_to_pixel(const SphericalCamera& cam, const Vec3& dir) {
  if (!(dir.squaredNorm() > 0.0) || !dir.allFinite())
    throw DomainError("cannot project a zero or non-finite direction");
  return detail::pixel_unchecked(cam, dir);
}

// Plane {X : normal·X + depth = 0}, expressed in a camera frame. The normal
// faces the camera, so depth is the camera-to-plane distance.
struct Plane {
  Vec3 normal = kUp;
  double depth = 1.0;

  Plane() = default;
  Plane(const Vec3& n, double d) : normal(n), depth(d) {
    if (std::abs(n.norm() - 1.0) > 1e-9) throw DomainError("plane normal must be unit length");
    if (!(d > 0.0)) throw DomainError("plane depth must be positive");
  }
};

// Distance along `ray` to the plane, if the ray travels towards it.
inline std::optional<double> intersect(const Plane& plane, const Vec3& ray) {
  const double denom = plane.normal.dot(ray);
  if (!(denom < 0.0)) return std::nullopt;
  return -plane.depth / denom;
}

// Plane-induced correspondence: casts the reference ray through `pixel`, meets
// the plane (reference camera frame), and reprojects the hit into the source
// panorama. Empty when the ray never reaches the plane.
inline std::optional<Vec2> warp_layout(const Pose& ref_pose, const Pose& src_pose,
                                       const Plane& plane, const SphericalCamera& cam,
                                       const Vec2& pixel) {
  validate(ref_pose);
  validate(src_pose);
  const Vec3 ray = pixel_to_ray(cam, pixel);
  const auto t = intersect(plane, ray);
  if (!t) return std::nullopt;
  const Vec3 x_src = src_pose.to_camera(ref_pose.to_world(*t * ray));
  if (!(x_src.squaredNorm() > 0.0)) return std::nullopt;
  return detail::pixel_unchecked(cam, x_src);
}

// World-frame plane {X : normal·X + offset = 0}.
struct WorldPlane {
  Vec3 normal = kUp;
  double offset = 0.0;

  double signed_distance(const Vec3& x) const { return normal.dot(x) + offset; }
};

inline WorldPlane to_world(const Plane& p, const Pose& pose) {
  const Vec3 n = pose.rotation * p.normal;
  return {n, p.depth - n.dot(pose.translation)};
}

// Re-expresses a world plane in the camera frame. The normal keeps its world
// orientation; depth may come out non-positive if the camera sits behind it.
inline std::pair<Vec3, double> to_camera(const WorldPlane& p, const Pose& pose) {
  const Vec3 n = pose.rotation.transpose() * p.normal;
  return {n, p.offset + p.normal.dot(pose.translation)};
}

// Hit point of a world ray with a world plane, if in front of the origin.
inline std::optional<Vec3> intersect(const WorldPlane& p, const Vec3& origin, const Vec3& dir) {
  const double denom = p.normal.dot(dir);
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const double t = -p.signed_distance(origin) / denom;
  if (!(t > 0.0)) return std::nullopt;
  return origin + t * dir;
}

// JSON: {"rotation": [9 numbers, row-major], "translation": [x, y, z]}.
inline void to_json(nlohmann::json& j, const Pose& p) {
  nlohmann::json r = nlohmann::json::array();
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) r.push_back(p.rotation(row, col));
  j = {{"rotation", r},
       {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

inline void from_json(const nlohmann::json& j, Pose& p) {
  const auto& r = j.at("rotation");
  const auto& t = j.at("translation");
  if (r.size() != 9 || t.size() != 3) throw DomainError("pose JSON needs 9 rotation and 3 translation values");
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) p.rotation(row, col) = r.at(row * 3 + col).get<double>();
  p.translation = {t[0].get<double>(), t[1].get<double>(), t[2].get<double>()};
  validate(p);
}

}  // namespace mvl
