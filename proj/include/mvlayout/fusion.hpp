#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "geometry.hpp"
#include "layout3d.hpp"

namespace mvl {

struct FusionOptions {
  double distance_threshold = 0.1;  // meters
  double max_normal_angle_deg = 5.0;
  double min_overlap_area = 1e-4;   // m^2
  double visibility_margin = 0.05;  // crossings this close to either endpoint are ignored
  bool check_visibility = true;
};

// Element `element` of the `view`-th input layout.
struct MemberRef {
  std::size_t view = 0;
  std::size_t element = 0;
  auto operator<=>(const MemberRef&) const = default;
};

struct FusedElement {
  ElementKind kind = ElementKind::wall;
  WorldPlane plane;
  std::vector<std::vector<Vec3>> pieces;  // member polygons projected onto `plane`
  std::vector<MemberRef> members;         // sorted
  double weight = 0.0;
};

struct SceneLayout {
  std::vector<Layout3D> views;
  std::vector<FusedElement> elements;
  FusionOptions options;

  // Index of the fused element holding a member, or -1.
  int find(MemberRef m) const {
    for (std::size_t i = 0; i < elements.size(); ++i)
      if (std::binary_search(elements[i].members.begin(), elements[i].members.end(), m))
        return static_cast<int>(i);
    return -1;
  }
  std::size_t count(ElementKind kind) const {
    return static_cast<std::size_t>(std::count_if(elements.begin(), elements.end(),
                                                  [&](const auto& e) { return e.kind == kind; }));
  }
};

namespace detail {

struct PlaneFrame {
  Vec3 origin, e1, e2;

  explicit PlaneFrame(const WorldPlane& p) {
    const Vec3& n = p.normal;
    const Vec3 a = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    e1 = (a - a.dot(n) * n).normalized();
    e2 = n.cross(e1);
    origin = -p.offset * n;
  }
  Vec2 project(const Vec3& x) const { return {e1.dot(x - origin), e2.dot(x - origin)}; }
  Vec3 lift(const Vec2& q) const { return origin + q.x() * e1 + q.y() * e2; }
};

inline double cross2(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Counter-clockwise convex hull (monotone chain).
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  if (pts.size() < 3) return pts;
  std::vector<Vec2> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross2(h[k - 2], h[k - 1], pts[i]) <= 0.0) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross2(h[k - 2], h[k - 1], pts[i]) <= 0.0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

inline double polygon_area(const std::vector<Vec2>& p) {
  double a = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& q = p[i];
    const auto& r = p[(i + 1) % p.size()];
    a += q.x() * r.y() - r.x() * q.y();
  }
  return 0.5 * a;
}

// Sutherland-Hodgman: clip `subject` by the convex CCW polygon `clip`.
inline std::vector<Vec2> clip_polygon(std::vector<Vec2> subject, const std::vector<Vec2>& clip) {
  for (std::size_t i = 0; i < clip.size() && !subject.empty(); ++i) {
    const Vec2& a = clip[i];
    const Vec2& b = clip[(i + 1) % clip.size()];
    std::vector<Vec2> out;
    for (std::size_t j = 0; j < subject.size(); ++j) {
      const Vec2& p = subject[j];
      const Vec2& q = subject[(j + 1) % subject.size()];
      const double sp = cross2(a, b, p);
      const double sq = cross2(a, b, q);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) out.push_back(p + (q - p) * (sp / (sp - sq)));
    }
    subject = std::move(out);
  }
  return subject;
}

inline bool inside_convex(const std::vector<Vec2>& hull, const Vec2& x) {
  if (hull.size() < 3) return false;
  for (std::size_t i = 0; i < hull.size(); ++i)
    if (cross2(hull[i], hull[(i + 1) % hull.size()], x) < 0.0) return false;
  return true;
}

inline Vec3 centroid(const std::vector<Vec3>& poly) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : poly) c += p;
  return poly.empty() ? c : Vec3(c / static_cast<double>(poly.size()));
}

// True when no element of `view` other than `skip` blocks the segment from
// the view's camera center to `target`.
inline bool visible_from(const Layout3D& view, std::size_t skip, const Vec3& target,
                         const FusionOptions& opt) {
  const Vec3 c = view.pose.center();
  const double len = (target - c).norm();
  if (len <= 2.0 * opt.visibility_margin) return true;
  const double eps = opt.visibility_margin / len;
  for (std::size_t k = 0; k < view.elements.size(); ++k) {
    if (k == skip) continue;
    const auto& e = view.elements[k];
    if (e.polygon.size() < 3) continue;
    const double s0 = e.plane.signed_distance(c);
    const double s1 = e.plane.signed_distance(target);
    if ((s0 > 0.0) == (s1 > 0.0) || s0 == s1) continue;
    const double t = s0 / (s0 - s1);
    if (t <= eps || t >= 1.0 - eps) continue;
    const PlaneFrame f(e.plane);
    std::vector<Vec2> poly;
    for (const auto& p : e.polygon) poly.push_back(f.project(p));
    if (inside_convex(convex_hull(poly), f.project(c + t * (target - c)))) return false;
  }
  return true;
}

inline std::vector<Vec2> projected_hull(const PlaneFrame& f, const std::vector<Vec3>& poly) {
  std::vector<Vec2> q;
  for (const auto& p : poly) q.push_back(f.project(p));
  return convex_hull(std::move(q));
}

}  // namespace detail

// Pairwise merge test on two input elements. The geometric part is always
// evaluated with the lower reference first, so mergeable(a, b) == mergeable(b, a).
inline bool mergeable(const std::vector<Layout3D>& views, MemberRef a, MemberRef b,
                      const FusionOptions& opt = {}) {
  if (a == b) return true;
  if (b < a) std::swap(a, b);
  if (a.view == b.view) return false;
  const auto& ea = views.at(a.view).elements.at(a.element);
  const auto& eb = views.at(b.view).elements.at(b.element);
  if (ea.kind != eb.kind) return false;
  const double cosang = ea.plane.normal.dot(eb.plane.normal);
  if (cosang < std::cos(opt.max_normal_angle_deg * std::numbers::pi / 180.0)) return false;
  if (ea.polygon.size() < 3 || eb.polygon.size() < 3) return false;

  const detail::PlaneFrame f(ea.plane);
  const auto ha = detail::projected_hull(f, ea.polygon);
  const auto hb = detail::projected_hull(f, eb.polygon);
  if (ha.size() < 3 || hb.size() < 3) return false;
  const auto overlap = detail::clip_polygon(ha, hb);
  if (overlap.size() < 3 || std::abs(detail::polygon_area(overlap)) < opt.min_overlap_area) return false;
  // Distance between the planes measured along a's normal at every overlap vertex.
  for (const auto& q : overlap)
    if (std::abs(eb.plane.signed_distance(f.lift(q))) / cosang >= opt.distance_threshold) return false;

  if (opt.check_visibility) {
    if (!detail::visible_from(views[b.view], b.element, detail::centroid(ea.polygon), opt)) return false;
    if (!detail::visible_from(views[a.view], a.element, detail::centroid(eb.polygon), opt)) return false;
  }
  return true;
}

namespace detail {

inline FusedElement make_fused(const std::vector<Layout3D>& views, std::vector<MemberRef> members) {
  std::sort(members.begin(), members.end());
  FusedElement out;
  Vec3 n = Vec3::Zero();
  double offset = 0.0;
  for (const auto& m : members) {
    const auto& e = views[m.view].elements[m.element];
    const double w = std::max(e.peak_probability, 1e-6);
    n += w * e.plane.normal;
    offset += w * e.plane.offset;
    out.weight += w;
  }
  const auto& first = views[members.front().view].elements[members.front().element];
  out.kind = first.kind;
  const double len = n.norm();
  if (!(len > 0.0)) throw DomainError("fused element normals cancel out");
  out.plane = {n / len, offset / len};
  for (const auto& m : members) {
    std::vector<Vec3> piece;
    for (const auto& p : views[m.view].elements[m.element].polygon)
      piece.push_back(p - out.plane.signed_distance(p) * out.plane.normal);
    out.pieces.push_back(std::move(piece));
  }
  out.members = std::move(members);
  return out;
}

inline std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i) {
  while (parent[i] != i) i = parent[i] = parent[parent[i]];
  return i;
}

}  // namespace detail

// Agglomerates groups of input elements. Two groups join when any pair of
// their members passes the merge test (single linkage), repeated until no
// pair of groups can join. The result does not depend on visiting order.
inline SceneLayout fuse(const SceneLayout& scene) {
  const auto& opt = scene.options;
  const auto& groups = scene.elements;
  std::vector<std::size_t> parent(groups.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (std::size_t j = i + 1; j < groups.size(); ++j) {
      if (groups[i].kind != groups[j].kind) continue;
      if (detail::find_root(parent, i) == detail::find_root(parent, j)) continue;
      bool join = false;
      for (const auto& a : groups[i].members) {
        for (const auto& b : groups[j].members)
          if ((join = mergeable(scene.views, a, b, opt))) break;
        if (join) break;
      }
      if (join) parent[detail::find_root(parent, j)] = detail::find_root(parent, i);
    }
  }
  std::vector<std::vector<MemberRef>> merged(groups.size());
  for (std::size_t i = 0; i < groups.size(); ++i) {
    auto& dst = merged[detail::find_root(parent, i)];
    dst.insert(dst.end(), groups[i].members.begin(), groups[i].members.end());
  }
  SceneLayout out{scene.views, {}, opt};
  for (auto& m : merged)
    if (!m.empty()) out.elements.push_back(detail::make_fused(scene.views, std::move(m)));
  std::sort(out.elements.begin(), out.elements.end(),
            [](const auto& x, const auto& y) { return x.members.front() < y.members.front(); });
  return out;
}

inline SceneLayout fuse(const std::vector<Layout3D>& views, const FusionOptions& opt = {}) {
  if (views.empty()) throw DomainError("fusion needs at least one view");
  if (!(opt.distance_threshold >= 0.0)) throw DomainError("fusion distance threshold must be non-negative");
  SceneLayout start{views, {}, opt};
  for (std::size_t v = 0; v < views.size(); ++v)
    for (std::size_t e = 0; e < views[v].elements.size(); ++e)
      start.elements.push_back(detail::make_fused(views, {MemberRef{v, e}}));
  return fuse(start);
}

// ---------------------------------------------------------------------------
// Export

// JSON plane list. Members are reported as [view_id, element_id].
inline nlohmann::json to_json(const SceneLayout& s) {
  nlohmann::json elements = nlohmann::json::array();
  for (std::size_t i = 0; i < s.elements.size(); ++i) {
    const auto& e = s.elements[i];
    nlohmann::json members = nlohmann::json::array();
    for (const auto& m : e.members)
      members.push_back({s.views[m.view].view_id, s.views[m.view].elements[m.element].id});
    nlohmann::json pieces = nlohmann::json::array();
    for (const auto& piece : e.pieces) {
      nlohmann::json pts = nlohmann::json::array();
      for (const auto& p : piece) pts.push_back({p.x(), p.y(), p.z()});
      pieces.push_back(std::move(pts));
    }
    elements.push_back({{"id", i},
                        {"kind", to_string(e.kind)},
                        {"normal", {e.plane.normal.x(), e.plane.normal.y(), e.plane.normal.z()}},
                        {"offset", e.plane.offset},
                        {"weight", e.weight},
                        {"members", members},
                        {"pieces", pieces}});
  }
  return {{"distance_threshold", s.options.distance_threshold}, {"elements", elements}};
}

// ASCII PLY. Each piece is ordered around its hull and fan-triangulated.
inline std::string to_ply(const SceneLayout& s) {
  std::vector<Vec3> verts;
  std::vector<std::array<std::size_t, 3>> faces;
  for (const auto& e : s.elements) {
    const detail::PlaneFrame f(e.plane);
    for (const auto& piece : e.pieces) {
      const auto hull = detail::projected_hull(f, piece);
      if (hull.size() < 3) continue;
      const std::size_t base = verts.size();
      for (const auto& q : hull) verts.push_back(f.lift(q));
      // Hull is CCW about the frame normal e1 x e2 = plane normal, so faces point into the room.
      for (std::size_t k = 1; k + 1 < hull.size(); ++k) faces.push_back({base, base + k, base + k + 1});
    }
  }
  std::ostringstream os;
  os.precision(9);
  os << "ply\nformat ascii 1.0\nelement vertex " << verts.size()
     << "\nproperty float x\nproperty float y\nproperty float z\nelement face " << faces.size()
     << "\nproperty list uchar int vertex_indices\nend_header\n";
  for (const auto& v : verts) os << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : faces) os << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  return os.str();
}

// Per-view layout JSON.
inline nlohmann::json to_json(const Layout3D& l) {
  nlohmann::json elements = nlohmann::json::array();
  for (const auto& e : l.elements) {
    nlohmann::json poly = nlohmann::json::array();
    for (const auto& p : e.polygon) poly.push_back({p.x(), p.y(), p.z()});
    elements.push_back({{"id", e.id},
                        {"kind", to_string(e.kind)},
                        {"orientation", {e.orientation.x(), e.orientation.y(), e.orientation.z()}},
                        {"depth", e.depth},
                        {"normal", {e.plane.normal.x(), e.plane.normal.y(), e.plane.normal.z()}},
                        {"offset", e.plane.offset},
                        {"peak_probability", e.peak_probability},
                        {"pixel_count", e.pixel_count},
                        {"polygon", poly}});
  }
  nlohmann::json pose;
  to_json(pose, l.pose);
  return {{"view_id", l.view_id}, {"pose", pose}, {"elements", elements}};
}

}  // namespace mvl
