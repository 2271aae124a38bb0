#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "confidence.hpp"
#include "errors.hpp"
#include "fusion.hpp"
#include "geometry.hpp"
#include "layout2d.hpp"
#include "layout3d.hpp"
#include "raster.hpp"

namespace mvl {

// Layout depth raster: each pixel carries the plane depth of its element.
inline Raster<double> paint_depth(const Layout2D& layout, std::span<const double> depths) {
  if (depths.size() != layout.elements.size()) throw DomainError("paint_depth needs one depth per element");
  Raster<double> out(layout.labels.width(), layout.labels.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = depths[static_cast<std::size_t>(layout.labels[i])];
  return out;
}

namespace detail {

inline void check_depth_pair(const Raster<double>& pred, const Raster<double>& gt) {
  if (!pred.same_shape(gt)) throw DomainError("depth rasters differ in size");
  if (gt.size() == 0) throw DomainError("depth rasters are empty");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!(gt[i] > 0.0) || !std::isfinite(gt[i])) throw DomainError("ground-truth depth must be positive and finite");
    if (!std::isfinite(pred[i])) throw DomainError("predicted depth is not finite");
  }
}

}  // namespace detail

inline double depth_rmse(const Raster<double>& pred, const Raster<double>& gt) {
  detail::check_depth_pair(pred, gt);
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) sum += (pred[i] - gt[i]) * (pred[i] - gt[i]);
  return std::sqrt(sum / static_cast<double>(gt.size()));
}

// RMSE restricted to pixels with a non-zero mask value.
inline double depth_rmse(const Raster<double>& pred, const Raster<double>& gt, const Raster<std::uint8_t>& mask) {
  detail::check_depth_pair(pred, gt);
  if (!mask.same_shape(gt)) throw DomainError("mask differs in size from the depth rasters");
  double sum = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask[i]) continue;
    sum += (pred[i] - gt[i]) * (pred[i] - gt[i]);
    ++n;
  }
  if (n == 0) throw DomainError("depth mask selects no pixel");
  return std::sqrt(sum / static_cast<double>(n));
}

// Pixels labelled ceiling, floor or wall.
inline Raster<std::uint8_t> layout_structure_mask(const SemanticMap& sem) {
  Raster<std::uint8_t> m(sem.width(), sem.height(), 0);
  for (std::size_t i = 0; i < sem.size(); ++i) {
    const auto l = static_cast<SemanticLabel>(sem[i]);
    m[i] = l == SemanticLabel::ceiling || l == SemanticLabel::floor || l == SemanticLabel::wall;
  }
  return m;
}

inline double scale_error(double pred_height, double gt_height) { return std::abs(pred_height - gt_height); }

// ---------------------------------------------------------------------------
// Coherency

struct Correspondence {
  Vec2 ref;  // pixel in the reference view
  Vec2 src;  // pixel in the source view
};

struct ViewPair {
  std::size_t ref = 0;  // indices into the view list
  std::size_t src = 0;
  std::vector<Correspondence> matches;
};

// A view as seen by the coherency metric: region labels plus element planes.
struct LiftableView {
  SphericalCamera camera;
  Raster<std::int32_t> labels;
  Layout3D layout;
};

struct CoherencyResult {
  double mean = 0.0;
  long used = 0;
  long excluded = 0;  // rays that missed their element plane
};

namespace detail {

inline std::int32_t label_at(const Raster<std::int32_t>& labels, const Vec2& px) {
  const int u = wrap_column(static_cast<int>(std::floor(px.x())), labels.width());
  const int v = clamp_row(static_cast<int>(std::floor(px.y())), labels.height());
  return labels(u, v);
}

inline std::optional<Vec3> lift_pixel(const LiftableView& view, const Vec2& px) {
  const auto j = static_cast<std::size_t>(label_at(view.labels, px));
  if (j >= view.layout.elements.size()) throw DomainError("region label has no matching element");
  const Vec3 dir = view.layout.pose.rotation * pixel_to_ray(view.camera, px);
  return intersect(view.layout.elements[j].plane, view.layout.pose.center(), dir);
}

}  // namespace detail

inline CoherencyResult coherency(std::span<const LiftableView> views, std::span<const ViewPair> pairs) {
  CoherencyResult out;
  double sum = 0.0;
  for (const auto& pair : pairs) {
    const auto& a = views[pair.ref];
    const auto& b = views[pair.src];
    for (const auto& m : pair.matches) {
      const auto xa = detail::lift_pixel(a, m.ref);
      const auto xb = detail::lift_pixel(b, m.src);
      if (!xa || !xb) {
        ++out.excluded;
        continue;
      }
      sum += (*xa - *xb).norm();
      ++out.used;
    }
  }
  if (out.used == 0) throw DomainError("coherency needs at least one usable correspondence");
  out.mean = sum / static_cast<double>(out.used);
  return out;
}

// Replaces each per-view element plane with the plane of its fused element.
inline std::vector<Layout3D> fused_views(const SceneLayout& scene) {
  auto views = scene.views;
  for (const auto& f : scene.elements)
    for (const auto& m : f.members) views[m.view].elements[m.element].plane = f.plane;
  return views;
}

// Pixel pairs seeing the same layout point, found by lifting random reference
// pixels with the ground-truth layout and checking the reprojection against
// the source's ground-truth layout (the two lifts must agree within `tolerance` meters).
inline std::vector<Correspondence> generate_correspondences(const LiftableView& ref, const LiftableView& src,
                                                            std::size_t count, std::uint64_t seed,
                                                            double tolerance = 1e-6) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_u(0, ref.camera.width - 1);
  std::uniform_int_distribution<int> pick_v(0, ref.camera.height - 1);
  std::vector<Correspondence> out;
  const std::size_t max_attempts = 50 * count;
  for (std::size_t attempt = 0; attempt < max_attempts && out.size() < count; ++attempt) {
    const Vec2 p(pick_u(rng) + 0.5, pick_v(rng) + 0.5);
    const auto x = detail::lift_pixel(ref, p);
    if (!x) continue;
    const Vec3 xs = src.layout.pose.to_camera(*x);
    if (xs.norm() < 1e-6) continue;
    const Vec2 q = detail::pixel_unchecked(src.camera, xs);
    if (!(q.y() >= 0.0 && q.y() < src.camera.height)) continue;
    const auto y = detail::lift_pixel(src, q);
    if (!y || (*y - *x).norm() > tolerance) continue;
    out.push_back({p, q});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct ViewReport {
  std::size_t view_id = 0;
  double depth_rmse = 0.0;
  double depth_rmse_layout = 0.0;  // layout-structure pixels only
  double pred_height = 0.0;
  double gt_height = 0.0;
  double scale_error = 0.0;
};

struct EvalReport {
  double depth_rmse = 0.0;         // over all pixels of all views
  double depth_rmse_layout = 0.0;  // layout-structure pixels of all views
  double scale_error = 0.0;        // mean over views
  double max_scale_error = 0.0;
  double coherency = 0.0;          // fused planes
  double coherency_per_view = 0.0; // per-view planes, before fusion
  long correspondences = 0;
  long excluded_correspondences = 0;
  std::vector<ViewReport> views;
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json views = nlohmann::json::array();
  for (const auto& v : r.views)
    views.push_back({{"view_id", v.view_id},
                     {"depth_rmse", v.depth_rmse},
                     {"depth_rmse_layout", v.depth_rmse_layout},
                     {"pred_camera_height", v.pred_height},
                     {"gt_camera_height", v.gt_height},
                     {"scale_error", v.scale_error}});
  return {{"depth_rmse", r.depth_rmse},
          {"depth_rmse_layout", r.depth_rmse_layout},
          {"scale_error", r.scale_error},
          {"max_scale_error", r.max_scale_error},
          {"coherency", r.coherency},
          {"coherency_per_view", r.coherency_per_view},
          {"correspondences", r.correspondences},
          {"excluded_correspondences", r.excluded_correspondences},
          {"views", views}};
}

// Pools per-view squared errors into scene-level RMSE figures.
inline void pool_depth_errors(EvalReport& r, std::span<const Raster<double>> pred, std::span<const Raster<double>> gt,
                              std::span<const Raster<std::uint8_t>> masks) {
  double all = 0.0, lay = 0.0;
  long n_all = 0, n_lay = 0;
  for (std::size_t v = 0; v < pred.size(); ++v) {
    detail::check_depth_pair(pred[v], gt[v]);
    for (std::size_t i = 0; i < gt[v].size(); ++i) {
      const double e2 = (pred[v][i] - gt[v][i]) * (pred[v][i] - gt[v][i]);
      all += e2;
      ++n_all;
      if (!masks.empty() && masks[v][i]) {
        lay += e2;
        ++n_lay;
      }
    }
  }
  if (n_all == 0) throw DomainError("no depth pixels to evaluate");
  r.depth_rmse = std::sqrt(all / static_cast<double>(n_all));
  r.depth_rmse_layout = n_lay ? std::sqrt(lay / static_cast<double>(n_lay)) : r.depth_rmse;
}

// Absolute depth error, blue (0) to red (>= max_error).
inline RgbImage error_map(const Raster<double>& pred, const Raster<double>& gt, double max_error = 0.25) {
  if (!pred.same_shape(gt)) throw DomainError("depth rasters differ in size");
  RgbImage out(gt.width(), gt.height());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double t = std::clamp(std::abs(pred[i] - gt[i]) / max_error, 0.0, 1.0);
    out[i] = {static_cast<std::uint8_t>(std::lround(255.0 * t)),
              static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - std::abs(2.0 * t - 1.0)))),
              static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - t)))};
  }
  return out;
}

inline std::string per_view_csv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(9);
  os << "view_id,depth_rmse,depth_rmse_layout,pred_camera_height,gt_camera_height,scale_error\n";
  for (const auto& v : r.views)
    os << v.view_id << ',' << v.depth_rmse << ',' << v.depth_rmse_layout << ',' << v.pred_height << ','
       << v.gt_height << ',' << v.scale_error << '\n';
  return os.str();
}

// Histogram of absolute per-pixel depth errors, `bin` meters wide.
inline std::string error_histogram_csv(std::span<const Raster<double>> pred, std::span<const Raster<double>> gt,
                                       double bin = 0.01, int bins = 50) {
  std::vector<long> h(static_cast<std::size_t>(bins) + 1, 0);
  for (std::size_t v = 0; v < pred.size(); ++v)
    for (std::size_t i = 0; i < gt[v].size(); ++i) {
      const auto b = static_cast<std::size_t>(std::min<double>(std::abs(pred[v][i] - gt[v][i]) / bin, bins));
      ++h[b];
    }
  std::ostringstream os;
  os << "lower_m,upper_m,count\n";
  for (int b = 0; b <= bins; ++b) {
    os << b * bin << ',';
    if (b < bins) os << (b + 1) * bin; else os << "inf";
    os << ',' << h[static_cast<std::size_t>(b)] << '\n';
  }
  return os.str();
}

}  // namespace mvl
