#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "confidence.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "layout2d.hpp"
#include "layout3d.hpp"
#include "parallel.hpp"
#include "raster.hpp"

namespace mvl {

enum class HypothesisSpacing { uniform, inverse };

// Depth sweep plan. Values are strictly increasing from d_min to d_max;
// inverse spacing is uniform in 1/d.
struct DepthHypotheses {
  double d_min = 0.3;
  double d_max = 12.0;
  int count = 128;
  HypothesisSpacing spacing = HypothesisSpacing::inverse;

  void validate() const {
    if (!(d_min > 0.0 && d_min < d_max)) throw DomainError("hypotheses need 0 < d_min < d_max");
    if (count < 2) throw DomainError("hypotheses need count >= 2");
  }

  std::vector<double> values() const {
    validate();
    std::vector<double> d(count);
    for (int k = 0; k < count; ++k) {
      const double a = static_cast<double>(k) / (count - 1);
      if (spacing == HypothesisSpacing::uniform) {
        d[k] = d_min + a * (d_max - d_min);
      } else {
        // Uniform in inverse depth, listed nearest first.
        d[k] = 1.0 / (1.0 / d_min + a * (1.0 / d_max - 1.0 / d_min));
      }
    }
    d.front() = d_min;
    d.back() = d_max;
    return d;
  }

  // Width of the hypothesis interval that brackets `depth`.
  double local_spacing(double depth) const {
    const auto d = values();
    if (depth <= d.front()) return d[1] - d[0];
    if (depth >= d.back()) return d[count - 1] - d[count - 2];
    const auto it = std::upper_bound(d.begin(), d.end(), depth);
    return *it - *(it - 1);
  }
};

// A panorama (gray intensities in [0, 1]) with its camera pose.
struct ViewImage {
  GrayImage image;
  Pose pose;
};

struct MatchingOptions {
  int patch_radius = 2;  // 5x5 patches
  long max_element_pixels = 20000;
  int threads = 1;
};

inline constexpr double kSentinelCost = std::numeric_limits<double>::infinity();

// Raw matching costs of one element over its (possibly subsampled) pixels.
struct ElementCosts {
  std::size_t element = 0;
  int stride = 1;
  std::vector<std::int32_t> pixels;  // linear pixel indices, raster order
  std::vector<double> costs;         // hypothesis-major: costs[k * pixels.size() + i]

  double at(std::size_t i, int k) const { return costs[static_cast<std::size_t>(k) * pixels.size() + i]; }
};

struct CostVolume {
  SphericalCamera camera;
  int hypothesis_count = 0;
  std::vector<ElementCosts> elements;
};

namespace detail {

// Intensity standard deviation below which a patch carries no texture.
inline constexpr double kFlatPatchStd = 1e-4;

// Pixels of element `j` used for matching: all of them, or a regular grid
// (every stride-th row and column) when the region exceeds `max_pixels`.
inline std::pair<std::vector<std::int32_t>, int> select_pixels(const Layout2D& layout, std::size_t j,
                                                               long max_pixels) {
  const auto& labels = layout.labels;
  const long count = layout.elements[j].pixel_count;
  int stride = 1;
  if (max_pixels > 0 && count > max_pixels)
    stride = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count) / max_pixels)));
  std::vector<std::int32_t> out;
  for (;;) {
    out.clear();
    for (int v = 0; v < labels.height(); v += stride)
      for (int u = 0; u < labels.width(); u += stride)
        if (labels(u, v) == static_cast<std::int32_t>(j))
          out.push_back(static_cast<std::int32_t>(labels.index(u, v)));
    if (!out.empty() || stride == 1) break;
    stride = 1;
  }
  return {out, stride};
}

// Matching cost of one source patch against a normalized reference patch:
// the mean across-view variance of the two zero-mean, unit-variance patches,
// i.e. (1 - ZNCC) / 2. Flat patches carry no evidence and score 0.5.
inline double patch_cost(std::span<const double> ref_hat, bool ref_textured, std::span<const double> src) {
  const double n = static_cast<double>(src.size());
  double mean = 0.0;
  for (double x : src) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : src) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  if (!ref_textured || sd < kFlatPatchStd) return 0.5;
  double dot = 0.0;
  for (std::size_t t = 0; t < src.size(); ++t) dot += ref_hat[t] * (src[t] - mean);
  const double ncc = dot / (n * sd);
  return std::max(0.0, (1.0 - ncc) / 2.0);
}

// Zero-mean, unit-variance copy of a patch; false when the patch is flat.
inline bool normalize_patch(std::span<const double> in, std::span<double> out) {
  const double n = static_cast<double>(in.size());
  double mean = 0.0;
  for (double x : in) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : in) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  if (sd < kFlatPatchStd) {
    std::fill(out.begin(), out.end(), 0.0);
    return false;
  }
  for (std::size_t t = 0; t < in.size(); ++t) out[t] = (in[t] - mean) / sd;
  return true;
}

}  // namespace detail

// Plane-sweep matching cost for every element pixel and depth hypothesis.
// A pixel of element j tested at depth d warps its reference patch through
// the plane (o_j, d) into each source view; the per-view patch costs are
// averaged over the views where the whole patch lands in front of the
// plane. Pixels without any such view get kSentinelCost.
inline CostVolume matching_cost(const ViewImage& ref, std::span<const ViewImage> sources,
                                const Layout2D& layout, const DepthHypotheses& hyp,
                                const MatchingOptions& opt = {}) {
  if (sources.empty()) throw DomainError("matching needs at least one source view");
  const auto& cam = layout.camera;
  const int w = cam.width;
  const int h = cam.height;
  if (ref.image.width() != w || ref.image.height() != h)
    throw DomainError("reference image does not match the layout camera");
  for (const auto& s : sources) {
    if (s.image.width() != w || s.image.height() != h)
      throw DomainError("source image does not match the layout camera");
    validate(s.pose);
  }
  validate(ref.pose);
  if (opt.patch_radius < 0) throw DomainError("patch radius must be non-negative");
  const auto depths = hyp.values();
  const int n_hyp = hyp.count;
  const int r = opt.patch_radius;
  const int side = 2 * r + 1;
  const std::size_t n_patch = static_cast<std::size_t>(side) * side;
  const std::size_t n_src = sources.size();

  struct Transfer {
    Mat3 m;
    Vec3 b;
  };
  std::vector<Transfer> transfer;
  for (const auto& s : sources) {
    const Mat3 rt = s.pose.rotation.transpose();
    transfer.push_back({rt * ref.pose.rotation, rt * (ref.pose.translation - s.pose.translation)});
  }

  CostVolume vol{cam, n_hyp, {}};
  Raster<std::int32_t> fp_index(w, h, -1);
  for (std::size_t j = 0; j < layout.elements.size(); ++j) {
    const Vec3& o = layout.elements[j].orientation;
    auto [pixels, stride] = detail::select_pixels(layout, j, opt.max_element_pixels);
    const std::size_t n_sel = pixels.size();

    // Footprint: every pixel touched by a selected pixel's patch.
    std::vector<std::int32_t> footprint;
    std::vector<std::int32_t> patch_idx(n_sel * n_patch);
    for (std::size_t i = 0; i < n_sel; ++i) {
      const int u = pixels[i] % w;
      const int v = pixels[i] / w;
      std::size_t t = 0;
      for (int dv = -r; dv <= r; ++dv) {
        for (int du = -r; du <= r; ++du, ++t) {
          const int qu = wrap_column(u + du, w);
          const int qv = clamp_row(v + dv, h);
          auto& slot = fp_index(qu, qv);
          if (slot < 0) {
            slot = static_cast<std::int32_t>(footprint.size());
            footprint.push_back(static_cast<std::int32_t>(fp_index.index(qu, qv)));
          }
          patch_idx[i * n_patch + t] = slot;
        }
      }
    }
    for (auto q : footprint) fp_index[q] = -1;

    // Per footprint pixel: X_src(d) = d * dir[s] + b[s], valid when the
    // reference ray meets the plane.
    const std::size_t n_fp = footprint.size();
    std::vector<std::uint8_t> meets(n_fp, 0);
    std::vector<Vec3> dir(n_fp * n_src);
    for (std::size_t f = 0; f < n_fp; ++f) {
      const int u = footprint[f] % w;
      const int v = footprint[f] / w;
      const Vec3 ray = mvl::detail::ray_unchecked(cam, u + 0.5, v + 0.5);
      const double denom = o.dot(ray);
      if (!(denom < 0.0)) continue;
      meets[f] = 1;
      const Vec3 g = -ray / denom;  // hit point at unit depth
      for (std::size_t s = 0; s < n_src; ++s) dir[f * n_src + s] = transfer[s].m * g;
    }

    std::vector<double> ref_hat(n_sel * n_patch);
    std::vector<std::uint8_t> ref_textured(n_sel);
    {
      std::vector<double> buf(n_patch);
      for (std::size_t i = 0; i < n_sel; ++i) {
        for (std::size_t t = 0; t < n_patch; ++t) buf[t] = ref.image[footprint[patch_idx[i * n_patch + t]]];
        ref_textured[i] = detail::normalize_patch(buf, {ref_hat.data() + i * n_patch, n_patch});
      }
    }

    ElementCosts ec;
    ec.element = j;
    ec.stride = stride;
    ec.costs.assign(static_cast<std::size_t>(n_hyp) * n_sel, kSentinelCost);
    parallel_for(static_cast<std::size_t>(n_hyp), opt.threads, [&](std::size_t k) {
      const double d = depths[k];
      std::vector<double> warped(n_fp * n_src);
      for (std::size_t f = 0; f < n_fp; ++f) {
        for (std::size_t s = 0; s < n_src; ++s) {
          double value = std::numeric_limits<double>::quiet_NaN();
          if (meets[f]) {
            const Vec3 x = d * dir[f * n_src + s] + transfer[s].b;
            if (x.squaredNorm() > 0.0) {
              const Vec2 px = mvl::detail::pixel_unchecked(cam, x);
              value = sample_bilinear(sources[s].image, px.x(), px.y());
            }
          }
          warped[s * n_fp + f] = value;
        }
      }
      std::vector<double> patch(n_patch);
      for (std::size_t i = 0; i < n_sel; ++i) {
        double sum = 0.0;
        int valid = 0;
        for (std::size_t s = 0; s < n_src; ++s) {
          bool ok = true;
          for (std::size_t t = 0; t < n_patch && ok; ++t) {
            patch[t] = warped[s * n_fp + patch_idx[i * n_patch + t]];
            ok = !std::isnan(patch[t]);
          }
          if (!ok) continue;
          sum += detail::patch_cost({ref_hat.data() + i * n_patch, n_patch}, ref_textured[i], patch);
          ++valid;
        }
        if (valid > 0) ec.costs[k * n_sel + i] = sum / valid;
      }
    });
    ec.pixels = std::move(pixels);
    vol.elements.push_back(std::move(ec));
  }
  return vol;
}

// ---------------------------------------------------------------------------
// Probabilities

struct ProbabilityOptions {
  double temperature = 0.1;
  bool smoothing = true;
  int smoothing_radius = 8;  // in selected-pixel grid steps
  bool unit_median = true;   // scale costs so the median finite cost is 1
};

struct ElementProbabilities {
  std::size_t element = 0;
  int stride = 1;
  std::vector<std::int32_t> pixels;
  std::vector<double> probs;         // pixel-major: probs[i * K + k]
  std::vector<std::uint8_t> valid;   // 0 when no hypothesis had a finite cost

  std::span<const double> row(std::size_t i, int k_count) const {
    return {probs.data() + i * k_count, static_cast<std::size_t>(k_count)};
  }
};

struct PixelProbVolume {
  SphericalCamera camera;
  int hypothesis_count = 0;
  std::vector<ElementProbabilities> elements;
};

namespace detail {

inline double median_finite_cost(const CostVolume& vol) {
  std::vector<double> finite;
  for (const auto& e : vol.elements)
    for (double c : e.costs)
      if (std::isfinite(c)) finite.push_back(c);
  if (finite.empty()) return 1.0;
  const auto mid = finite.begin() + (finite.size() - 1) / 2;
  std::nth_element(finite.begin(), mid, finite.end());
  return *mid;
}

// Mean over the (2r+1)^2 grid window of the finite costs of one element at
// one hypothesis. Separable: row sums with longitude wrap, then column sums.
inline void smooth_element(const ElementCosts& e, int k, int width, int radius, std::vector<double>& out) {
  const std::size_t n = e.pixels.size();
  const int s = e.stride;
  const int gw = (width + s - 1) / s;
  int row_min = std::numeric_limits<int>::max(), row_max = 0;
  for (auto p : e.pixels) {
    row_min = std::min(row_min, (p / width) / s);
    row_max = std::max(row_max, (p / width) / s);
  }
  const int gh = row_max - row_min + 1;
  std::vector<double> val(static_cast<std::size_t>(gw) * gh, 0.0), cnt(val.size(), 0.0);
  std::vector<std::int64_t> cell(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int gx = (e.pixels[i] % width) / s;
    const int gy = (e.pixels[i] / width) / s - row_min;
    cell[i] = static_cast<std::int64_t>(gy) * gw + gx;
    const double c = e.at(i, k);
    if (std::isfinite(c)) {
      val[cell[i]] = c;
      cnt[cell[i]] = 1.0;
    }
  }
  std::vector<double> hv(val.size()), hc(val.size());
  for (int y = 0; y < gh; ++y) {
    for (int x = 0; x < gw; ++x) {
      double sv = 0.0, sc = 0.0;
      for (int dx = -radius; dx <= radius; ++dx) {
        const std::size_t q = static_cast<std::size_t>(y) * gw + wrap_column(x + dx, gw);
        sv += val[q];
        sc += cnt[q];
      }
      hv[static_cast<std::size_t>(y) * gw + x] = sv;
      hc[static_cast<std::size_t>(y) * gw + x] = sc;
    }
  }
  out.assign(n, kSentinelCost);
  for (std::size_t i = 0; i < n; ++i) {
    const int gx = static_cast<int>(cell[i] % gw);
    const int gy = static_cast<int>(cell[i] / gw);
    double sv = 0.0, sc = 0.0;
    for (int dy = -radius; dy <= radius; ++dy) {
      const int y = gy + dy;
      if (y < 0 || y >= gh) continue;
      sv += hv[static_cast<std::size_t>(y) * gw + gx];
      sc += hc[static_cast<std::size_t>(y) * gw + gx];
    }
    if (sc > 0.0) out[i] = sv / sc;
  }
}

}  // namespace detail

// Per-pixel softmin over hypotheses: p_k ∝ exp(-cost_k / temperature), with
// costs optionally scaled to unit median and box-smoothed within each
// element first. Sentinel costs get zero probability; a pixel with only
// sentinel costs is marked invalid and given a uniform row.
inline PixelProbVolume cost_to_probability(const CostVolume& vol, const ProbabilityOptions& opt = {},
                                           int threads = 1) {
  if (!(opt.temperature > 0.0)) throw DomainError("softmin temperature must be positive");
  const int n_hyp = vol.hypothesis_count;
  double scale = 1.0;
  if (opt.unit_median) {
    const double med = detail::median_finite_cost(vol);
    if (med > 1e-12) scale = 1.0 / med;
  }
  PixelProbVolume out{vol.camera, n_hyp, std::vector<ElementProbabilities>(vol.elements.size())};
  parallel_for(vol.elements.size(), threads, [&](std::size_t ei) {
    const auto& e = vol.elements[ei];
    const std::size_t n = e.pixels.size();
    std::vector<double> cost(n * n_hyp);  // pixel-major
    if (opt.smoothing && opt.smoothing_radius > 0) {
      std::vector<double> sm;
      for (int k = 0; k < n_hyp; ++k) {
        detail::smooth_element(e, k, vol.camera.width, opt.smoothing_radius, sm);
        for (std::size_t i = 0; i < n; ++i) cost[i * n_hyp + k] = sm[i];
      }
    } else {
      for (int k = 0; k < n_hyp; ++k)
        for (std::size_t i = 0; i < n; ++i) cost[i * n_hyp + k] = e.at(i, k);
    }
    auto& pe = out.elements[ei];
    pe.element = e.element;
    pe.stride = e.stride;
    pe.pixels = e.pixels;
    pe.probs.assign(n * n_hyp, 1.0 / n_hyp);
    pe.valid.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* c = &cost[i * n_hyp];
      double c_min = kSentinelCost;
      for (int k = 0; k < n_hyp; ++k) c_min = std::min(c_min, c[k]);
      if (!std::isfinite(c_min)) continue;
      double* p = &pe.probs[i * n_hyp];
      double total = 0.0;
      for (int k = 0; k < n_hyp; ++k) {
        p[k] = std::isfinite(c[k]) ? std::exp(-(c[k] - c_min) * scale / opt.temperature) : 0.0;
        total += p[k];
      }
      for (int k = 0; k < n_hyp; ++k) p[k] /= total;
      pe.valid[i] = 1;
    }
  });
  return out;
}

// Confidence-weighted mean of an element's per-pixel distributions,
// renormalized to sum to one. Invalid pixels carry no weight.
inline std::vector<double> aggregate_element(const ElementProbabilities& e, int hypothesis_count,
                                             const Raster<double>& confidence) {
  if (e.pixels.empty()) throw DomainError("cannot aggregate an empty element region");
  std::vector<double> acc(hypothesis_count, 0.0);
  double weight = 0.0;
  for (std::size_t i = 0; i < e.pixels.size(); ++i) {
    if (!e.valid[i]) continue;
    const double c = confidence[e.pixels[i]];
    if (!(c >= 0.0)) throw DomainError("confidence weights must be non-negative");
    if (c == 0.0) continue;
    const auto row = e.row(i, hypothesis_count);
    for (int k = 0; k < hypothesis_count; ++k) acc[k] += c * row[k];
    weight += c;
  }
  if (!(weight > 0.0)) throw ConfidenceDegenerateError("element has zero total confidence");
  double total = 0.0;
  for (double a : acc) total += a;
  for (double& a : acc) a /= total;
  return acc;
}

// Expected depth under a normalized 1D distribution.
inline double regress_depth(std::span<const double> prob, const DepthHypotheses& hyp) {
  const auto d = hyp.values();
  if (prob.size() != d.size()) throw DomainError("distribution size does not match the hypotheses");
  double total = 0.0, depth = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (!(prob[k] >= 0.0)) throw DomainError("probabilities must be non-negative");
    total += prob[k];
    depth += prob[k] * d[k];
  }
  if (std::abs(total - 1.0) > 1e-6) throw DomainError("distribution is not normalized");
  return std::clamp(depth, hyp.d_min, hyp.d_max);
}

// Mean absolute per-element depth error.
inline double depth_loss(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size() || pred.empty()) throw DomainError("depth loss needs equal, non-empty inputs");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - gt[i]);
  return sum / static_cast<double>(pred.size());
}

// Combined objective: summed 2D layout losses plus summed per-element L1
// depth errors. Evaluation only.
inline double total_loss(std::span<const double> layout_losses, std::span<const double> pred,
                         std::span<const double> gt) {
  if (pred.size() != gt.size()) throw DomainError("depth loss needs equal-length inputs");
  double sum = 0.0;
  for (double l : layout_losses) sum += l;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - gt[i]);
  return sum;
}

// ---------------------------------------------------------------------------
// Per-view reconstruction

struct MvsOptions {
  MatchingOptions matching;
  ProbabilityOptions probability;
};

struct ElementEstimate {
  double depth = 0.0;
  double peak_probability = 0.0;
  std::vector<double> distribution;
  long pixels_used = 0;
  bool confidence_fallback = false;  // weights were all zero; used c = 1
  bool no_evidence = false;          // no pixel had a valid source view
};

struct ViewEstimate {
  std::vector<ElementEstimate> elements;
  Layout3D layout3d;

  std::vector<double> depths() const {
    std::vector<double> d;
    for (const auto& e : elements) d.push_back(e.depth);
    return d;
  }
};

inline ViewEstimate reconstruct_view(const ViewImage& ref, std::span<const ViewImage> sources,
                                     const Layout2D& layout, const DepthHypotheses& hyp,
                                     const ConfidenceMap& conf, const MvsOptions& opt = {},
                                     std::size_t view_id = 0) {
  if (!conf.combined.same_shape(layout.labels)) throw DomainError("confidence map does not match the layout");
  const CostVolume costs = matching_cost(ref, sources, layout, hyp, opt.matching);
  const PixelProbVolume probs = cost_to_probability(costs, opt.probability, opt.matching.threads);
  const Raster<double> ones(layout.labels.width(), layout.labels.height(), 1.0);
  ViewEstimate out;
  std::vector<double> peaks;
  for (const auto& pe : probs.elements) {
    ElementEstimate est;
    est.pixels_used = static_cast<long>(pe.pixels.size());
    try {
      est.distribution = aggregate_element(pe, probs.hypothesis_count, conf.combined);
    } catch (const ConfidenceDegenerateError&) {
      est.confidence_fallback = true;
      try {
        est.distribution = aggregate_element(pe, probs.hypothesis_count, ones);
      } catch (const ConfidenceDegenerateError&) {
        est.no_evidence = true;
        est.distribution.assign(probs.hypothesis_count, 1.0 / probs.hypothesis_count);
      }
    }
    est.depth = regress_depth(est.distribution, hyp);
    est.peak_probability = *std::max_element(est.distribution.begin(), est.distribution.end());
    peaks.push_back(est.peak_probability);
    out.elements.push_back(std::move(est));
  }
  out.layout3d = lift(layout, out.depths(), ref.pose, view_id, peaks);
  return out;
}

}  // namespace mvl
