#include <random>

#include <gtest/gtest.h>

#include <mvlayout/mvs.hpp>
#include <mvlayout/synth.hpp>

#include "support.hpp"

using namespace mvl;

namespace {

struct SmallScene {
  std::vector<synth::RenderedView> views;
  std::vector<ViewImage> images;
};

const SmallScene& cuboid_scene() {
  static const SmallScene scene = [] {
    auto spec = testing_support::load_scene("cuboid_scene.json");
    spec.camera = SphericalCamera(256, 128);
    SmallScene s;
    s.views = synth::make_scene(spec, 3, 0);
    for (const auto& v : s.views) s.images.push_back({to_gray(v.image), v.pose});
    return s;
  }();
  return scene;
}

// Straight-line reimplementation of the per-pixel plane-sweep cost.
double naive_cost(const ViewImage& ref, std::span<const ViewImage> sources, const SphericalCamera& cam,
                  const Vec3& o, double d, int u, int v, int r) {
  std::vector<double> rp;
  for (int dv = -r; dv <= r; ++dv)
    for (int du = -r; du <= r; ++du) {
      const int qu = ((u + du) % cam.width + cam.width) % cam.width;
      const int qv = std::clamp(v + dv, 0, cam.height - 1);
      rp.push_back(ref.image(qu, qv));
    }
  auto stats = [](const std::vector<double>& x) {
    double m = 0.0, s = 0.0;
    for (double a : x) m += a;
    m /= x.size();
    for (double a : x) s += (a - m) * (a - m);
    return std::pair{m, std::sqrt(s / x.size())};
  };
  const auto [mr, sr] = stats(rp);
  double sum = 0.0;
  int valid = 0;
  for (const auto& src : sources) {
    std::vector<double> sp;
    bool ok = true;
    for (int dv = -r; dv <= r && ok; ++dv)
      for (int du = -r; du <= r && ok; ++du) {
        const int qu = ((u + du) % cam.width + cam.width) % cam.width;
        const int qv = std::clamp(v + dv, 0, cam.height - 1);
        const Vec3 ray = pixel_to_ray(cam, {qu + 0.5, qv + 0.5});
        const auto t = intersect(Plane(o, d), ray);
        if (!t) {
          ok = false;
          break;
        }
        const Vec3 x = src.pose.to_camera(ref.pose.to_world(*t * ray));
        const Vec2 px = ray_to_pixel(cam, x);
        sp.push_back(sample_bilinear(src.image, px.x(), px.y()));
      }
    if (!ok) continue;
    const auto [ms, ss] = stats(sp);
    double c = 0.5;
    if (sr >= 1e-4 && ss >= 1e-4) {
      double dot = 0.0;
      for (std::size_t t = 0; t < rp.size(); ++t) dot += (rp[t] - mr) * (sp[t] - ms);
      c = std::max(0.0, (1.0 - dot / (rp.size() * sr * ss)) / 2.0);
    }
    sum += c;
    ++valid;
  }
  return valid ? sum / valid : kSentinelCost;
}

CostVolume random_volume(std::mt19937_64& rng, int w, int h, int k_count, double sentinel_rate) {
  CostVolume vol{SphericalCamera(w, h), k_count, {}};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int j = 0; j < 2; ++j) {
    ElementCosts e;
    e.element = j;
    for (int p = 0; p < w * h; ++p)
      if ((p / w < h / 2) == (j == 0)) e.pixels.push_back(p);
    for (std::size_t i = 0; i < e.pixels.size() * k_count; ++i)
      e.costs.push_back(u(rng) < sentinel_rate ? kSentinelCost : u(rng));
    vol.elements.push_back(std::move(e));
  }
  return vol;
}

}  // namespace

TEST(Hypotheses, ValuesAreStrictlyIncreasing) {
  for (auto spacing : {HypothesisSpacing::inverse, HypothesisSpacing::uniform}) {
    DepthHypotheses hyp{0.3, 12.0, 128, spacing};
    const auto d = hyp.values();
    ASSERT_EQ(d.size(), 128u);
    EXPECT_EQ(d.front(), 0.3);
    EXPECT_EQ(d.back(), 12.0);
    for (std::size_t k = 1; k < d.size(); ++k) EXPECT_GT(d[k], d[k - 1]);
  }
  const auto d = DepthHypotheses{}.values();
  const double step = 1.0 / d[1] - 1.0 / d[0];
  for (std::size_t k = 1; k < d.size(); ++k) EXPECT_NEAR(1.0 / d[k] - 1.0 / d[k - 1], step, 1e-9);
}

TEST(Hypotheses, RejectsBadPlans) {
  EXPECT_THROW((DepthHypotheses{0.0, 1.0, 8}.validate()), DomainError);
  EXPECT_THROW((DepthHypotheses{2.0, 1.0, 8}.validate()), DomainError);
  EXPECT_THROW((DepthHypotheses{0.5, 1.0, 1}.validate()), DomainError);
}

TEST(Hypotheses, LocalSpacingBracketsDepth) {
  const DepthHypotheses hyp;
  const auto d = hyp.values();
  EXPECT_DOUBLE_EQ(hyp.local_spacing(0.1), d[1] - d[0]);
  EXPECT_DOUBLE_EQ(hyp.local_spacing(50.0), d[127] - d[126]);
  EXPECT_DOUBLE_EQ(hyp.local_spacing(0.5 * (d[40] + d[41])), d[41] - d[40]);
}

TEST(PatchCost, IdenticalOppositeAndFlatPatches) {
  std::vector<double> a = {0.1, 0.5, 0.2, 0.9, 0.4, 0.3, 0.7, 0.6, 0.8};
  std::vector<double> hat(a.size());
  ASSERT_TRUE(detail::normalize_patch(a, hat));
  EXPECT_NEAR(detail::patch_cost(hat, true, a), 0.0, 1e-12);
  // Gain and bias do not matter.
  std::vector<double> b;
  for (double x : a) b.push_back(0.2 + 0.5 * x);
  EXPECT_NEAR(detail::patch_cost(hat, true, b), 0.0, 1e-12);
  std::vector<double> neg;
  for (double x : a) neg.push_back(1.0 - x);
  EXPECT_NEAR(detail::patch_cost(hat, true, neg), 1.0, 1e-12);
  const std::vector<double> flat(9, 0.4);
  EXPECT_EQ(detail::patch_cost(hat, true, flat), 0.5);
  std::vector<double> flat_hat(9);
  EXPECT_FALSE(detail::normalize_patch(flat, flat_hat));
  EXPECT_EQ(detail::patch_cost(flat_hat, false, a), 0.5);
}

TEST(MatchingCost, IdenticalSourceCostsNothing) {
  const auto& s = cuboid_scene();
  const auto& ref = s.images[0];
  const std::vector<ViewImage> src = {ref};
  const auto& layout = s.views[0].layout_gt;
  const DepthHypotheses hyp{0.5, 8.0, 16};
  const auto vol = matching_cost(ref, src, layout, hyp);
  long checked = 0;
  for (const auto& e : vol.elements) {
    for (std::size_t i = 0; i < e.pixels.size(); ++i) {
      for (int k = 0; k < hyp.count; ++k) {
        const double c = e.at(i, k);
        if (!std::isfinite(c) || c == 0.5) continue;  // no plane hit, or a flat patch
        ASSERT_NEAR(c, 0.0, 1e-9);
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 10000);
}

TEST(MatchingCost, MatchesNaiveReimplementation) {
  const auto& s = cuboid_scene();
  const auto& layout = s.views[0].layout_gt;
  const std::vector<ViewImage> src = {s.images[1], s.images[2]};
  const DepthHypotheses hyp{0.5, 8.0, 24};
  const auto vol = matching_cost(s.images[0], src, layout, hyp, {2, 1 << 30, 1});
  const auto d = hyp.values();
  std::mt19937_64 rng(41);
  int checked = 0;
  for (const auto& e : vol.elements) {
    ASSERT_EQ(e.stride, 1);
    std::uniform_int_distribution<std::size_t> pick(0, e.pixels.size() - 1);
    std::uniform_int_distribution<int> pick_k(0, hyp.count - 1);
    for (int trial = 0; trial < 60; ++trial) {
      const std::size_t i = pick(rng);
      const int k = pick_k(rng);
      const int u = e.pixels[i] % layout.camera.width, v = e.pixels[i] / layout.camera.width;
      const double expect =
          naive_cost(s.images[0], src, layout.camera, layout.elements[e.element].orientation, d[k], u, v, 2);
      if (std::isfinite(expect)) {
        ASSERT_NEAR(e.at(i, k), expect, 1e-9) << "element " << e.element << " pixel " << u << "," << v;
        ++checked;
      } else {
        ASSERT_EQ(e.at(i, k), kSentinelCost);
      }
    }
  }
  EXPECT_GT(checked, 200);
}

// Raw per-pixel argmin of a textured wall lands on the hypothesis nearest
// the true wall distance. The sweep is a 0.1 m grid holding every wall
// distance of the fixture, so "nearest" is never a near tie between two
// hypotheses.
TEST(MatchingCost, WallArgminFindsTrueDepth) {
  auto spec = testing_support::load_scene("cuboid_scene.json");
  const auto views = synth::make_scene(spec, 3, 0);
  const auto& cam = spec.camera;
  std::vector<ViewImage> img;
  for (const auto& v : views) img.push_back({to_gray(v.image), v.pose});
  const std::vector<ViewImage> src = {img[1], img[2]};
  const auto& layout = views[0].layout_gt;
  const DepthHypotheses hyp{0.5, 6.0, 56, HypothesisSpacing::uniform};
  const auto d = hyp.values();
  const auto vol = matching_cost(img[0], src, layout, hyp, {2, 1 << 30, 1});
  const int margin = 4;
  for (const auto& e : vol.elements) {
    if (layout.elements[e.element].kind != ElementKind::wall) continue;
    const double truth = views[0].gt_element_depths[e.element];
    int nearest = 0;
    for (int k = 1; k < hyp.count; ++k)
      if (std::abs(d[k] - truth) < std::abs(d[nearest] - truth)) nearest = k;
    ASSERT_NEAR(d[nearest], truth, 1e-9);
    long interior = 0, hits = 0;
    for (std::size_t i = 0; i < e.pixels.size(); ++i) {
      const int u = e.pixels[i] % cam.width, v = e.pixels[i] / cam.width;
      bool inside = v >= margin && v < cam.height - margin;
      for (int dv = -margin; dv <= margin && inside; ++dv)
        for (int du = -margin; du <= margin && inside; ++du)
          inside = layout.labels(wrap_column(u + du, cam.width), v + dv) == static_cast<int>(e.element);
      if (!inside || !std::isfinite(e.at(i, nearest))) continue;
      int best = 0;
      for (int k = 1; k < hyp.count; ++k)
        if (e.at(i, k) < e.at(i, best)) best = k;
      ++interior;
      hits += best == nearest;
    }
    ASSERT_GT(interior, 1000);
    EXPECT_GE(static_cast<double>(hits) / interior, 0.95) << "wall " << e.element << " " << hits << "/" << interior;
  }
}

TEST(MatchingCost, LargeRegionsAreSubsampledOnAGrid) {
  const auto& s = cuboid_scene();
  const auto& layout = s.views[0].layout_gt;
  for (std::size_t j = 0; j < layout.elements.size(); ++j) {
    const auto [all, s1] = detail::select_pixels(layout, j, 0);
    EXPECT_EQ(s1, 1);
    EXPECT_EQ(static_cast<long>(all.size()), layout.elements[j].pixel_count);
    const long cap = std::max(1L, layout.elements[j].pixel_count / 5);
    const auto [sub, stride] = detail::select_pixels(layout, j, cap);
    EXPECT_GE(stride, 2);
    EXPECT_FALSE(sub.empty());
    for (auto p : sub) {
      EXPECT_EQ((p % layout.camera.width) % stride, 0);
      EXPECT_EQ((p / layout.camera.width) % stride, 0);
      EXPECT_EQ(layout.labels[p], static_cast<int>(j));
    }
    EXPECT_EQ(detail::select_pixels(layout, j, cap).first, sub);
  }
}

TEST(MatchingCost, RejectsBadInputs) {
  const auto& s = cuboid_scene();
  const auto& layout = s.views[0].layout_gt;
  EXPECT_THROW(matching_cost(s.images[0], {}, layout, {}), DomainError);
  ViewImage small{GrayImage(64, 32), Pose{}};
  const std::vector<ViewImage> bad = {small};
  EXPECT_THROW(matching_cost(s.images[0], bad, layout, {}), DomainError);
}

TEST(Softmin, DeltaWhenOnlyOneHypothesisIsFinite) {
  CostVolume vol{SphericalCamera(8, 4), 5, {}};
  ElementCosts e;
  e.pixels = {0, 1, 2};
  e.costs.assign(15, kSentinelCost);
  for (std::size_t i = 0; i < 3; ++i) e.costs[3 * 3 + i] = 0.0;
  vol.elements.push_back(e);
  const auto p = cost_to_probability(vol, {0.1, false, 0, true});
  for (std::size_t i = 0; i < 3; ++i) {
    for (int k = 0; k < 5; ++k) EXPECT_EQ(p.elements[0].row(i, 5)[k], k == 3 ? 1.0 : 0.0);
    EXPECT_TRUE(p.elements[0].valid[i]);
  }
}

TEST(Softmin, EqualCostsGiveUniformRows) {
  CostVolume vol{SphericalCamera(8, 4), 7, {}};
  ElementCosts e;
  e.pixels = {3, 4};
  e.costs.assign(14, 0.42);
  vol.elements.push_back(e);
  for (bool smooth : {false, true}) {
    const auto p = cost_to_probability(vol, {0.1, smooth, 2, true});
    for (std::size_t i = 0; i < 2; ++i)
      for (int k = 0; k < 7; ++k) EXPECT_NEAR(p.elements[0].row(i, 7)[k], 1.0 / 7.0, 1e-15);
  }
}

TEST(Softmin, AllSentinelPixelIsInvalid) {
  CostVolume vol{SphericalCamera(8, 4), 3, {}};
  ElementCosts e;
  e.pixels = {0};
  e.costs.assign(3, kSentinelCost);
  vol.elements.push_back(e);
  const auto p = cost_to_probability(vol);
  EXPECT_FALSE(p.elements[0].valid[0]);
  EXPECT_THROW(cost_to_probability(vol, {0.0}), DomainError);
}

TEST(Softmin, RowsAreNormalizedAndMatchTheFormula) {
  std::mt19937_64 rng(42);
  const auto vol = random_volume(rng, 16, 8, 12, 0.1);
  const double med = detail::median_finite_cost(vol);
  const auto p = cost_to_probability(vol, {0.1, false, 0, true});
  for (std::size_t j = 0; j < vol.elements.size(); ++j) {
    const auto& e = vol.elements[j];
    for (std::size_t i = 0; i < e.pixels.size(); ++i) {
      const auto row = p.elements[j].row(i, 12);
      double sum = 0.0, z = 0.0;
      for (int k = 0; k < 12; ++k) {
        sum += row[k];
        z += std::isfinite(e.at(i, k)) ? std::exp(-e.at(i, k) / med / 0.1) : 0.0;
      }
      EXPECT_NEAR(sum, 1.0, 1e-6);
      if (z == 0.0) continue;
      for (int k = 0; k < 12; ++k) {
        const double expect = std::isfinite(e.at(i, k)) ? std::exp(-e.at(i, k) / med / 0.1) / z : 0.0;
        EXPECT_NEAR(row[k], expect, 1e-9);
      }
    }
  }
}

TEST(Softmin, SmoothingMatchesNaiveWindowMean) {
  std::mt19937_64 rng(43);
  const auto vol = random_volume(rng, 16, 8, 4, 0.2);
  const int r = 2;
  for (const auto& e : vol.elements) {
    for (int k = 0; k < 4; ++k) {
      std::vector<double> out;
      detail::smooth_element(e, k, 16, r, out);
      for (std::size_t i = 0; i < e.pixels.size(); ++i) {
        const int ui = e.pixels[i] % 16, vi = e.pixels[i] / 16;
        double sum = 0.0;
        int n = 0;
        for (std::size_t q = 0; q < e.pixels.size(); ++q) {
          const int uq = e.pixels[q] % 16, vq = e.pixels[q] / 16;
          int du = std::abs(uq - ui);
          du = std::min(du, 16 - du);
          if (du > r || std::abs(vq - vi) > r || !std::isfinite(e.at(q, k))) continue;
          sum += e.at(q, k);
          ++n;
        }
        if (n == 0) EXPECT_EQ(out[i], kSentinelCost);
        else EXPECT_NEAR(out[i], sum / n, 1e-12);
      }
    }
  }
}

TEST(Softmin, ThreadCountDoesNotChangeResults) {
  std::mt19937_64 rng(44);
  const auto vol = random_volume(rng, 32, 16, 9, 0.05);
  const auto a = cost_to_probability(vol, {}, 1);
  const auto b = cost_to_probability(vol, {}, 4);
  for (std::size_t j = 0; j < a.elements.size(); ++j) EXPECT_EQ(a.elements[j].probs, b.elements[j].probs);
}

TEST(Aggregate, MatchesNaiveLoop) {
  std::mt19937_64 rng(45);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int k_count = 4 + trial % 13;
    ElementProbabilities e;
    Raster<double> conf(12, 6);
    for (std::size_t i = 0; i < conf.size(); ++i) conf[i] = u(rng) < 0.2 ? 0.0 : u(rng);
    for (int p = 0; p < 72; ++p) {
      if (u(rng) < 0.3) continue;
      e.pixels.push_back(p);
      e.valid.push_back(u(rng) < 0.9);
      double s = 0.0;
      std::vector<double> row(k_count);
      for (auto& x : row) s += (x = u(rng));
      for (auto x : row) e.probs.push_back(x / s);
    }
    std::vector<double> expect(k_count, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < e.pixels.size(); ++i) {
      if (!e.valid[i]) continue;
      for (int k = 0; k < k_count; ++k) expect[k] += conf[e.pixels[i]] * e.probs[i * k_count + k];
    }
    for (double x : expect) total += x;
    if (total == 0.0) continue;
    const auto got = aggregate_element(e, k_count, conf);
    double sum = 0.0;
    for (int k = 0; k < k_count; ++k) {
      EXPECT_NEAR(got[k], expect[k] / total, 1e-9);
      EXPECT_GE(got[k], 0.0);
      sum += got[k];
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(Aggregate, CommonConfidenceScaleChangesNothing) {
  std::mt19937_64 rng(46);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ElementProbabilities e;
  Raster<double> conf(8, 4);
  for (std::size_t i = 0; i < conf.size(); ++i) conf[i] = 0.01 + u(rng) / 2;
  for (int p = 0; p < 32; ++p) {
    e.pixels.push_back(p);
    e.valid.push_back(1);
    double s = 0.0;
    std::vector<double> row(10);
    for (auto& x : row) s += (x = u(rng));
    for (auto x : row) e.probs.push_back(x / s);
  }
  const auto base = aggregate_element(e, 10, conf);
  for (double f : {0.25, 2.0, 8.0}) {
    auto scaled = conf;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= f;
    EXPECT_EQ(aggregate_element(e, 10, scaled), base);
  }
  for (double f : {0.3, 1.7}) {
    auto scaled = conf;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= f;
    const auto got = aggregate_element(e, 10, scaled);
    for (int k = 0; k < 10; ++k) EXPECT_NEAR(got[k], base[k], 1e-15);
  }
}

TEST(Aggregate, DegenerateWeightsAreReported) {
  ElementProbabilities e;
  e.pixels = {0, 1};
  e.valid = {1, 1};
  e.probs = {0.5, 0.5, 0.2, 0.8};
  EXPECT_THROW(aggregate_element(e, 2, Raster<double>(2, 1, 0.0)), ConfidenceDegenerateError);
  e.valid = {0, 0};
  EXPECT_THROW(aggregate_element(e, 2, Raster<double>(2, 1, 1.0)), ConfidenceDegenerateError);
  EXPECT_THROW(aggregate_element(ElementProbabilities{}, 2, Raster<double>(2, 1, 1.0)), DomainError);
}

TEST(Regress, DeltaReturnsTheHypothesisExactly) {
  const DepthHypotheses hyp;
  const auto d = hyp.values();
  for (int k = 0; k < hyp.count; k += 7) {
    std::vector<double> p(hyp.count, 0.0);
    p[k] = 1.0;
    EXPECT_EQ(regress_depth(p, hyp), d[k]);
  }
}

TEST(Regress, MatchesNaiveExpectation) {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const DepthHypotheses hyp{0.2 + u(rng), 3.0 + 10.0 * u(rng), 2 + trial,
                              trial % 2 ? HypothesisSpacing::inverse : HypothesisSpacing::uniform};
    const auto d = hyp.values();
    std::vector<double> p(hyp.count);
    double s = 0.0;
    for (auto& x : p) s += (x = u(rng));
    double expect = 0.0;
    for (int k = 0; k < hyp.count; ++k) expect += (p[k] /= s) * d[k];
    const double got = regress_depth(p, hyp);
    EXPECT_NEAR(got, expect, 1e-9);
    EXPECT_GE(got, hyp.d_min);
    EXPECT_LE(got, hyp.d_max);
  }
}

TEST(Regress, RejectsBadDistributions) {
  const DepthHypotheses hyp{0.5, 4.0, 4};
  EXPECT_THROW(regress_depth(std::vector<double>{0.5, 0.5}, hyp), DomainError);
  EXPECT_THROW(regress_depth(std::vector<double>{0.5, 0.5, 0.5, 0.5}, hyp), DomainError);
  EXPECT_THROW(regress_depth(std::vector<double>{1.5, -0.5, 0.0, 0.0}, hyp), DomainError);
}

TEST(DepthLoss, MeanAbsoluteError) {
  const std::vector<double> a = {1.0, 2.0, 3.0}, b = {1.5, 2.0, 2.0};
  EXPECT_DOUBLE_EQ(depth_loss(a, b), 0.5);
  EXPECT_EQ(depth_loss(a, a), 0.0);
  EXPECT_THROW(depth_loss(a, std::vector<double>{1.0}), DomainError);
  const std::vector<double> layout = {0.25, 0.75};
  EXPECT_DOUBLE_EQ(total_loss(layout, a, b), 1.0 + 1.5);
}

// A floor element covering the whole panorama regresses to the camera height.
TEST(ReconstructView, WholeImageFloorGivesCameraHeight) {
  synth::RoomSpec room = testing_support::box_room(60, 60, 40);
  room.wall_textures = {{synth::TextureKind::constant, 0.5, 0.0, 1.0, 0}};
  room.ceiling_texture = {synth::TextureKind::constant, 0.7, 0.0, 1.0, 0};
  const synth::RoomGeometry geom(room);
  const SphericalCamera cam(256, 128);
  const double h = 1.45;
  const auto ref = synth::render(geom, Pose::upright({30.0, h, 30.0}, 0.3), cam);
  const auto src = synth::render(geom, Pose::upright({30.6, h, 30.4}, 1.2), cam);
  LayoutSpec spec;
  for (const auto& [a, b] : {std::pair{-1.0, -1.0}, {1.0, -1.0}, {1.0, 1.0}, {-1.0, 1.0}}) {
    const Vec3 x(a, -h, b);
    spec.corners.push_back({ray_to_pixel(cam, x), x.norm()});
  }
  spec.elements.push_back({ElementKind::floor, {0, 1, 2, 3}});
  const auto layout = build_layout(spec, cam);
  ASSERT_EQ(layout.elements[0].pixel_count, cam.pixel_count());
  const std::vector<ViewImage> sources = {{to_gray(src.image), src.pose}};
  const DepthHypotheses hyp;
  const auto est = reconstruct_view({to_gray(ref.image), ref.pose}, sources, layout, hyp,
                                    ConfidenceMap::ones(cam.width, cam.height));
  EXPECT_NEAR(est.elements[0].depth, h, 1.5 * hyp.local_spacing(h));
  double sum = 0.0;
  for (double p : est.elements[0].distribution) sum += p;
  EXPECT_NEAR(sum, 1.0, 1e-6);
  EXPECT_NEAR(est.layout3d.elements[0].plane.offset, 0.0, 1.5 * hyp.local_spacing(h));
}

TEST(ReconstructView, ZeroConfidenceFallsBackToUniformWeights) {
  const auto& s = cuboid_scene();
  const auto& layout = s.views[0].layout_gt;
  const std::vector<ViewImage> src = {s.images[1]};
  ConfidenceMap conf = ConfidenceMap::ones(layout.camera.width, layout.camera.height);
  for (std::size_t i = 0; i < conf.combined.size(); ++i)
    if (layout.labels[i] == 2) conf.combined[i] = 0.0;
  const DepthHypotheses hyp{0.5, 8.0, 32};
  MvsOptions opt;
  opt.matching.max_element_pixels = 2000;
  const auto est = reconstruct_view(s.images[0], src, layout, hyp, conf, opt, 7);
  ASSERT_EQ(est.elements.size(), layout.elements.size());
  EXPECT_TRUE(est.elements[2].confidence_fallback);
  EXPECT_FALSE(est.elements[3].confidence_fallback);
  EXPECT_EQ(est.layout3d.view_id, 7u);
  for (const auto& e : est.elements) {
    double sum = 0.0;
    for (double p : e.distribution) sum += p;
    EXPECT_NEAR(sum, 1.0, 1e-6);
    EXPECT_GE(e.depth, hyp.d_min);
    EXPECT_LE(e.depth, hyp.d_max);
  }
}
