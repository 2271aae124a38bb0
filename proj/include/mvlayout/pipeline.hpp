#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "confidence.hpp"
#include "errors.hpp"
#include "fusion.hpp"
#include "geometry.hpp"
#include "image_io.hpp"
#include "layout2d.hpp"
#include "layout3d.hpp"
#include "metrics.hpp"
#include "mvs.hpp"
#include "parallel.hpp"
#include "synth.hpp"

namespace mvl::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Logging: one JSON object per line on stderr, so stdout and output files stay
// free of timing noise.

inline std::function<void(const json&)>& log_sink() {
  static std::function<void(const json&)> sink = [](const json& j) { std::cerr << j.dump() << '\n'; };
  return sink;
}

inline void log_event(const json& j) {
  static std::mutex mu;
  std::lock_guard lock(mu);
  log_sink()(j);
}

inline void warn(const std::string& msg) { log_event({{"level", "warning"}, {"message", msg}}); }

class StageTimer {
 public:
  explicit StageTimer(std::string stage, json extra = json::object())
      : stage_(std::move(stage)), extra_(std::move(extra)), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json j = {{"level", "info"}, {"stage", stage_}, {"seconds", s}};
    j.update(extra_);
    log_event(j);
  }
  StageTimer(const StageTimer&) = delete;
  StageTimer& operator=(const StageTimer&) = delete;

 private:
  std::string stage_;
  json extra_;
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Configuration

enum class ConfidenceMode { none, semantic, full };

inline std::string_view to_string(ConfidenceMode m) {
  switch (m) {
    case ConfidenceMode::none: return "none";
    case ConfidenceMode::semantic: return "semantic";
    case ConfidenceMode::full: return "full";
  }
  return "none";
}

inline ConfidenceMode parse_confidence_mode(std::string_view s) {
  if (s == "none") return ConfidenceMode::none;
  if (s == "semantic") return ConfidenceMode::semantic;
  if (s == "full") return ConfidenceMode::full;
  throw DomainError("confidence mode must be none, semantic or full");
}

struct RunConfig {
  DepthHypotheses hypotheses;
  double temperature = 0.1;
  int patch_size = 5;
  bool smoothing = true;
  int smoothing_radius = ProbabilityOptions{}.smoothing_radius;
  double fusion_threshold = 0.1;
  ConfidenceMode confidence = ConfidenceMode::semantic;
  int threads = 1;
  std::uint64_t seed = 0;
  std::size_t correspondences_per_pair = 1000;

  void validate() const {
    hypotheses.validate();
    if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
    if (patch_size < 1 || patch_size % 2 == 0) throw DomainError("patch size must be a positive odd number");
    if (smoothing_radius < 0) throw DomainError("smoothing radius must be non-negative");
    if (!(fusion_threshold >= 0.0)) throw DomainError("fusion threshold must be non-negative");
    if (threads < 1) throw DomainError("thread count must be at least 1");
  }

  MvsOptions mvs_options(int inner_threads) const {
    MvsOptions o;
    o.matching.patch_radius = patch_size / 2;
    o.matching.threads = inner_threads;
    o.probability.temperature = temperature;
    o.probability.smoothing = smoothing;
    o.probability.smoothing_radius = smoothing_radius;
    return o;
  }
};

// Values given on the command line. Unset fields fall through to the
// manifest, then to RunConfig defaults.
struct ConfigOverrides {
  std::optional<int> hyp_count;
  std::optional<double> hyp_min, hyp_max;
  std::optional<double> temperature;
  std::optional<int> patch_size;
  std::optional<bool> smoothing;
  std::optional<double> fusion_threshold;
  std::optional<ConfidenceMode> confidence;
  std::optional<int> threads;
  std::optional<std::uint64_t> seed;
};

inline json to_json(const RunConfig& c) {
  return {{"hypotheses",
           {{"count", c.hypotheses.count},
            {"min", c.hypotheses.d_min},
            {"max", c.hypotheses.d_max},
            {"spacing", c.hypotheses.spacing == HypothesisSpacing::inverse ? "inverse" : "uniform"}}},
          {"temperature", c.temperature},
          {"patch_size", c.patch_size},
          {"smoothing", c.smoothing},
          {"smoothing_radius", c.smoothing_radius},
          {"fusion_threshold", c.fusion_threshold},
          {"confidence", to_string(c.confidence)},
          {"seed", c.seed},
          {"correspondences_per_pair", c.correspondences_per_pair}};
}

// Reads the optional tuning block of a manifest ("hypotheses", "temperature", ...).
inline void apply_manifest(RunConfig& c, const json& m) {
  if (m.contains("hypotheses")) {
    const auto& h = m.at("hypotheses");
    c.hypotheses.count = h.value("count", c.hypotheses.count);
    c.hypotheses.d_min = h.value("min", c.hypotheses.d_min);
    c.hypotheses.d_max = h.value("max", c.hypotheses.d_max);
    if (h.contains("spacing")) {
      const auto s = h.at("spacing").get<std::string>();
      if (s == "inverse") c.hypotheses.spacing = HypothesisSpacing::inverse;
      else if (s == "uniform") c.hypotheses.spacing = HypothesisSpacing::uniform;
      else throw DomainError("hypothesis spacing must be inverse or uniform");
    }
  }
  c.temperature = m.value("temperature", c.temperature);
  c.patch_size = m.value("patch_size", c.patch_size);
  c.smoothing = m.value("smoothing", c.smoothing);
  c.smoothing_radius = m.value("smoothing_radius", c.smoothing_radius);
  c.fusion_threshold = m.value("fusion_threshold", c.fusion_threshold);
  if (m.contains("confidence")) c.confidence = parse_confidence_mode(m.at("confidence").get<std::string>());
  c.seed = m.value("seed", c.seed);
  c.correspondences_per_pair = m.value("correspondences_per_pair", c.correspondences_per_pair);
}

inline void apply_overrides(RunConfig& c, const ConfigOverrides& o) {
  if (o.hyp_count) c.hypotheses.count = *o.hyp_count;
  if (o.hyp_min) c.hypotheses.d_min = *o.hyp_min;
  if (o.hyp_max) c.hypotheses.d_max = *o.hyp_max;
  if (o.temperature) c.temperature = *o.temperature;
  if (o.patch_size) c.patch_size = *o.patch_size;
  if (o.smoothing) c.smoothing = *o.smoothing;
  if (o.fusion_threshold) c.fusion_threshold = *o.fusion_threshold;
  if (o.confidence) c.confidence = *o.confidence;
  if (o.threads) c.threads = *o.threads;
  if (o.seed) c.seed = *o.seed;
}

// ---------------------------------------------------------------------------
// Scene manifest

struct ViewEntry {
  std::size_t id = 0;
  std::size_t group = 0;  // views of one group serve as each other's sources
  fs::path image;
  Pose pose;
  fs::path layout;
  std::optional<fs::path> semantic, attention, gt_depth;
  std::optional<double> gt_camera_height;
  std::vector<double> gt_element_depths;
};

struct Manifest {
  fs::path root;  // directory holding the manifest; entry paths are relative to it
  SphericalCamera camera{512, 256};
  std::optional<fs::path> confidence_table;
  json tuning = json::object();
  std::vector<ViewEntry> views;
};

namespace detail {

inline fs::path resolve(const fs::path& root, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : root / path;
}

inline void require_file(const fs::path& p) {
  if (!fs::is_regular_file(p)) throw IoError("missing file: " + p.string());
}

inline json parse_json_file(const fs::path& p) {
  require_file(p);
  try {
    return json::parse(io::read_text(p));
  } catch (const json::exception& e) {
    throw IoError("cannot parse " + p.string() + ": " + e.what());
  }
}

}  // namespace detail

inline Manifest load_manifest(const fs::path& path) {
  const json j = detail::parse_json_file(path);
  Manifest m;
  m.root = path.parent_path();
  try {
    if (j.contains("camera")) m.camera = SphericalCamera(j.at("camera").at("width"), j.at("camera").at("height"));
    if (j.contains("confidence_table"))
      m.confidence_table = detail::resolve(m.root, j.at("confidence_table").get<std::string>());
    for (const char* key : {"hypotheses", "temperature", "patch_size", "smoothing", "smoothing_radius",
                            "fusion_threshold", "confidence", "seed", "correspondences_per_pair"})
      if (j.contains(key)) m.tuning[key] = j.at(key);
    for (const auto& v : j.at("views")) {
      ViewEntry e;
      e.id = v.value("id", m.views.size());
      e.group = v.value("group", std::size_t{0});
      e.image = detail::resolve(m.root, v.at("image").get<std::string>());
      e.pose = v.at("pose").get<Pose>();
      e.layout = detail::resolve(m.root, v.at("layout").get<std::string>());
      if (v.contains("semantic")) e.semantic = detail::resolve(m.root, v.at("semantic").get<std::string>());
      if (v.contains("attention")) e.attention = detail::resolve(m.root, v.at("attention").get<std::string>());
      if (v.contains("gt_depth")) e.gt_depth = detail::resolve(m.root, v.at("gt_depth").get<std::string>());
      if (v.contains("gt_camera_height")) e.gt_camera_height = v.at("gt_camera_height").get<double>();
      if (v.contains("gt_element_depths")) e.gt_element_depths = v.at("gt_element_depths").get<std::vector<double>>();
      m.views.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  if (m.views.empty()) throw DomainError("manifest lists no views");
  for (const auto& v : m.views) {
    detail::require_file(v.image);
    detail::require_file(v.layout);
    for (const auto& p : {v.semantic, v.attention, v.gt_depth})
      if (p) detail::require_file(*p);
  }
  if (m.confidence_table) detail::require_file(*m.confidence_table);
  return m;
}

// Keeps only the listed view ids, in manifest order.
inline void select_views(Manifest& m, const std::vector<std::size_t>& ids) {
  if (ids.empty()) return;
  std::vector<ViewEntry> kept;
  for (const auto& v : m.views)
    if (std::find(ids.begin(), ids.end(), v.id) != ids.end()) kept.push_back(v);
  for (auto id : ids)
    if (std::none_of(kept.begin(), kept.end(), [&](const auto& v) { return v.id == id; }))
      throw DomainError("manifest has no view with id " + std::to_string(id));
  m.views = std::move(kept);
}

inline Layout2D load_layout(const ViewEntry& v, const SphericalCamera& cam) {
  return build_layout(detail::parse_json_file(v.layout).get<LayoutSpec>(), cam);
}

// ---------------------------------------------------------------------------
// synth

inline std::string view_dir(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "view_%03zu", i);
  return buf;
}

inline json to_json(const SemanticTable& t) {
  json j;
  mvl::to_json(j, t);
  return j;
}

inline std::string pretty(const json& j) { return j.dump(2) + "\n"; }

// Writes a rendered scene and its manifest. Ground-truth 3D layouts go to
// layouts/, the same place reconstruct writes its predictions, so the scene
// directory doubles as a perfect prediction for eval.
inline Manifest write_synth_scene(const synth::SceneSpec& spec, int n_views, std::uint64_t seed,
                                  const fs::path& out, int threads = 1) {
  if (n_views < 1) throw DomainError("n_views must be at least 1");
  std::vector<synth::RenderedView> views;
  {
    StageTimer t("render", {{"views", n_views}});
    views = synth::make_scene(spec, n_views, seed, threads);
  }
  fs::create_directories(out / "layouts");
  io::write_text(out / "confidence.json", pretty(to_json(SemanticTable::layout_default())));
  json mv = json::array();
  std::vector<Layout3D> gt3d;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    const fs::path dir = out / view_dir(i);
    fs::create_directories(dir);
    io::write_png(dir / "pano.png", v.image);
    io::write_png(dir / "semantic.png", v.semantic_gt);
    json layout;
    to_json(layout, v.layout_spec);
    io::write_text(dir / "layout.json", pretty(layout));
    Raster<float> depth(v.depth_gt.width(), v.depth_gt.height());
    for (std::size_t p = 0; p < depth.size(); ++p) depth[p] = static_cast<float>(v.depth_gt[p]);
    io::write_float_raster(dir / "depth.mvlf", depth);
    json pose;
    to_json(pose, v.pose);
    mv.push_back({{"id", i},
                  {"group", v.room},
                  {"image", view_dir(i) + "/pano.png"},
                  {"pose", pose},
                  {"layout", view_dir(i) + "/layout.json"},
                  {"semantic", view_dir(i) + "/semantic.png"},
                  {"gt_depth", view_dir(i) + "/depth.mvlf"},
                  {"gt_camera_height", v.camera_height},
                  {"gt_element_depths", v.gt_element_depths}});
    auto l3 = lift(v.layout_gt, v.gt_element_depths, v.pose, i);
    io::write_text(out / "layouts" / (view_dir(i) + ".json"), pretty(mvl::to_json(l3)));
    gt3d.push_back(std::move(l3));
  }
  const json manifest = {{"camera", {{"width", spec.camera.width}, {"height", spec.camera.height}}},
                         {"confidence_table", "confidence.json"},
                         {"views", mv}};
  io::write_text(out / "manifest.json", pretty(manifest));
  const SceneLayout fused = fuse(gt3d);
  io::write_text(out / "scene.json",
                 pretty({{"camera", {{"width", spec.camera.width}, {"height", spec.camera.height}}},
                         {"fused", mvl::to_json(fused)}}));
  return load_manifest(out / "manifest.json");
}

// ---------------------------------------------------------------------------
// Layout3D JSON round trip (per-view output files)

inline Layout3D layout3d_from_json(const json& j) {
  Layout3D l;
  l.view_id = j.at("view_id").get<std::size_t>();
  l.pose = j.at("pose").get<Pose>();
  for (const auto& e : j.at("elements")) {
    Element3D el;
    el.id = e.at("id").get<std::size_t>();
    el.kind = parse_kind(e.at("kind").get<std::string>());
    el.orientation = synth::vec3_from_json(e.at("orientation"));
    el.depth = e.at("depth").get<double>();
    el.plane = {synth::vec3_from_json(e.at("normal")), e.at("offset").get<double>()};
    el.peak_probability = e.at("peak_probability").get<double>();
    el.pixel_count = e.at("pixel_count").get<long>();
    for (const auto& p : e.at("polygon")) el.polygon.push_back(synth::vec3_from_json(p));
    l.elements.push_back(std::move(el));
  }
  return l;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {

// Ground-truth element depths: listed in the manifest, or the median of the
// ground-truth depth raster over each region.
inline std::vector<double> gt_element_depths(const ViewEntry& v, const Layout2D& layout) {
  if (!v.gt_element_depths.empty()) {
    if (v.gt_element_depths.size() != layout.elements.size())
      throw DomainError("view " + std::to_string(v.id) + ": gt_element_depths does not match the layout");
    return v.gt_element_depths;
  }
  if (!v.gt_depth) throw DomainError("view " + std::to_string(v.id) + " has no ground-truth depth");
  const auto r = io::read_float_raster(*v.gt_depth);
  if (r.width() != layout.labels.width() || r.height() != layout.labels.height())
    throw DomainError("ground-truth depth raster of view " + std::to_string(v.id) + " has the wrong size");
  std::vector<std::vector<double>> per(layout.elements.size());
  for (std::size_t i = 0; i < r.size(); ++i) per[layout.labels[i]].push_back(r[i]);
  std::vector<double> out;
  for (auto& p : per) {
    if (p.empty()) throw DomainError("empty layout region");
    const auto mid = p.begin() + (p.size() - 1) / 2;
    std::nth_element(p.begin(), mid, p.end());
    out.push_back(*mid);
  }
  return out;
}

inline Raster<double> gt_depth_raster(const ViewEntry& v, const Layout2D& layout) {
  if (v.gt_element_depths.empty() && v.gt_depth) {
    const auto r = io::read_float_raster(*v.gt_depth);
    if (r.width() != layout.labels.width() || r.height() != layout.labels.height())
      throw DomainError("ground-truth depth raster of view " + std::to_string(v.id) + " has the wrong size");
    Raster<double> d(r.width(), r.height());
    for (std::size_t i = 0; i < r.size(); ++i) d[i] = r[i];
    return d;
  }
  return paint_depth(layout, gt_element_depths(v, layout));
}

inline std::uint64_t pair_seed(std::uint64_t seed, std::size_t a, std::size_t b) {
  return synth::detail::splitmix64(seed ^ synth::detail::splitmix64((a << 32) ^ b));
}

}  // namespace detail

struct EvalProducts {
  EvalReport report;
  std::vector<Raster<double>> pred_depth;
  std::vector<Raster<double>> gt_depth;
};

// Scores predicted per-view layouts (same order as the manifest views)
// against the manifest's ground truth.
inline EvalProducts evaluate(const Manifest& m, const std::vector<Layout2D>& layouts,
                             const std::vector<Layout3D>& pred, const FusionOptions& fusion,
                             const RunConfig& cfg) {
  if (pred.size() != m.views.size() || layouts.size() != m.views.size())
    throw DomainError("prediction and ground truth list different numbers of views");
  EvalProducts out;
  std::vector<Raster<std::uint8_t>> masks;
  std::vector<LiftableView> gt_views, pred_views;
  for (std::size_t i = 0; i < m.views.size(); ++i) {
    const auto& v = m.views[i];
    const auto& layout = layouts[i];
    if (pred[i].elements.size() != layout.elements.size())
      throw DomainError("view " + std::to_string(v.id) + ": predicted element count does not match the layout");
    std::vector<double> depths;
    for (const auto& e : pred[i].elements) depths.push_back(e.depth);
    out.pred_depth.push_back(paint_depth(layout, depths));
    out.gt_depth.push_back(detail::gt_depth_raster(v, layout));
    masks.push_back(v.semantic ? layout_structure_mask(io::read_png_gray(*v.semantic))
                               : Raster<std::uint8_t>(m.camera.width, m.camera.height, 1));
    if (!masks.back().same_shape(out.gt_depth.back())) throw DomainError("semantic map has the wrong size");
    ViewReport vr;
    vr.view_id = v.id;
    vr.depth_rmse = depth_rmse(out.pred_depth.back(), out.gt_depth.back());
    vr.depth_rmse_layout = depth_rmse(out.pred_depth.back(), out.gt_depth.back(), masks.back());
    vr.pred_height = camera_height(pred[i]);
    vr.gt_height = v.gt_camera_height ? *v.gt_camera_height : v.pose.center().y();
    vr.scale_error = scale_error(vr.pred_height, vr.gt_height);
    out.report.views.push_back(vr);
    gt_views.push_back({m.camera, layout.labels, lift(layout, detail::gt_element_depths(v, layout), v.pose, v.id)});
    pred_views.push_back({m.camera, layout.labels, pred[i]});
  }
  pool_depth_errors(out.report, out.pred_depth, out.gt_depth, masks);
  for (const auto& v : out.report.views) {
    out.report.scale_error += v.scale_error / static_cast<double>(out.report.views.size());
    out.report.max_scale_error = std::max(out.report.max_scale_error, v.scale_error);
  }

  std::vector<ViewPair> pairs;
  for (std::size_t a = 0; a < m.views.size(); ++a)
    for (std::size_t b = a + 1; b < m.views.size(); ++b) {
      if (m.views[a].group != m.views[b].group) continue;
      auto c = generate_correspondences(gt_views[a], gt_views[b], cfg.correspondences_per_pair,
                                        detail::pair_seed(cfg.seed, m.views[a].id, m.views[b].id));
      if (!c.empty()) pairs.push_back({a, b, std::move(c)});
    }
  if (!pairs.empty()) {
    const auto before = coherency(pred_views, pairs);
    const auto fused = fused_views(fuse(pred, fusion));
    for (std::size_t i = 0; i < pred_views.size(); ++i) pred_views[i].layout = fused[i];
    const auto after = coherency(pred_views, pairs);
    out.report.coherency_per_view = before.mean;
    out.report.coherency = after.mean;
    out.report.correspondences = after.used;
    out.report.excluded_correspondences = after.excluded;
  } else {
    warn("no view pair shares a group; coherency is not evaluated");
  }
  return out;
}

inline bool has_ground_truth(const Manifest& m) {
  return std::all_of(m.views.begin(), m.views.end(),
                     [](const auto& v) { return !v.gt_element_depths.empty() || v.gt_depth.has_value(); });
}

inline void write_eval(const fs::path& out, const EvalProducts& ev) {
  io::write_text(out / "eval.json", pretty(mvl::to_json(ev.report)));
  io::write_text(out / "per_view.csv", per_view_csv(ev.report));
  io::write_text(out / "error_histogram.csv", error_histogram_csv(ev.pred_depth, ev.gt_depth));
  fs::create_directories(out / "error_maps");
  for (std::size_t i = 0; i < ev.pred_depth.size(); ++i)
    io::write_png(out / "error_maps" / (view_dir(ev.report.views[i].view_id) + ".png"),
                  error_map(ev.pred_depth[i], ev.gt_depth[i]));
}

// ---------------------------------------------------------------------------
// reconstruct

inline constexpr std::array<char, 8> kProbMagic = {'M', 'V', 'L', 'P', 'R', 'O', 'B', '1'};

// Per-element 1D distributions: magic, u32 element count, u32 hypothesis
// count, then float32 values element by element.
inline void write_probabilities(const fs::path& path, const ViewEstimate& est, int k_count) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(kProbMagic.data(), kProbMagic.size());
  io::detail::put_u32(os, static_cast<std::uint32_t>(est.elements.size()));
  io::detail::put_u32(os, static_cast<std::uint32_t>(k_count));
  for (const auto& e : est.elements)
    for (double p : e.distribution) io::detail::put_f32(os, static_cast<float>(p));
  if (!os) throw IoError("cannot write " + path.string());
}

inline std::vector<std::vector<float>> read_probabilities(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (magic != kProbMagic) throw IoError(path.string() + " is not a probability dump");
  const auto n = io::detail::get_u32(is);
  const auto k = io::detail::get_u32(is);
  std::vector<std::vector<float>> out(n, std::vector<float>(k));
  for (auto& row : out)
    for (auto& p : row) p = io::detail::get_f32(is);
  if (!is) throw IoError("truncated probability dump " + path.string());
  return out;
}

inline ConfidenceMap view_confidence(const Manifest& m, const ViewEntry& v, ConfidenceMode mode,
                                     const SemanticTable& table) {
  const int w = m.camera.width, h = m.camera.height;
  if (mode == ConfidenceMode::none) return ConfidenceMap::ones(w, h);
  Raster<double> cs(w, h, 1.0), ca(w, h, 1.0);
  if (v.semantic) {
    const auto sem = io::read_png_gray(*v.semantic);
    if (sem.width() != w || sem.height() != h) throw DomainError("semantic map of view " + std::to_string(v.id) + " has the wrong size");
    auto sc = semantic_confidence(sem, table);
    if (sc.unknown_labels > 0)
      warn("view " + std::to_string(v.id) + ": " + std::to_string(sc.unknown_labels) +
           " pixels carry labels missing from the confidence table");
    cs = std::move(sc.values);
  } else {
    warn("view " + std::to_string(v.id) + " has no semantic map; semantic confidence is 1");
  }
  if (mode == ConfidenceMode::full) {
    if (v.attention) {
      const auto att = io::read_png_gray(*v.attention);
      if (att.width() != w || att.height() != h) throw DomainError("attention map of view " + std::to_string(v.id) + " has the wrong size");
      ca = attention_from_gray(att);
    } else {
      warn("view " + std::to_string(v.id) + " has no attention map; attention confidence is 1");
    }
  }
  return combine(cs, ca);
}

struct ReconstructResult {
  std::vector<Layout2D> layouts;
  std::vector<ViewEstimate> estimates;
  std::vector<Layout3D> views;
  SceneLayout scene;
  std::optional<EvalProducts> eval;
};

inline ReconstructResult reconstruct(const Manifest& m, const RunConfig& cfg) {
  cfg.validate();
  ReconstructResult res;
  const std::size_t n = m.views.size();
  {
    StageTimer t("layouts", {{"views", n}});
    for (const auto& v : m.views) res.layouts.push_back(load_layout(v, m.camera));
  }
  std::vector<ViewImage> images;
  {
    StageTimer t("load_images", {{"views", n}});
    for (const auto& v : m.views) {
      const auto rgb = io::read_png_rgb(v.image);
      if (rgb.width() != m.camera.width || rgb.height() != m.camera.height)
        throw DomainError("panorama " + v.image.string() + " does not match the manifest camera");
      images.push_back({to_gray(rgb), v.pose});
    }
  }
  const SemanticTable table = m.confidence_table
                                  ? detail::parse_json_file(*m.confidence_table).get<SemanticTable>()
                                  : SemanticTable::layout_default();
  if (n == 1) warn("single view: the reference is its own only source, depths are unconstrained");

  res.estimates.resize(n);
  const int outer = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(cfg.threads)));
  const int inner = std::max(1, cfg.threads / outer);
  parallel_for(n, outer, [&](std::size_t i) {
    StageTimer t("mvs", {{"view", m.views[i].id}});
    std::vector<ViewImage> sources;
    for (std::size_t s = 0; s < n; ++s)
      if (s != i && m.views[s].group == m.views[i].group) sources.push_back(images[s]);
    if (sources.empty()) {
      if (n > 1) warn("view " + std::to_string(m.views[i].id) + " has no source view in its group");
      sources.push_back(images[i]);
    }
    const auto conf = view_confidence(m, m.views[i], cfg.confidence, table);
    res.estimates[i] = reconstruct_view(images[i], sources, res.layouts[i], cfg.hypotheses, conf,
                                        cfg.mvs_options(inner), m.views[i].id);
    for (std::size_t j = 0; j < res.estimates[i].elements.size(); ++j) {
      const auto& e = res.estimates[i].elements[j];
      if (e.no_evidence)
        warn("view " + std::to_string(m.views[i].id) + " element " + std::to_string(j) +
             ": no pixel has a valid source projection, distribution is uniform");
      else if (e.confidence_fallback)
        warn("view " + std::to_string(m.views[i].id) + " element " + std::to_string(j) +
             ": all confidence weights are zero, falling back to unit weights");
    }
  });
  for (const auto& e : res.estimates) res.views.push_back(e.layout3d);
  {
    StageTimer t("fusion");
    FusionOptions fo;
    fo.distance_threshold = cfg.fusion_threshold;
    res.scene = fuse(res.views, fo);
  }
  if (has_ground_truth(m)) {
    StageTimer t("eval");
    FusionOptions fo;
    fo.distance_threshold = cfg.fusion_threshold;
    res.eval = evaluate(m, res.layouts, res.views, fo, cfg);
  }
  return res;
}

inline void write_reconstruction(const fs::path& out, const Manifest& m, const RunConfig& cfg,
                                 const ReconstructResult& r) {
  fs::create_directories(out / "layouts");
  fs::create_directories(out / "probabilities");
  io::write_text(out / "config.json", pretty(to_json(cfg)));
  for (std::size_t i = 0; i < r.views.size(); ++i) {
    json j = mvl::to_json(r.views[i]);
    for (std::size_t e = 0; e < r.estimates[i].elements.size(); ++e) {
      const auto& est = r.estimates[i].elements[e];
      j["elements"][e]["pixels_used"] = est.pixels_used;
      j["elements"][e]["confidence_fallback"] = est.confidence_fallback;
      j["elements"][e]["no_evidence"] = est.no_evidence;
    }
    const auto name = view_dir(m.views[i].id);
    io::write_text(out / "layouts" / (name + ".json"), pretty(j));
    write_probabilities(out / "probabilities" / (name + ".bin"), r.estimates[i], cfg.hypotheses.count);
  }
  io::write_text(out / "scene.json",
                 pretty({{"camera", {{"width", m.camera.width}, {"height", m.camera.height}}},
                         {"fused", mvl::to_json(r.scene)}}));
  io::write_text(out / "scene.ply", to_ply(r.scene));
  if (r.eval) write_eval(out, *r.eval);
}

// ---------------------------------------------------------------------------
// eval

// Scores the layouts/ of `pred_dir` against the scene manifest in `gt_dir`.
inline EvalProducts run_eval(const fs::path& pred_dir, const fs::path& gt_dir, const RunConfig& base = {}) {
  const Manifest m = load_manifest(gt_dir / "manifest.json");
  RunConfig cfg = base;
  apply_manifest(cfg, m.tuning);
  const json scene = detail::parse_json_file(pred_dir / "scene.json");
  const SphericalCamera cam(scene.at("camera").at("width"), scene.at("camera").at("height"));
  if (!(cam == m.camera)) throw DomainError("prediction and ground truth use different panorama sizes");
  FusionOptions fo;
  fo.distance_threshold = scene.at("fused").at("distance_threshold").get<double>();
  // Only the views present in the prediction are scored.
  Manifest sub = m;
  sub.views.clear();
  std::vector<Layout3D> pred;
  for (const auto& v : m.views) {
    const fs::path p = pred_dir / "layouts" / (view_dir(v.id) + ".json");
    if (!fs::exists(p)) continue;
    pred.push_back(layout3d_from_json(detail::parse_json_file(p)));
    sub.views.push_back(v);
  }
  if (sub.views.empty()) throw DomainError("no predicted layout matches a ground-truth view");
  std::vector<Layout2D> layouts;
  for (const auto& v : sub.views) layouts.push_back(load_layout(v, sub.camera));
  return evaluate(sub, layouts, pred, fo, cfg);
}

}  // namespace mvl::pipeline
