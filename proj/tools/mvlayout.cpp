// mvlayout: synthesize scenes, reconstruct metric layouts, evaluate them.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include <mvlayout/pipeline.hpp>

namespace fs = std::filesystem;
namespace pl = mvl::pipeline;
using nlohmann::json;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

fs::path default_out_dir() {
  if (const char* env = std::getenv("MVLAYOUT_OUT_DIR"); env && *env) return env;
  return "mvlayout_out";
}

int report_error(const char* kind, const std::string& message, int code) {
  std::cerr << json{{"level", "error"}, {"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view panoramic layout reconstruction"};
  app.require_subcommand(0, 1);
  bool print_defaults = false;
  app.add_flag("--print-config", print_defaults, "Print the built-in defaults and exit");

  // synth
  auto* synth = app.add_subcommand("synth", "Render a synthetic scene and write its manifest");
  std::string synth_spec;
  fs::path synth_out = default_out_dir();
  std::optional<std::uint64_t> synth_seed;
  std::optional<int> synth_views;
  int synth_threads = 1;
  synth->add_option("spec", synth_spec, "Scene spec JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("-o,--out", synth_out, "Output directory");
  synth->add_option("--seed", synth_seed, "Seed for sampled camera placements");
  synth->add_option("--n-views", synth_views, "Number of views to render");
  synth->add_option("--threads", synth_threads, "Worker threads")->check(CLI::PositiveNumber);

  // reconstruct
  auto* rec = app.add_subcommand("reconstruct", "Estimate per-view 3D layouts, fuse, and evaluate");
  std::string manifest_path;
  fs::path rec_out = default_out_dir();
  pl::ConfigOverrides ov;
  std::string confidence;
  bool no_smoothing = false;
  bool rec_print = false;
  std::vector<std::size_t> view_ids;
  rec->add_option("manifest", manifest_path, "Scene manifest JSON")->required();
  rec->add_option("-o,--out", rec_out, "Output directory");
  rec->add_option("--hyp-count", ov.hyp_count, "Number of depth hypotheses");
  rec->add_option("--hyp-min", ov.hyp_min, "Nearest hypothesis depth (m)");
  rec->add_option("--hyp-max", ov.hyp_max, "Farthest hypothesis depth (m)");
  rec->add_option("--temperature", ov.temperature, "Softmin temperature");
  rec->add_option("--patch-size", ov.patch_size, "Matching patch side length (odd)");
  rec->add_option("--fusion-threshold", ov.fusion_threshold, "Fusion plane distance threshold (m)");
  rec->add_option("--threads", ov.threads, "Worker threads")->check(CLI::PositiveNumber);
  rec->add_option("--seed", ov.seed, "Seed for evaluation correspondences");
  rec->add_flag("--no-smoothing", no_smoothing, "Disable cost smoothing");
  rec->add_option("--confidence", confidence, "Pixel confidence")
      ->check(CLI::IsMember({"none", "semantic", "full"}));
  rec->add_option("--views", view_ids, "Reconstruct only these view ids")->delimiter(',');
  rec->add_flag("--print-config", rec_print, "Print the effective configuration and exit");

  // eval
  auto* ev = app.add_subcommand("eval", "Score predicted layouts against a ground-truth scene");
  fs::path pred_dir, gt_dir;
  fs::path eval_out;
  std::optional<std::uint64_t> eval_seed;
  ev->add_option("pred", pred_dir, "Reconstruction output directory")->required();
  ev->add_option("gt", gt_dir, "Scene directory holding manifest.json")->required();
  ev->add_option("-o,--out", eval_out, "Write eval.json and companions here");
  ev->add_option("--seed", eval_seed, "Seed for evaluation correspondences");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; every real parse error is a usage error.
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (print_defaults && !rec->parsed()) {
      std::cout << pl::to_json(pl::RunConfig{}).dump(2) << '\n';
      return 0;
    }
    if (synth->parsed()) {
      auto spec = json::parse(mvl::io::read_text(synth_spec)).get<mvl::synth::SceneSpec>();
      const int n = synth_views.value_or(spec.n_views);
      if (n < 1) return report_error("usage", "n_views must be at least 1", kExitUsage);
      const auto seed = synth_seed.value_or(spec.seed);
      pl::write_synth_scene(spec, n, seed, synth_out, synth_threads);
      std::cout << (synth_out / "manifest.json").string() << '\n';
      return 0;
    }
    if (rec->parsed()) {
      if (!confidence.empty()) ov.confidence = pl::parse_confidence_mode(confidence);
      if (no_smoothing) ov.smoothing = false;
      auto m = pl::load_manifest(manifest_path);
      pl::select_views(m, view_ids);
      pl::RunConfig cfg;
      pl::apply_manifest(cfg, m.tuning);
      pl::apply_overrides(cfg, ov);
      cfg.validate();
      if (rec_print) {
        std::cout << pl::to_json(cfg).dump(2) << '\n';
        return 0;
      }
      const auto result = pl::reconstruct(m, cfg);
      pl::write_reconstruction(rec_out, m, cfg, result);
      if (result.eval) std::cout << mvl::to_json(result.eval->report).dump(2) << '\n';
      return 0;
    }
    if (ev->parsed()) {
      pl::RunConfig base;
      if (eval_seed) base.seed = *eval_seed;
      const auto products = pl::run_eval(pred_dir, gt_dir, base);
      if (!eval_out.empty()) {
        fs::create_directories(eval_out);
        pl::write_eval(eval_out, products);
      }
      std::cout << mvl::to_json(products.report).dump(2) << '\n';
      return 0;
    }
    std::cout << app.help() << '\n';
    return kExitUsage;
  } catch (const mvl::Error& e) {
    return report_error(e.kind(), e.what(), kExitError);
  } catch (const json::exception& e) {
    return report_error("io_error", e.what(), kExitError);
  } catch (const fs::filesystem_error& e) {
    return report_error("io_error", e.what(), kExitError);
  }
}
