// scenediff: detect / eval / synth / viz front end over the header library.
//
// Exit codes: 0 success, 2 bad input (asset, config or JSON errors),
// 1 anything else.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "scenediff/assets.hpp"
#include "scenediff/evaluation.hpp"
#include "scenediff/pipeline.hpp"
#include "scenediff/synth.hpp"
#include "scenediff/viz.hpp"

namespace fs = std::filesystem;
using namespace scenediff;

namespace {

void init_logging() {
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("SCENEDIFF_LOG")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
  spdlog::set_pattern("[%l] %v");
}

struct DetectArgs {
  std::string pair_dir, before_dir, after_dir, out, config_path;
  std::optional<double> tau_occ, covis, exclude_frac, sigma_geo, sigma_merge, tau_sim, voxel;
  std::optional<std::string> weights, threshold, exclude_predicate;
  std::optional<int> workers;
};

ScoreWeights parse_weights(const std::string& s) {
  std::vector<double> w;
  std::stringstream ss(s);
  std::string tok;
  try {
    while (std::getline(ss, tok, ',')) w.push_back(std::stod(tok));
  } catch (const std::exception&) {
    w.clear();
  }
  if (w.size() != 3) throw Error(ErrorCode::InvalidConfig, "--weights expects g,f,r");
  return {w[0], w[1], w[2]};
}

// defaults < config file < flags
PipelineConfig resolve_config(const DetectArgs& a) {
  PipelineConfig c;
  if (!a.config_path.empty()) {
    std::ifstream is(a.config_path);
    if (!is) throw Error(ErrorCode::MissingFile, a.config_path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedInput, a.config_path + ": " + e.what());
    }
    apply_config_json(j, c);
  }
  if (a.tau_occ) c.tau_occ = *a.tau_occ;
  if (a.weights) c.weights = parse_weights(*a.weights);
  if (a.covis) c.covis_threshold = *a.covis;
  if (a.exclude_frac) c.exclude_frac = *a.exclude_frac;
  if (a.exclude_predicate) apply_config_json({{"exclude_predicate", *a.exclude_predicate}}, c);
  if (a.sigma_geo) c.sigma_geo = *a.sigma_geo;
  if (a.sigma_merge) c.sigma_merge = *a.sigma_merge;
  if (a.tau_sim) c.tau_sim = *a.tau_sim;
  if (a.voxel) c.voxel_size = *a.voxel;
  if (a.threshold) c.threshold_mode = parse_threshold(*a.threshold, c.fixed_threshold);
  if (a.workers) c.workers = *a.workers;
  c.validate();
  return c;
}

SequencePair load_input(const DetectArgs& a) {
  if (!a.pair_dir.empty()) return load_sequence_pair(a.pair_dir);
  if (a.before_dir.empty() || a.after_dir.empty())
    throw Error(ErrorCode::MalformedInput, "give a pair directory or both --before and --after");
  SequencePair pair;
  // Sibling before/after directories take their parent's name as the scene id.
  auto clean = [](const std::string& p) {
    auto q = fs::absolute(p).lexically_normal();
    return q.has_filename() ? q : q.parent_path();  // drop a trailing slash
  };
  const auto b = clean(a.before_dir), f = clean(a.after_dir);
  pair.scene_id = (b.parent_path() == f.parent_path() ? b.parent_path() : b).filename().string();
  pair.before = load_sequence(a.before_dir, a.before_dir);
  pair.after = load_sequence(a.after_dir, a.after_dir);
  pair.validate();
  return pair;
}

int run_detect(const DetectArgs& a) {
  const auto config = resolve_config(a);
  const auto input = load_input(a);
  spdlog::info("scene {}: {} before / {} after frames", input.scene_id, input.before.size(),
               input.after.size());
  const auto result = run_pipeline(input, config);
  write_json_file(a.out, detection_output_json(result, config));

  int counts[3] = {0, 0, 0};
  for (const auto& o : result.detections.objects) ++counts[static_cast<int>(o.change_type)];
  std::cout << "scene " << input.scene_id << (result.two_image ? " (two-image)" : "") << ": "
            << result.pairs.pairs.size() << " frame pairs, threshold " << result.threshold
            << "\n  objects: " << result.detections.objects.size() << " (added " << counts[0]
            << ", removed " << counts[1] << ", moved " << counts[2] << ")\n";
  return 0;
}

int run_eval(const std::string& pred, const std::string& gt_path, const std::string& out,
             const std::string& pr_csv) {
  const auto dets = load_detection_set(pred);
  const auto gt = load_ground_truth(gt_path);
  const auto report = evaluate(dets, gt);
  write_json_file(out, to_json(report));
  if (!pr_csv.empty()) {
    std::ofstream os(pr_csv);
    if (!os) throw Error(ErrorCode::IoError, "cannot write " + pr_csv);
    os << pr_curve_csv(report);
  }
  std::cout << "per_view_ap " << report.per_view.ap << "\nper_scene_ap " << report.per_scene.ap
            << "\nper_scene_ap_type " << report.per_scene_type.ap << "\n";
  return 0;
}

struct SynthArgs {
  std::string spec, out, stress;
  std::optional<std::uint64_t> seed;
  std::optional<double> depth_noise, feat_noise;
  int workers = 1;
};

int run_synth(const SynthArgs& a) {
  synth::SynthScene scene;
  if (!a.spec.empty()) {
    scene = synth::scene_from_json(read_json_file(a.spec));
  } else if (!a.stress.empty()) {
    bool found = false;
    for (const auto& c : synth::stress_suite())
      if (c.name == a.stress) scene = c.scene, found = true;
    if (!found) throw Error(ErrorCode::InvalidSpec, "unknown stress case '" + a.stress + "'");
  } else if (a.seed) {
    scene = synth::random_scene(*a.seed);
  } else {
    throw Error(ErrorCode::InvalidSpec, "give a spec file, --seed or --stress");
  }
  if (a.depth_noise) scene.noise.depth_sigma = *a.depth_noise;
  if (a.feat_noise) scene.noise.feature_sigma = *a.feat_noise;
  const auto out = synth::generate(scene, a.workers);
  synth::write_output(out, a.out);
  write_json_file(fs::path(a.out) / "scene.json", synth::to_json(scene));
  std::cout << "wrote " << scene.scene_id << " to " << a.out << " (" << out.pair.before.size()
            << "+" << out.pair.after.size() << " frames, " << out.gt.objects.size()
            << " changed objects)\n";
  return 0;
}

int run_viz(const std::string& pair_dir, const std::string& dets_path, const std::string& out) {
  const auto pair = load_sequence_pair(pair_dir);
  const auto dets = load_detection_set(dets_path);
  detail::create_dirs(out);
  for (Side side : {Side::Before, Side::After}) {
    const char* name = side == Side::Before ? "before" : "after";
    for (const auto& f : pair.frames(side)) {
      const auto file = fs::path(out) / (std::string(name) + "_" + detail::frame_dir_name(f.frame_id) + ".png");
      write_png(render_overlay(f, side, dets), file);
    }
  }
  write_ply(pair, dets, fs::path(out) / "points.ply");
  std::cout << "wrote " << pair.before.size() + pair.after.size() << " overlays and points.ply to "
            << out << "\n";
  return 0;
}

bool is_input_error(ErrorCode c) { return c != ErrorCode::IoError; }

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"Multiview object change detection between two video captures"};
  app.require_subcommand(1);

  DetectArgs d;
  auto* detect = app.add_subcommand("detect", "detect changed objects between two sequences");
  detect->add_option("pair_dir", d.pair_dir, "asset directory with manifest.json");
  detect->add_option("--before", d.before_dir, "before sequence directory");
  detect->add_option("--after", d.after_dir, "after sequence directory");
  detect->add_option("-o,--out", d.out, "output DetectionSet JSON")->required();
  detect->add_option("--config", d.config_path, "JSON config, overridden by flags");
  detect->add_option("--tau-occ", d.tau_occ);
  detect->add_option("--weights", d.weights, "g,f,r");
  detect->add_option("--covis", d.covis);
  detect->add_option("--exclude-frac", d.exclude_frac);
  detect->add_option("--exclude-predicate", d.exclude_predicate, "mask_true|mask_false");
  detect->add_option("--sigma-geo", d.sigma_geo);
  detect->add_option("--sigma-merge", d.sigma_merge);
  detect->add_option("--tau-sim", d.tau_sim);
  detect->add_option("--voxel", d.voxel);
  detect->add_option("--threshold", d.threshold, "kapur|fixed:X");
  detect->add_option("--workers", d.workers);

  std::string pred, gt, eval_out, pr_csv;
  auto* eval = app.add_subcommand("eval", "score detections against ground truth");
  eval->add_option("pred", pred)->required();
  eval->add_option("gt", gt)->required();
  eval->add_option("-o,--out", eval_out, "output EvalReport JSON")->required();
  eval->add_option("--pr-csv", pr_csv, "also write the PR curves as CSV");

  SynthArgs s;
  auto* syn = app.add_subcommand("synth", "render a synthetic scene pair with ground truth");
  syn->add_option("spec", s.spec, "scene spec JSON");
  syn->add_option("--seed", s.seed, "random scene from this seed");
  syn->add_option("--stress", s.stress, "named stress case");
  syn->add_option("--depth-noise", s.depth_noise, "depth sigma as a fraction of scene scale");
  syn->add_option("--feat-noise", s.feat_noise, "per-entry feature sigma");
  syn->add_option("--workers", s.workers);
  syn->add_option("-o,--out", s.out, "output directory")->required();

  std::string viz_pair, viz_dets, viz_out;
  auto* viz = app.add_subcommand("viz", "overlay images and a colored point cloud");
  viz->add_option("pair_dir", viz_pair)->required();
  viz->add_option("detections", viz_dets)->required();
  viz->add_option("-o,--out", viz_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*detect) return run_detect(d);
    if (*eval) return run_eval(pred, gt, eval_out, pr_csv);
    if (*syn) return run_synth(s);
    if (*viz) return run_viz(viz_pair, viz_dets, viz_out);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return is_input_error(e.code()) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
