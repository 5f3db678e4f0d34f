// cmvs: synthetic datasets, cascade depth estimation, fusion, evaluation,
// gradient checks and the toggle ablation from the command line.
//
//   cmvs synth --out data --preset canonical
//   cmvs depth --data data
//   cmvs fuse --data data --out data/recon.ply
//   cmvs eval --recon data/recon.ply --gt data/gt.ply --report data/eval.txt
//
// Options may also come from a key = value file given with --config, one
// [section] per subcommand. Command-line flags win over file keys.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmvs/dataset.hpp"
#include "cmvs/io.hpp"
#include "cmvs/parallel.hpp"
#include "cmvs/pipeline.hpp"
#include "cmvs/scene.hpp"

namespace {

using namespace cmvs;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitCheckFailed = 3;

struct PipelineFlags {
  PipelineConfig cfg;
  std::vector<int> planes{64, 32, 8};
  std::vector<double> intervals{4.0, 2.0, 1.0};
  std::string adia = "literal";

  PipelineConfig resolve() {
    PipelineConfig out = cfg;
    std::copy(planes.begin(), planes.end(), out.planes.begin());
    std::copy(intervals.begin(), intervals.end(), out.intervals.begin());
    out.adia = adia_mode_from_string(adia);
    out.validate();
    return out;
  }
};

void add_pipeline_options(CLI::App* app, PipelineFlags& f, bool toggles) {
  auto& c = f.cfg;
  app->add_option("--planes", f.planes, "plane count per stage")->expected(3)->capture_default_str();
  app->add_option("--intervals", f.intervals, "plane interval per stage")->expected(3)->capture_default_str();
  app->add_option("--lambda", c.lambda, "range half-width in standard deviations")->capture_default_str();
  app->add_option("--lambda1", c.lambda1, "L1 loss weight")->capture_default_str();
  app->add_option("--lambda2", c.lambda2, "image-synthesis loss weight")->capture_default_str();
  app->add_option("--sigma-floor", c.sigma_floor)->capture_default_str();
  app->add_option("--temperature", c.temperature, "softmax temperature on the cost")->capture_default_str();
  app->add_option("--gde-gain", c.gde_gain)->capture_default_str();
  app->add_option("--sources", c.num_sources, "source views per reference")->capture_default_str();
  if (toggles) {
    app->add_option("--adia", f.adia, "literal | concentrate | off")
        ->check(CLI::IsMember({"literal", "concentrate", "off"}))
        ->capture_default_str();
    app->add_flag("--gde,!--no-gde", c.gde, "depth embedding at stages 2 and 3")->capture_default_str();
    app->add_flag("--is-loss,!--no-is-loss", c.is_loss, "report the image-synthesis loss")->capture_default_str();
  }
}

void add_filter_options(CLI::App* app, FilterParams& p) {
  app->add_option("--conf-min", p.conf_min)->capture_default_str();
  app->add_option("--reproj-max", p.reproj_max, "pixels")->capture_default_str();
  app->add_option("--rel-depth-max", p.rel_depth_max)->capture_default_str();
  app->add_option("--min-consistent", p.min_consistent)->capture_default_str();
}

double median_abs_error(const ImageF& pred, const ImageF& gt) {
  std::vector<double> e;
  for (std::size_t k = 0; k < pred.size(); ++k)
    if (gt.storage()[k] > 0.0f) e.push_back(std::abs(static_cast<double>(pred.storage()[k]) - gt.storage()[k]));
  if (e.empty()) return 0.0;
  auto mid = e.begin() + static_cast<std::ptrdiff_t>(e.size() / 2);
  std::nth_element(e.begin(), mid, e.end());
  return *mid;
}

void print_report(std::ostream& os, const EvalReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "accuracy      %.6f\ncompleteness  %.6f\noverall       %.6f\n"
                "precision     %.4f %%\nrecall        %.4f %%\nf-score       %.4f %% (tau %.4g)\n"
                "points        %zu reconstructed, %zu ground truth\n",
                r.accuracy, r.completeness, r.overall, 100.0 * r.precision, 100.0 * r.recall, r.f_score, r.tau,
                r.recon_points, r.gt_points);
  os << buf;
}

void write_report(const std::filesystem::path& path, const EvalReport& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "accuracy=" << r.accuracy << "\ncompleteness=" << r.completeness << "\noverall=" << r.overall
      << "\nf_score=" << r.f_score << "\nprecision=" << r.precision << "\nrecall=" << r.recall << "\ntau=" << r.tau
      << "\nrecon_points=" << r.recon_points << "\ngt_points=" << r.gt_points << "\n";
}

struct SceneFlags {
  std::string preset = "canonical";
  std::uint64_t seed = 7;
  RigOptions rig;
};

void add_scene_options(CLI::App* app, SceneFlags& s) {
  app->add_option("--preset", s.preset, "canonical | step | lowtexture")
      ->check(CLI::IsMember({"canonical", "step", "lowtexture"}))
      ->capture_default_str();
  app->add_option("--seed", s.seed, "texture seed")->capture_default_str();
  app->add_option("--views", s.rig.views, "reference plus sources")->check(CLI::Range(2, 64))->capture_default_str();
  app->add_option("--width", s.rig.width)->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--height", s.rig.height)->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--baseline", s.rig.baseline)->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--focal", s.rig.focal)->check(CLI::PositiveNumber)->capture_default_str();
}

// ---------------------------------------------------------------- commands

int cmd_synth(const SceneFlags& s, const std::string& out, double spacing, int min_views) {
  const SceneSpec spec = scene_preset(s.preset, s.rig, s.seed);
  const auto views = render_scene(spec);
  const PointCloud gt = gt_surface_points(spec, spacing, min_views);
  std::filesystem::create_directories(out);
  for (const char* sub : {"images", "cams", "gt_depths"}) std::filesystem::create_directories(out + "/" + sub);
  write_dataset(out, views, gt);
  std::printf("wrote %zu views (%dx%d) and %zu ground-truth points to %s\n", views.size(), s.rig.width,
              s.rig.height, gt.size(), out.c_str());
  return 0;
}

int cmd_depth(const std::string& root, const PipelineConfig& cfg) {
  const Dataset d = load_dataset(root);
  const auto start = std::chrono::steady_clock::now();
  const auto results = estimate_depths(d, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::filesystem::create_directories(d.paths.root / "depths");
  std::filesystem::create_directories(d.paths.root / "confidence");
  write_depths(d, results);
  for (std::size_t v = 0; v < results.size(); ++v) {
    std::printf("view %zu: %dx%d", v, results[v].depth.width(), results[v].depth.height());
    if (d.gt_depths[v]) std::printf("  median |error| %.4f", median_abs_error(results[v].depth.depth, *d.gt_depths[v]));
    if (results[v].loss) {
      const auto& l = *results[v].loss;
      std::printf("  loss %.6f (L1", l.total);
      for (const auto& s : l.stages) std::printf(" %.4f", s.l1);
      std::printf(", IS");
      for (const auto& s : l.stages) std::printf(" %.5f", s.is);
      std::printf(")");
    }
    std::printf("\n");
  }
  std::printf("%zu views in %.2f s on %d thread(s)\n", results.size(), secs, num_threads());
  return 0;
}

int cmd_fuse(const std::string& root, const std::string& out, const FilterParams& filter, double voxel, bool ascii) {
  const Dataset d = load_dataset(root);
  const PointCloud cloud = fuse_dataset(d, read_depths(d), filter, voxel);
  write_ply(out, cloud, !ascii);
  std::printf("fused %zu points into %s\n", cloud.size(), out.c_str());
  return 0;
}

int cmd_eval(const std::string& recon, const std::string& gt, const EvalOptions& opts, const std::string& report) {
  const EvalReport r = evaluate(read_ply(recon), read_ply(gt), opts);
  print_report(std::cout, r);
  if (!report.empty()) write_report(report, r);
  return 0;
}

int cmd_gradcheck(const SceneFlags& s, int probes, double step, double perturb, double tol) {
  const auto views = render_scene(scene_preset(s.preset, s.rig, s.seed));
  const auto start = std::chrono::steady_clock::now();
  const GradientSuite g = run_gradient_suite(views, probes, step, s.seed, perturb);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("probes %zu (skipped %zu near kinks), step %g, loss %.6f\n", g.probes.size(), g.rejected, step, g.loss);
  std::printf("max relative error %.3e (tolerance %.1e) in %.2f s\n", g.check.max_relative_error, tol, secs);
  if (g.check.max_relative_error < tol) {
    std::printf("PASS\n");
    return 0;
  }
  std::printf("FAIL\n");
  return kExitCheckFailed;
}

int cmd_ablate(const SceneFlags& s, PipelineConfig base, const FilterParams& filter, const EvalOptions& opts,
               double spacing, int min_views, AdiaMode adia_on) {
  const SceneSpec spec = scene_preset(s.preset, s.rig, s.seed);
  const auto views = render_scene(spec);
  const PointCloud gt = gt_surface_points(spec, spacing, min_views);
  const Dataset d = dataset_from_views(views);

  std::printf("%-4s %-5s %-8s %-4s %10s %10s %10s %10s %12s\n", "", "ADIA", "IS Loss", "GDE", "Acc", "Comp",
              "Overall", "Med.err", "Loss");
  const char tags[] = "abcdefgh";
  int row = 0;
  for (const bool adia : {false, true})
    for (const bool is : {false, true})
      for (const bool gde : {false, true}) {
        PipelineConfig cfg = base;
        cfg.adia = adia ? adia_on : AdiaMode::off;
        cfg.is_loss = is;
        cfg.gde = gde;
        const auto results = estimate_depths(d, cfg);
        std::vector<DepthMap> depths;
        for (const auto& r : results) depths.push_back(r.depth);
        const EvalReport rep = evaluate(fuse_dataset(d, depths, filter, cfg.voxel_size), gt, opts);
        std::printf("(%c)  %-5s %-8s %-4s %10.4f %10.4f %10.4f %10.4f %12.6f\n", tags[row++], adia ? "x" : "",
                    is ? "x" : "", gde ? "x" : "", rep.accuracy, rep.completeness, rep.overall,
                    median_abs_error(results[0].depth.depth, *d.gt_depths[0]),
                    results[0].loss ? results[0].loss->total : 0.0);
        std::fflush(stdout);
      }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascade multi-view stereo on synthetic scenes"};
  app.set_config("--config", "", "key = value file with one [section] per subcommand");
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  SceneFlags synth_scene;
  std::string synth_out;
  double synth_spacing = 1.0;
  int synth_min_views = 3;
  auto* synth = app.add_subcommand("synth", "render a synthetic dataset");
  add_scene_options(synth, synth_scene);
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--gt-spacing", synth_spacing, "ground-truth point spacing")->check(CLI::PositiveNumber)
      ->capture_default_str();
  synth->add_option("--gt-min-views", synth_min_views, "cameras that must see a ground-truth point")
      ->check(CLI::PositiveNumber)->capture_default_str();

  PipelineFlags depth_flags;
  std::string depth_data;
  auto* depth = app.add_subcommand("depth", "estimate a depth map for every view");
  depth->add_option("--data", depth_data, "dataset directory")->required()->check(CLI::ExistingDirectory);
  add_pipeline_options(depth, depth_flags, true);
  depth->add_flag("--keep-probability", depth_flags.cfg.keep_probability, "retain probability volumes");

  std::string fuse_data, fuse_out;
  FilterParams fuse_filter;
  double fuse_voxel = 0.0;
  bool fuse_ascii = false;
  auto* fuse = app.add_subcommand("fuse", "filter depth maps and fuse them into a point cloud");
  fuse->add_option("--data", fuse_data, "dataset directory with depths/")->required()
      ->check(CLI::ExistingDirectory);
  fuse->add_option("--out", fuse_out, "output PLY")->required();
  add_filter_options(fuse, fuse_filter);
  fuse->add_option("--voxel", fuse_voxel, "merge points per voxel of this size (0 = off)")->capture_default_str();
  fuse->add_flag("--ascii", fuse_ascii, "write ASCII PLY");

  std::string eval_recon, eval_gt, eval_report;
  EvalOptions eval_opts;
  double eval_cap = 0.0;
  auto* eval = app.add_subcommand("eval", "compare a reconstruction with a ground-truth cloud");
  eval->add_option("--recon", eval_recon)->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", eval_gt)->required()->check(CLI::ExistingFile);
  eval->add_option("--tau", eval_opts.tau, "F-score distance threshold")->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval->add_option("--dist-cap", eval_cap, "cap on per-point distances (0 = none)")->capture_default_str();
  eval->add_option("--report", eval_report, "key=value report file");

  SceneFlags grad_scene;
  int grad_probes = 100;
  double grad_step = 1e-2, grad_perturb = 1.5, grad_tol = 1e-3;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the image-synthesis loss gradient");
  add_scene_options(grad, grad_scene);
  grad->add_option("--probes", grad_probes)->check(CLI::PositiveNumber)->capture_default_str();
  grad->add_option("--step", grad_step)->check(CLI::PositiveNumber)->capture_default_str();
  grad->add_option("--perturb", grad_perturb, "noise added to the ground-truth depth")->capture_default_str();
  grad->add_option("--tol", grad_tol, "maximum relative error")->capture_default_str();

  SceneFlags ab_scene;
  PipelineFlags ab_flags;
  FilterParams ab_filter;
  EvalOptions ab_opts;
  double ab_cap = 0.0, ab_spacing = 1.0;
  int ab_min_views = 3;
  std::string ab_adia = "concentrate";
  auto* ablate = app.add_subcommand("ablate", "run all eight ADIA / IS loss / GDE combinations");
  add_scene_options(ablate, ab_scene);
  add_pipeline_options(ablate, ab_flags, false);
  add_filter_options(ablate, ab_filter);
  ablate->add_option("--adia-mode", ab_adia, "mode used for the ADIA rows")
      ->check(CLI::IsMember({"literal", "concentrate"}))
      ->capture_default_str();
  ablate->add_option("--tau", ab_opts.tau)->check(CLI::PositiveNumber)->capture_default_str();
  ablate->add_option("--dist-cap", ab_cap, "(0 = none)")->capture_default_str();
  ablate->add_option("--gt-spacing", ab_spacing)->check(CLI::PositiveNumber)->capture_default_str();
  ablate->add_option("--gt-min-views", ab_min_views)->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    set_num_threads(threads);
    if (cmd == "synth") return cmd_synth(synth_scene, synth_out, synth_spacing, synth_min_views);
    if (cmd == "depth") return cmd_depth(depth_data, depth_flags.resolve());
    if (cmd == "fuse") return cmd_fuse(fuse_data, fuse_out, fuse_filter, fuse_voxel, fuse_ascii);
    if (cmd == "eval") {
      if (eval_cap > 0.0) eval_opts.dist_cap = eval_cap;
      return cmd_eval(eval_recon, eval_gt, eval_opts, eval_report);
    }
    if (cmd == "gradcheck") return cmd_gradcheck(grad_scene, grad_probes, grad_step, grad_perturb, grad_tol);
    if (cmd == "ablate") {
      if (ab_cap > 0.0) ab_opts.dist_cap = ab_cap;
      return cmd_ablate(ab_scene, ab_flags.resolve(), ab_filter, ab_opts, ab_spacing, ab_min_views,
                        adia_mode_from_string(ab_adia));
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s: invalid input: %s\n", cmd.c_str(), e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s: %s\n", cmd.c_str(), e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
