#pragma once

// Three-stage coarse-to-fine cascade. Stage 1 sweeps uniform planes over the
// reference camera's depth range; stages 2 and 3 sweep a per-pixel range
// around the upsampled previous depth, optionally with adaptive plane offsets
// and depth-embedded features.

#include <array>
#include <chrono>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmvs/camera.hpp"
#include "cmvs/fusion_eval.hpp"
#include "cmvs/gde.hpp"
#include "cmvs/hypothesis.hpp"
#include "cmvs/loss.hpp"
#include "cmvs/matching.hpp"
#include "cmvs/numerics.hpp"

namespace cmvs {

struct PipelineConfig {
  std::array<int, 3> planes{64, 32, 8};
  std::array<double, 3> intervals{4.0, 2.0, 1.0};
  std::array<double, 3> scales{0.25, 0.5, 1.0};
  double lambda = 1.5;
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  double sigma_floor = 1e-3;
  double temperature = 0.01;
  AdiaMode adia = AdiaMode::literal;
  bool gde = true;
  bool is_loss = true;
  double gde_gain = 1.0;
  RefineParams refine;
  CostParams cost;
  FilterParams fusion;
  double voxel_size = 0.0;
  int num_sources = 3;
  bool keep_probability = false;

  void validate() const {
    for (int k = 0; k < 3; ++k) {
      if (planes[k] < 2) throw std::invalid_argument("PipelineConfig: every stage needs at least 2 planes");
      if (!(intervals[k] > 0.0)) throw std::invalid_argument("PipelineConfig: intervals must be positive");
      if (!(scales[k] > 0.0)) throw std::invalid_argument("PipelineConfig: scales must be positive");
      if (k > 0 && !(scales[k] > scales[k - 1])) throw std::invalid_argument("PipelineConfig: scales must ascend");
    }
    if (!(lambda > 0.0)) throw std::invalid_argument("PipelineConfig: lambda must be positive");
    if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("PipelineConfig: loss weights must be >= 0");
    if (!(sigma_floor > 0.0)) throw std::invalid_argument("PipelineConfig: sigma_floor must be positive");
    if (!(temperature > 0.0)) throw std::invalid_argument("PipelineConfig: temperature must be positive");
    if (gde_gain < 0.0) throw std::invalid_argument("PipelineConfig: gde_gain must be >= 0");
    if (num_sources < 1) throw std::invalid_argument("PipelineConfig: need at least one source view");
  }
};

/// Full-resolution input view. gt_depth is optional and only feeds the losses.
struct View {
  ImageF image;
  Camera camera;
  std::optional<ImageF> gt_depth;
};

struct StageOutput {
  int stage = 0;
  double scale = 1.0;
  Camera camera;  // reference camera at this stage's resolution
  DepthMap depth;
  HypothesisSet hypotheses;
  DepthRangeMap range;
  std::optional<DepthMap> prior;  // upsampled (and refined, with GDE) previous depth; stages 2 and 3
  std::optional<ProbabilityVolume> probability;
  double seconds = 0.0;
};

struct CascadeResult {
  DepthMap depth;
  std::vector<StageOutput> stages;
  std::optional<LossBreakdown> loss;
};

namespace detail {
inline void require_views(const std::vector<View>& views) {
  if (views.size() < 2) throw std::invalid_argument("cascade: need a reference and at least one source view");
  const auto& ref = views.front().image;
  for (const auto& v : views)
    if (!v.image.same_grid(ref)) throw std::invalid_argument("cascade: views differ in resolution");
}

/// Previous stage's depth and sigma resampled onto the current stage grid.
inline DepthMap upsample_previous(const StageOutput& prev, int h, int w, double scale) {
  const double ratio = prev.scale / scale;
  return {resample_scaled(prev.depth.depth, h, w, ratio), resample_scaled(prev.depth.sigma, h, w, ratio),
          resample_scaled(prev.depth.confidence, h, w, ratio)};
}

/// Two-convolution transform of the depth features of a per-pixel depth map.
inline ImageF embedded_depth(const ImageF& depth, double gmin, double gmax, double gain) {
  return fusion_transform(depth_to_feature(depth, kFeatureChannels, gmin, gmax, gain).data);
}
}  // namespace detail

/// One cascade stage (k = 1, 2, 3) for views[0] against the next
/// cfg.num_sources views.
inline StageOutput run_stage(int k, const std::vector<View>& views, const PipelineConfig& cfg,
                             const StageOutput* prev = nullptr) {
  if (k < 1 || k > 3) throw std::invalid_argument("run_stage: stage must be 1, 2 or 3");
  if (k > 1 && prev == nullptr) throw std::invalid_argument("run_stage: stages 2 and 3 need the previous stage");
  detail::require_views(views);
  const auto start = std::chrono::steady_clock::now();
  const int idx = k - 1;
  const double scale = cfg.scales[static_cast<std::size_t>(idx)];
  const int n = cfg.planes[static_cast<std::size_t>(idx)];
  const double interval = cfg.intervals[static_cast<std::size_t>(idx)];
  const Camera& ref_full = views.front().camera;
  const double gmin = ref_full.depth_min, gmax = ref_full.depth_max;
  const std::size_t sources = std::min<std::size_t>(views.size() - 1, static_cast<std::size_t>(cfg.num_sources));

  StageOutput out;
  out.stage = k;
  out.scale = scale;
  out.camera = scale_camera(ref_full, scale);
  const ImageF ref_img = pyramid_level(views.front().image, scale);
  const int h = ref_img.height(), w = ref_img.width();

  const bool embed = k > 1 && cfg.gde;
  std::optional<DepthMap> coarse;
  if (k > 1) {
    coarse = detail::upsample_previous(*prev, h, w, scale);
    // With GDE the edge-aware refinement is the depth handed to this stage.
    if (embed) coarse->depth = refine_depth(*coarse, ref_img, cfg.refine).depth;
  }
  if (k == 1) {
    out.range = constant_range(h, w, gmin, gmax, n);
    out.hypotheses = uniform_hypotheses(out.range, n);
  } else {
    if (cfg.adia == AdiaMode::off) {
      out.range = fixed_range(*coarse, interval, n, gmin, gmax);
      out.hypotheses = uniform_hypotheses(out.range, n);
    } else {
      RangeParams rp;
      rp.sigma_floor = cfg.sigma_floor;
      rp.stage_interval = interval;
      out.range = refine_range(*coarse, cfg.lambda, gmin, gmax, n, rp);
      const HypothesisSet uniform = uniform_hypotheses(out.range, n);
      const OffsetVolume offsets = adia_offsets(uniform, *coarse, cfg.sigma_floor, cfg.adia);
      out.hypotheses = adia_hypotheses(uniform, out.range.interval, offsets);
    }
  }

  ImageF ref_feat = filter_bank_features(ref_img);
  std::vector<ImageF> plane_embedding;
  if (embed) {
    ref_feat = fuse(FeatureMap{ref_feat},
                    FeatureMap{depth_to_feature(coarse->depth, kFeatureChannels, gmin, gmax, cfg.gde_gain).data})
                   .feature.data;
    plane_embedding.resize(static_cast<std::size_t>(n));
    parallel_for(0, n, [&](int i) {
      plane_embedding[static_cast<std::size_t>(i)] =
          detail::embedded_depth(out.hypotheses.values.plane(i), gmin, gmax, cfg.gde_gain);
    });
  }

  std::vector<WarpedView> warped;
  warped.reserve(sources);
  for (std::size_t s = 1; s <= sources; ++s) {
    ImageF feat = filter_bank_features(pyramid_level(views[s].image, scale));
    if (embed) feat = fusion_transform(feat);
    WarpedView wv = warp_features(feat, out.camera, scale_camera(views[s].camera, scale), out.hypotheses);
    if (embed) {
      parallel_for(0, n, [&](int i) {
        const ImageF& e = plane_embedding[static_cast<std::size_t>(i)];
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            for (int c = 0; c < kFeatureChannels; ++c) wv.values(i, y, x, c) += e(y, x, c);
      });
    }
    warped.push_back(std::move(wv));
  }

  const CostVolume cost = regularize(variance_cost(ref_feat, warped, cfg.cost));
  ProbabilityVolume prob = cost_to_probability(cost, cfg.temperature);
  out.prior = std::move(coarse);
  out.depth = regress_depth(out.hypotheses, prob);
  out.depth.sigma = depth_variance(out.hypotheses, prob, out.depth);
  out.depth.confidence = photometric_confidence(prob, out.hypotheses, out.depth);
  if (cfg.keep_probability) out.probability = std::move(prob);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Ground truth of views[0] at a stage resolution (nearest sampling).
inline ImageF stage_ground_truth(const View& ref, double scale) {
  if (!ref.gt_depth) throw std::invalid_argument("stage_ground_truth: reference view has no ground truth");
  return nearest_level(*ref.gt_depth, scale);
}

/// L1 and image-synthesis loss of one stage prediction against the reference
/// ground truth, with source images and cameras at the stage resolution.
inline StageLoss stage_loss(const ImageF& pred_depth, double scale, const std::vector<View>& views,
                            const PipelineConfig& cfg) {
  detail::require_views(views);
  const ImageF gt = stage_ground_truth(views.front(), scale);
  StageLoss out;
  out.l1 = l1_loss(pred_depth, gt, positive_depth_mask(gt)).value;
  if (cfg.is_loss) {
    const std::size_t sources = std::min<std::size_t>(views.size() - 1, static_cast<std::size_t>(cfg.num_sources));
    std::vector<SourceImage> src;
    for (std::size_t s = 1; s <= sources; ++s)
      src.push_back({pyramid_level(views[s].image, scale), scale_camera(views[s].camera, scale)});
    out.is = is_loss(pred_depth, gt, scale_camera(views.front().camera, scale), src).value;
  }
  return out;
}

/// Weighted loss over the three stage predictions (one depth map per stage).
inline LossBreakdown cascade_loss(const std::array<ImageF, 3>& stage_depths, const std::vector<View>& views,
                                  const PipelineConfig& cfg) {
  std::array<StageLoss, 3> stages;
  for (std::size_t a = 0; a < 3; ++a) stages[a] = stage_loss(stage_depths[a], cfg.scales[a], views, cfg);
  return total_loss(stages, cfg.lambda1, cfg.lambda2);
}

/// Stages 1 -> 3 for views[0]. Losses are reported when views[0] carries ground truth.
inline CascadeResult run_cascade(const std::vector<View>& views, const PipelineConfig& cfg) {
  cfg.validate();
  detail::require_views(views);
  CascadeResult out;
  for (int k = 1; k <= 3; ++k)
    out.stages.push_back(run_stage(k, views, cfg, k > 1 ? &out.stages.back() : nullptr));
  out.depth = out.stages.back().depth;
  if (views.front().gt_depth)
    out.loss = cascade_loss({out.stages[0].depth.depth, out.stages[1].depth.depth, out.stages[2].depth.depth},
                            views, cfg);
  return out;
}

}  // namespace cmvs
