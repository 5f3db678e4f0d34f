#pragma once

// On-disk dataset layout shared by the command-line tool:
//   images/%08d.pfm        RGB images
//   cams/%08d_cam.txt      cameras
//   pair.txt               source lists
//   gt_depths/%08d.pfm     optional ground-truth depth
//   gt.ply                 optional ground-truth surface samples
//   depths/, confidence/   written by the depth step

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cmvs/io.hpp"
#include "cmvs/pipeline.hpp"
#include "cmvs/scene.hpp"

namespace cmvs {

namespace fs = std::filesystem;

inline std::string view_name(int id, const char* suffix) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08d%s", id, suffix);
  return buf;
}

struct DatasetPaths {
  fs::path root;
  fs::path image(int id) const { return root / "images" / view_name(id, ".pfm"); }
  fs::path camera(int id) const { return root / "cams" / view_name(id, "_cam.txt"); }
  fs::path gt_depth(int id) const { return root / "gt_depths" / view_name(id, ".pfm"); }
  fs::path depth(int id) const { return root / "depths" / view_name(id, ".pfm"); }
  fs::path confidence(int id) const { return root / "confidence" / view_name(id, ".pfm"); }
  fs::path pairs() const { return root / "pair.txt"; }
  fs::path gt_cloud() const { return root / "gt.ply"; }
};

struct Dataset {
  DatasetPaths paths;
  std::vector<ImageF> images;
  std::vector<Camera> cameras;
  std::vector<std::optional<ImageF>> gt_depths;
  PairList pairs;

  std::size_t size() const { return images.size(); }
};

/// Source ranking by the angle between viewing directions: views about 15
/// degrees apart score highest.
inline PairList make_pairs(const std::vector<Camera>& cams) {
  PairList out;
  for (std::size_t r = 0; r < cams.size(); ++r) {
    ViewPair vp{static_cast<int>(r), {}};
    const Vec3 zr = cams[r].extrinsics.rotation.row(2).transpose();
    for (std::size_t s = 0; s < cams.size(); ++s) {
      if (s == r) continue;
      const Vec3 zs = cams[s].extrinsics.rotation.row(2).transpose();
      const double angle = std::acos(std::clamp(zr.dot(zs), -1.0, 1.0)) * 180.0 / M_PI;
      vp.sources.emplace_back(static_cast<int>(s), std::exp(-(angle - 15.0) * (angle - 15.0) / 200.0));
    }
    std::stable_sort(vp.sources.begin(), vp.sources.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    out.views.push_back(std::move(vp));
  }
  return out;
}

/// Writes rendered views, their cameras, pairs, ground-truth depth and the
/// ground-truth surface cloud.
inline void write_dataset(const fs::path& root, const std::vector<RenderedView>& views, const PointCloud& gt,
                          int depth_num = 64) {
  const DatasetPaths p{root};
  std::vector<Camera> cams;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const int id = static_cast<int>(i);
    write_pfm(p.image(id), views[i].image);
    write_cam(p.camera(id), views[i].camera, depth_num);
    write_pfm(p.gt_depth(id), views[i].gt_depth);
    cams.push_back(views[i].camera);
  }
  write_pair(p.pairs(), make_pairs(cams));
  if (!gt.empty()) write_ply(p.gt_cloud(), gt, true);
}

/// In-memory dataset over rendered views (no files behind it).
inline Dataset dataset_from_views(const std::vector<RenderedView>& views) {
  Dataset d;
  for (const auto& v : views) {
    d.images.push_back(v.image);
    d.cameras.push_back(v.camera);
    d.gt_depths.emplace_back(v.gt_depth);
  }
  d.pairs = make_pairs(d.cameras);
  return d;
}

inline Dataset load_dataset(const fs::path& root) {
  Dataset d{DatasetPaths{root}, {}, {}, {}, {}};
  d.pairs = read_pair(d.paths.pairs());
  for (std::size_t i = 0; i < d.pairs.views.size(); ++i) {
    const int id = static_cast<int>(i);
    if (d.pairs.views[i].ref != id) throw FormatError(d.paths.pairs().string(), "views must be listed as 0..n-1");
    d.images.push_back(read_pfm(d.paths.image(id)));
    d.cameras.push_back(read_cam(d.paths.camera(id)).camera);
    if (fs::exists(d.paths.gt_depth(id))) d.gt_depths.emplace_back(read_pfm(d.paths.gt_depth(id)));
    else d.gt_depths.emplace_back(std::nullopt);
  }
  return d;
}

/// Reference `ref` followed by its best `num_sources` sources from pair.txt.
inline std::vector<View> views_for(const Dataset& d, int ref, int num_sources) {
  const ViewPair* vp = d.pairs.find(ref);
  if (vp == nullptr || vp->sources.empty())
    throw std::invalid_argument("view " + std::to_string(ref) + " has no source views in pair.txt");
  std::vector<View> out;
  const auto r = static_cast<std::size_t>(ref);
  out.push_back({d.images[r], d.cameras[r], d.gt_depths[r]});
  for (std::size_t k = 0; k < vp->sources.size() && static_cast<int>(k) < num_sources; ++k) {
    const auto s = static_cast<std::size_t>(vp->sources[k].first);
    if (s >= d.size()) throw FormatError(d.paths.pairs().string(), "source id out of range");
    out.push_back({d.images[s], d.cameras[s], std::nullopt});
  }
  return out;
}

/// Depth maps for every view of the dataset, views processed concurrently.
inline std::vector<CascadeResult> estimate_depths(const Dataset& d, const PipelineConfig& cfg) {
  std::vector<CascadeResult> out(d.size());
  parallel_for(0, static_cast<int>(d.size()), [&](int v) {
    out[static_cast<std::size_t>(v)] = run_cascade(views_for(d, v, cfg.num_sources), cfg);
  });
  return out;
}

inline void write_depths(const Dataset& d, const std::vector<CascadeResult>& results) {
  if (results.size() != d.size()) throw std::invalid_argument("write_depths: one result per view expected");
  for (std::size_t v = 0; v < results.size(); ++v) {
    const int id = static_cast<int>(v);
    write_pfm(d.paths.depth(id), results[v].depth.depth);
    write_pfm(d.paths.confidence(id), results[v].depth.confidence);
  }
}

/// Depth and confidence maps written by write_depths.
inline std::vector<DepthMap> read_depths(const Dataset& d) {
  std::vector<DepthMap> out;
  for (std::size_t v = 0; v < d.size(); ++v) {
    const int id = static_cast<int>(v);
    DepthMap m;
    m.depth = read_pfm(d.paths.depth(id));
    m.confidence = read_pfm(d.paths.confidence(id));
    if (!m.depth.same_grid(m.confidence))
      throw FormatError(d.paths.confidence(id).string(), "confidence size differs from depth");
    m.sigma = ImageF(m.depth.height(), m.depth.width(), 1, 0.0f);
    out.push_back(std::move(m));
  }
  return out;
}

/// Consistency filter followed by point fusion over all views.
inline PointCloud fuse_dataset(const Dataset& d, const std::vector<DepthMap>& depths, const FilterParams& filter,
                               double voxel_size) {
  if (depths.size() != d.size()) throw std::invalid_argument("fuse_dataset: one depth map per view expected");
  std::vector<ViewDepth> vd;
  for (std::size_t v = 0; v < d.size(); ++v) vd.push_back({depths[v], d.cameras[v]});
  return fuse_points(filter_depths(vd, filter), d.cameras, d.images, voxel_size);
}

struct GradientSuite {
  GradientCheck check;
  std::vector<ProbePixel> probes;
  std::size_t rejected = 0;  // candidates skipped near a kink of the loss
  double loss = 0.0;
};

/// Finite-difference check of the image-synthesis loss gradient for views[0]
/// against the other views. The prediction is the ground truth plus uniform
/// noise in [-perturb, perturb]; probes are drawn in random order from the
/// pixels where the loss is smooth over [d - step, d + step].
inline GradientSuite run_gradient_suite(const std::vector<RenderedView>& views, int probes, double step,
                                        std::uint64_t seed, double perturb = 1.5) {
  if (views.size() < 2) throw std::invalid_argument("gradient suite: need a reference and a source view");
  if (probes < 1) throw std::invalid_argument("gradient suite: need at least one probe");
  const auto& ref = views.front();
  std::vector<SourceImage> sources;
  for (std::size_t s = 1; s < views.size(); ++s) sources.push_back({views[s].image, views[s].camera});

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-perturb, perturb);
  ImageF pred = ref.gt_depth;
  for (auto& v : pred.storage())
    if (v > 0.0f) v = static_cast<float>(v + noise(rng));

  std::vector<int> order(pred.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  GradientSuite out;
  const int w = pred.width();
  for (int idx : order) {
    if (static_cast<int>(out.probes.size()) == probes) break;
    const int x = idx % w, y = idx / w;
    if (is_loss_smooth_at(pred, ref.gt_depth, ref.camera, sources, x, y, step)) out.probes.push_back({x, y});
    else ++out.rejected;
  }
  if (static_cast<int>(out.probes.size()) < probes)
    throw std::runtime_error("gradient suite: not enough smooth probe pixels");

  const LossFunctional f = [&](const ImageF& d) { return is_loss(d, ref.gt_depth, ref.camera, sources); };
  out.loss = f(pred).value;
  out.check = finite_diff_check(f, pred, out.probes, step);
  return out;
}

}  // namespace cmvs
