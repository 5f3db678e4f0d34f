#pragma once

// Geometric-consistency filtering of per-view depth maps, fusion into a point
// cloud, and point-cloud scoring (accuracy, completeness, overall, F-score).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "cmvs/camera.hpp"
#include "cmvs/hypothesis.hpp"
#include "cmvs/numerics.hpp"

namespace cmvs {

using Rgb = std::array<std::uint8_t, 3>;

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;  // empty, or one per point

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_colors() const { return !colors.empty(); }
};

/// Exact nearest-neighbor queries over a uniform voxel grid. Cells are
/// searched in Chebyshev shells around the query cell until no unvisited cell
/// can hold a closer point, so results equal a brute-force scan.
class NearestNeighborGrid {
 public:
  NearestNeighborGrid(const std::vector<Vec3>& points, double cell_size) : points_(points), cell_(cell_size) {
    if (points_.empty()) throw std::invalid_argument("NearestNeighborGrid: empty point set");
    if (!(cell_ > 0.0)) throw std::invalid_argument("NearestNeighborGrid: cell size must be positive");
    lo_.fill(std::numeric_limits<std::int64_t>::max());
    hi_.fill(std::numeric_limits<std::int64_t>::min());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const Cell c = cell_of(points_[i]);
      for (int a = 0; a < 3; ++a) {
        lo_[a] = std::min(lo_[a], c[a]);
        hi_[a] = std::max(hi_[a], c[a]);
      }
      cells_[c].push_back(static_cast<std::uint32_t>(i));
    }
  }

  double cell_size() const { return cell_; }

  /// Distance from q to the closest stored point.
  double nearest_distance(const Vec3& q) const {
    const Cell qc = cell_of(q);
    std::int64_t start = 0;  // Chebyshev distance from qc to the occupied box
    std::int64_t end = 0;    // ... and to its far corner
    for (int a = 0; a < 3; ++a) {
      const std::int64_t gap = std::max<std::int64_t>({lo_[a] - qc[a], qc[a] - hi_[a], 0});
      start = std::max(start, gap);
      end = std::max({end, std::abs(qc[a] - lo_[a]), std::abs(qc[a] - hi_[a])});
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::int64_t r = start; r <= end; ++r) {
      visit_shell(qc, r, [&](const std::vector<std::uint32_t>& ids) {
        for (const auto id : ids) best = std::min(best, distance(q, points_[id]));
      });
      if (best <= static_cast<double>(r) * cell_) break;
    }
    return best;
  }

 private:
  using Cell = std::array<std::int64_t, 3>;
  struct CellHash {
    std::size_t operator()(const Cell& c) const {
      std::uint64_t h = 1469598103934665603ull;
      for (const auto v : c) h = (h ^ static_cast<std::uint64_t>(v)) * 1099511628211ull;
      return static_cast<std::size_t>(h);
    }
  };

  static double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

  Cell cell_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)), static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
  }

  template <typename Fn>
  void visit_shell(const Cell& qc, std::int64_t r, Fn&& fn) const {
    std::array<std::int64_t, 3> from{}, to{};
    for (int a = 0; a < 3; ++a) {
      from[a] = std::max(qc[a] - r, lo_[a]);
      to[a] = std::min(qc[a] + r, hi_[a]);
      if (from[a] > to[a]) return;
    }
    for (std::int64_t x = from[0]; x <= to[0]; ++x)
      for (std::int64_t y = from[1]; y <= to[1]; ++y) {
        const bool edge_xy = std::abs(x - qc[0]) == r || std::abs(y - qc[1]) == r;
        if (edge_xy) {
          for (std::int64_t z = from[2]; z <= to[2]; ++z) lookup({x, y, z}, fn);
        } else {
          // Interior column of the shell: only its two z faces belong to ring r.
          for (const std::int64_t z : {qc[2] - r, qc[2] + r})
            if (z >= from[2] && z <= to[2]) lookup({x, y, z}, fn);
        }
      }
  }

  template <typename Fn>
  void lookup(const Cell& c, Fn&& fn) const {
    const auto it = cells_.find(c);
    if (it != cells_.end()) fn(it->second);
  }

  const std::vector<Vec3>& points_;
  double cell_;
  Cell lo_{}, hi_{};
  std::unordered_map<Cell, std::vector<std::uint32_t>, CellHash> cells_;
};

/// Median nearest-neighbor spacing estimated from up to 64 evenly strided samples.
inline double median_spacing_estimate(const std::vector<Vec3>& pts) {
  if (pts.size() < 2) return 0.0;
  const std::size_t samples = std::min<std::size_t>(64, pts.size());
  const std::size_t stride = pts.size() / samples;
  std::vector<double> nn;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t i = s * stride;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i) best = std::min(best, (pts[i] - pts[j]).norm());
    nn.push_back(best);
  }
  return median_of(std::move(nn));
}

/// Distance from every query point to its nearest target point.
inline std::vector<double> nearest_distances(const std::vector<Vec3>& queries, const std::vector<Vec3>& targets,
                                             double tau = 0.0) {
  if (queries.empty() || targets.empty()) throw std::invalid_argument("nearest_distances: empty point cloud");
  double cell = std::max(tau, median_spacing_estimate(targets));
  if (!(cell > 0.0)) cell = 1.0;
  const NearestNeighborGrid grid(targets, cell);
  std::vector<double> out(queries.size());
  parallel_for(0, static_cast<int>(queries.size()),
               [&](int i) { out[static_cast<std::size_t>(i)] = grid.nearest_distance(queries[static_cast<std::size_t>(i)]); });
  return out;
}

namespace detail {
inline double capped_mean(const std::vector<double>& d, std::optional<double> cap) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const double v : d) {
    if (cap && v > *cap) continue;
    sum += v;
    ++n;
  }
  if (n == 0) throw std::runtime_error("no distances within the outlier cap");
  return sum / static_cast<double>(n);
}

inline double fraction_below(const std::vector<double>& d, double tau) {
  const auto n = std::count_if(d.begin(), d.end(), [&](double v) { return v < tau; });
  return static_cast<double>(n) / static_cast<double>(d.size());
}

inline double harmonic_percent(double p, double r) { return p + r > 0.0 ? 200.0 * p * r / (p + r) : 0.0; }
}  // namespace detail

/// Mean distance from reconstructed points to the ground truth; distances
/// above dist_cap (when set) are dropped as outliers.
inline double accuracy(const PointCloud& recon, const PointCloud& gt, std::optional<double> dist_cap = std::nullopt) {
  if (recon.empty() || gt.empty()) throw std::invalid_argument("accuracy: empty point cloud");
  return detail::capped_mean(nearest_distances(recon.points, gt.points), dist_cap);
}

/// Mean distance from ground-truth points to the reconstruction.
inline double completeness(const PointCloud& recon, const PointCloud& gt,
                           std::optional<double> dist_cap = std::nullopt) {
  return accuracy(gt, recon, dist_cap);
}

/// Harmonic mean (percent) of precision and recall at distance tau, where a
/// point counts when its nearest-neighbor distance is < tau.
inline double f_score(const PointCloud& recon, const PointCloud& gt, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("f_score: tau must be positive");
  if (recon.empty() || gt.empty()) throw std::invalid_argument("f_score: empty point cloud");
  const double p = detail::fraction_below(nearest_distances(recon.points, gt.points, tau), tau);
  const double r = detail::fraction_below(nearest_distances(gt.points, recon.points, tau), tau);
  return detail::harmonic_percent(p, r);
}

struct EvalReport {
  double accuracy = 0.0;
  double completeness = 0.0;
  double overall = 0.0;
  double f_score = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double tau = 0.0;
  std::size_t recon_points = 0;
  std::size_t gt_points = 0;
};

struct EvalOptions {
  double tau = 1.0;
  std::optional<double> dist_cap;
  /// Foreground selector; points for which it returns false are dropped from both clouds.
  std::function<bool(const Vec3&)> foreground;
};

inline PointCloud select_points(const PointCloud& cloud, const std::function<bool(const Vec3&)>& keep) {
  if (!keep) return cloud;
  PointCloud out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!keep(cloud.points[i])) continue;
    out.points.push_back(cloud.points[i]);
    if (cloud.has_colors()) out.colors.push_back(cloud.colors[i]);
  }
  return out;
}

/// All four metrics from one pair of nearest-neighbor passes.
inline EvalReport evaluate(const PointCloud& recon_in, const PointCloud& gt_in, const EvalOptions& opts) {
  if (!(opts.tau > 0.0)) throw std::invalid_argument("evaluate: tau must be positive");
  const PointCloud recon = select_points(recon_in, opts.foreground);
  const PointCloud gt = select_points(gt_in, opts.foreground);
  if (recon.empty() || gt.empty()) throw std::invalid_argument("evaluate: empty point cloud");
  const auto to_gt = nearest_distances(recon.points, gt.points, opts.tau);
  const auto to_recon = nearest_distances(gt.points, recon.points, opts.tau);
  EvalReport r;
  r.accuracy = detail::capped_mean(to_gt, opts.dist_cap);
  r.completeness = detail::capped_mean(to_recon, opts.dist_cap);
  r.overall = 0.5 * (r.accuracy + r.completeness);
  r.precision = detail::fraction_below(to_gt, opts.tau);
  r.recall = detail::fraction_below(to_recon, opts.tau);
  r.f_score = detail::harmonic_percent(r.precision, r.recall);
  r.tau = opts.tau;
  r.recon_points = recon.size();
  r.gt_points = gt.size();
  return r;
}

inline EvalReport evaluate(const PointCloud& recon, const PointCloud& gt, double tau) {
  EvalOptions opts;
  opts.tau = tau;
  return evaluate(recon, gt, opts);
}

struct ViewDepth {
  DepthMap depth;
  Camera camera;
};

struct FilterParams {
  double conf_min = 0.5;
  double reproj_max = 1.0;      // pixels
  double rel_depth_max = 0.01;  // relative
  int min_consistent = 2;
};

namespace detail {
/// Depth of view at (x, y): bilinear when all four neighbors are positive, else nearest.
inline double sample_depth(const ImageF& depth, double x, double y) {
  if (!(x >= 0.0 && y >= 0.0 && x <= depth.width() - 1 && y <= depth.height() - 1)) return 0.0;
  float v = 0.0f;
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, depth.width() - 1), y1 = std::min(y0 + 1, depth.height() - 1);
  if (depth(y0, x0) > 0 && depth(y0, x1) > 0 && depth(y1, x0) > 0 && depth(y1, x1) > 0) {
    bilinear_sample_into(depth, x, y, &v);
    return v;
  }
  return depth(static_cast<int>(std::lround(y)), static_cast<int>(std::lround(x)));
}
}  // namespace detail

/// Keeps a pixel when its confidence reaches conf_min and at least
/// min_consistent other views agree after a forward-backward reprojection.
/// Rejected pixels get depth 0.
inline std::vector<DepthMap> filter_depths(const std::vector<ViewDepth>& views, const FilterParams& params = {}) {
  if (views.size() < 2) throw std::invalid_argument("filter_depths: need at least two views");
  std::vector<DepthMap> out;
  out.reserve(views.size());
  for (std::size_t v = 0; v < views.size(); ++v) {
    const auto& ref = views[v];
    DepthMap kept = ref.depth;
    const int h = ref.depth.height(), w = ref.depth.width();
    parallel_for(0, h, [&](int y) {
      for (int x = 0; x < w; ++x) {
        const double d = ref.depth.depth(y, x);
        bool keep = d > 0.0 && ref.depth.confidence(y, x) >= params.conf_min;
        int agree = 0;
        for (std::size_t u = 0; keep && u < views.size(); ++u) {
          if (u == v) continue;
          const auto& other = views[u];
          const Vec3 world = backproject(ref.camera, x, y, d);
          if (!(other.camera.to_camera(world).z() > 0.0)) continue;
          const Projection pu = project(other.camera, world);
          const double du = detail::sample_depth(other.depth.depth, pu.x, pu.y);
          if (!(du > 0.0)) continue;
          const Vec3 back = backproject(other.camera, pu.x, pu.y, du);
          if (!(ref.camera.to_camera(back).z() > 0.0)) continue;
          const Projection pr = project(ref.camera, back);
          const double err = std::hypot(pr.x - x, pr.y - y);
          if (err <= params.reproj_max && std::abs(pr.depth - d) / d <= params.rel_depth_max) ++agree;
        }
        if (!keep || agree < params.min_consistent) {
          kept.depth(y, x) = 0.0f;
          kept.confidence(y, x) = 0.0f;
        }
      }
    });
    out.push_back(std::move(kept));
  }
  return out;
}

/// Backprojects every positive-depth pixel and merges points sharing a voxel
/// of edge voxel_size into their centroid (colors averaged). voxel_size <= 0
/// disables merging. Output order is deterministic.
inline PointCloud fuse_points(const std::vector<DepthMap>& depths, const std::vector<Camera>& cameras,
                              const std::vector<ImageF>& images = {}, double voxel_size = 0.0) {
  if (depths.size() != cameras.size()) throw std::invalid_argument("fuse_points: depth / camera count mismatch");
  if (!images.empty() && images.size() != depths.size())
    throw std::invalid_argument("fuse_points: image count mismatch");
  PointCloud raw;
  std::vector<std::array<double, 3>> raw_rgb;
  for (std::size_t v = 0; v < depths.size(); ++v) {
    const auto& dm = depths[v].depth;
    for (int y = 0; y < dm.height(); ++y)
      for (int x = 0; x < dm.width(); ++x) {
        const double d = dm(y, x);
        if (!(d > 0.0)) continue;
        raw.points.push_back(backproject(cameras[v], x, y, d));
        if (!images.empty()) {
          const auto& img = images[v];
          std::array<double, 3> c{};
          for (int k = 0; k < 3; ++k) c[static_cast<std::size_t>(k)] = img(y, x, img.channels() == 3 ? k : 0);
          raw_rgb.push_back(c);
        }
      }
  }
  auto to_rgb = [](const std::array<double, 3>& c) {
    Rgb out{};
    for (std::size_t k = 0; k < 3; ++k)
      out[k] = static_cast<std::uint8_t>(std::lround(std::clamp(c[k], 0.0, 1.0) * 255.0));
    return out;
  };
  if (!(voxel_size > 0.0)) {
    for (const auto& c : raw_rgb) raw.colors.push_back(to_rgb(c));
    return raw;
  }
  struct Acc {
    Vec3 sum = Vec3::Zero();
    std::array<double, 3> rgb{};
    std::size_t n = 0;
  };
  std::map<std::array<std::int64_t, 3>, Acc> voxels;
  for (std::size_t i = 0; i < raw.points.size(); ++i) {
    const Vec3& p = raw.points[i];
    const std::array<std::int64_t, 3> key{static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
                                          static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
                                          static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
    Acc& a = voxels[key];
    a.sum += p;
    if (!raw_rgb.empty())
      for (std::size_t k = 0; k < 3; ++k) a.rgb[k] += raw_rgb[i][k];
    ++a.n;
  }
  PointCloud out;
  for (const auto& [key, a] : voxels) {
    out.points.push_back(a.sum / static_cast<double>(a.n));
    if (!raw_rgb.empty()) {
      std::array<double, 3> c{};
      for (std::size_t k = 0; k < 3; ++k) c[k] = a.rgb[k] / static_cast<double>(a.n);
      out.colors.push_back(to_rgb(c));
    }
  }
  return out;
}

}  // namespace cmvs
