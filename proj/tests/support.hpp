#pragma once

// Shared helpers for the unit and acceptance tests: seeded random inputs and
// small brute-force references that do not reuse library code paths.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cmvs/camera.hpp"
#include "cmvs/numerics.hpp"
#include "cmvs/scene.hpp"

namespace cmvs::test {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline ImageF random_image(Rng& rng, int h, int w, int c, double lo = 0.0, double hi = 1.0) {
  ImageF img(h, w, c);
  for (auto& v : img.storage()) v = static_cast<float>(uniform(rng, lo, hi));
  return img;
}

inline Mat3 random_rotation(Rng& rng, double max_angle) {
  Vec3 axis(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
  if (axis.norm() < 1e-6) axis = Vec3::UnitY();
  return Eigen::AngleAxisd(uniform(rng, -max_angle, max_angle), axis.normalized()).toRotationMatrix();
}

inline Intrinsics random_intrinsics(Rng& rng) {
  Intrinsics k;
  k.fx = uniform(rng, 200, 600);
  k.fy = k.fx * uniform(rng, 0.9, 1.1);
  k.cx = uniform(rng, 100, 200);
  k.cy = uniform(rng, 80, 160);
  return k;
}

/// A reference camera at the origin and a source displaced and rotated
/// moderately, both looking down +z.
inline std::pair<Camera, Camera> random_pair(Rng& rng) {
  Camera ref(random_intrinsics(rng), Extrinsics{}, 1.0, 100.0);
  Extrinsics e;
  e.rotation = random_rotation(rng, 0.2);
  const Vec3 center(uniform(rng, -2, 2), uniform(rng, -2, 2), uniform(rng, -1, 1));
  e.translation = -e.rotation * center;
  Camera src(random_intrinsics(rng), e, 1.0, 100.0);
  return {ref, src};
}

/// Reference reprojection written out directly from the pinhole model.
inline Eigen::Vector2d reproject_oracle(const Camera& ref, const Camera& src, double x, double y, double d) {
  const auto& k = ref.intrinsics;
  const Vec3 cam_ref((x - k.cx) * d / k.fx, (y - k.cy) * d / k.fy, d);
  const Vec3 world = ref.extrinsics.rotation.transpose() * (cam_ref - ref.extrinsics.translation);
  const Vec3 cam_src = src.extrinsics.rotation * world + src.extrinsics.translation;
  const auto& ks = src.intrinsics;
  return {ks.fx * cam_src.x() / cam_src.z() + ks.cx, ks.fy * cam_src.y() / cam_src.z() + ks.cy};
}

/// Bilinear interpolation written from the four-corner formula, no clamping
/// of the cell (callers stay strictly inside).
inline double bilinear_oracle(const ImageF& img, double x, double y, int c = 0) {
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto at = [&](int yy, int xx) {
    return static_cast<double>(img(std::min(yy, img.height() - 1), std::min(xx, img.width() - 1), c));
  };
  return (1 - fx) * (1 - fy) * at(y0, x0) + fx * (1 - fy) * at(y0, x0 + 1) + (1 - fx) * fy * at(y0 + 1, x0) +
         fx * fy * at(y0 + 1, x0 + 1);
}

inline double brute_nearest(const Vec3& q, const std::vector<Vec3>& pts) {
  double best = INFINITY;
  for (const auto& p : pts) best = std::min(best, (p - q).norm());
  return best;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

/// Reference pixels whose surface is seen by source s away from depth edges:
/// visible within a 2-pixel neighborhood, outside the reference silhouette
/// band, and reprojecting to a source cell outside the source silhouette band.
inline Mask clean_pixels(const SceneSpec& spec, const std::vector<RenderedView>& views, std::size_t s) {
  const auto& ref = views[0];
  const Mask vis = visibility_mask(spec, ref, views[s].camera);
  const Mask band = discontinuity_band(ref.gt_depth, 2);
  const Mask src_band = discontinuity_band(views[s].gt_depth, 2);
  Mask out(spec.height, spec.width, 1);
  for (int y = 2; y < spec.height - 2; ++y)
    for (int x = 2; x < spec.width - 2; ++x) {
      bool ok = !band(y, x);
      for (int dy = -2; dy <= 2 && ok; ++dy)
        for (int dx = -2; dx <= 2 && ok; ++dx) ok = vis(y + dy, x + dx);
      if (!ok) continue;
      const auto p = reproject_oracle(ref.camera, views[s].camera, x, y, ref.gt_depth(y, x));
      if (!(p.x() >= 0 && p.y() >= 0 && p.x() < spec.width - 1 && p.y() < spec.height - 1)) continue;
      const int x0 = static_cast<int>(p.x()), y0 = static_cast<int>(p.y());
      if (src_band(y0, x0) || src_band(y0, x0 + 1) || src_band(y0 + 1, x0) || src_band(y0 + 1, x0 + 1)) continue;
      out(y, x) = 1;
    }
  return out;
}

/// Canonical rig with only the textured background plane.
inline SceneSpec plane_scene(const RigOptions& rig = {}, std::uint64_t seed = 7) {
  SceneSpec s = canonical_scene(rig, seed);
  s.geometry.resize(1);
  return s;
}

}  // namespace cmvs::test
