#pragma once

// Geometric depth embedding: the previous stage's depth is refined with an
// edge-aware filter guided by the reference image, lifted to a feature map by
// fixed 3x3 filters, added to the image features and passed through two fixed
// convolutions. Used at the finer stages only.

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cmvs/hypothesis.hpp"
#include "cmvs/matching.hpp"
#include "cmvs/numerics.hpp"

namespace cmvs {

struct FusedFeature {
  FeatureMap feature;
  bool gde_enabled = false;
};

struct RefineParams {
  double spatial_sigma = 2.0;   // pixels
  double range_sigma = 0.1;     // normalized intensity
  int radius = 2;               // 5x5 window
};

/// Joint-bilateral filter of the depth guided by the image intensity.
/// Each output is a convex combination of its window, so it stays within the
/// window's [min, max]. Sigma and confidence are passed through.
inline DepthMap refine_depth(const DepthMap& initial, const ImageF& guide, const RefineParams& params = {}) {
  if (!initial.depth.same_grid(guide)) throw std::invalid_argument("refine_depth: guide must match depth resolution");
  const ImageF gray = to_gray(guide);
  const int h = initial.height(), w = initial.width(), r = params.radius;
  const double inv_s = 1.0 / (2.0 * params.spatial_sigma * params.spatial_sigma);
  const double inv_r = 1.0 / (2.0 * params.range_sigma * params.range_sigma);
  DepthMap out = initial;
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const double center = gray(y, x);
      double num = 0.0, den = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          const double di = gray(yy, xx) - center;
          const double wt = std::exp(-(dx * dx + dy * dy) * inv_s - di * di * inv_r);
          num += wt * initial.depth(yy, xx);
          den += wt;
        }
      }
      out.depth(y, x) = static_cast<float>(num / den);
    }
  });
  return out;
}

/// Filters lifting a normalized depth map to feature channels: identity,
/// x / y gradients, four oriented line responses and a Laplacian.
inline std::vector<Kernel> depth_feature_kernels() {
  return {Kernel::identity(3),      detail::sobel_x(),      detail::sobel_y(),
          detail::line_horizontal(), detail::line_vertical(), detail::line_45(),
          detail::line_135(),        detail::laplacian()};
}

/// Depth normalized by the stage's global range [range_min, range_max] (times
/// gain), then convolved with the fixed depth kernels.
inline FeatureMap depth_to_feature(const ImageF& depth, int channels, double range_min, double range_max,
                                   double gain = 1.0) {
  const auto bank = depth_feature_kernels();
  if (channels != static_cast<int>(bank.size()))
    throw std::invalid_argument("depth_to_feature: channel count must match the image features (8)");
  if (!(range_min < range_max)) throw std::invalid_argument("depth_to_feature: empty depth range");
  ImageF normalized(depth.height(), depth.width(), 1);
  const double scale = gain / (range_max - range_min);
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      normalized(y, x) = static_cast<float>((depth(y, x) - range_min) * scale);
  FeatureMap out{ImageF(depth.height(), depth.width(), channels)};
  for (int c = 0; c < channels; ++c)
    detail::copy_channel(conv2d_fixed(normalized, bank[static_cast<std::size_t>(c)]), out.data, c);
  return out;
}

/// The two fixed fusion convolutions: 3x3 binomial smoothing followed by an
/// identity-dominant sharpening kernel. Linear; preserves constants.
inline ImageF fusion_transform(const ImageF& feat) {
  static const Kernel smooth(3, {1 / 16.0, 2 / 16.0, 1 / 16.0, 2 / 16.0, 4 / 16.0, 2 / 16.0, 1 / 16.0, 2 / 16.0,
                                 1 / 16.0});
  static const Kernel sharpen(3, {0, -0.25, 0, -0.25, 2.0, -0.25, 0, -0.25, 0});
  return conv2d_fixed(conv2d_fixed(feat, smooth), sharpen);
}

inline FusedFeature fuse(const FeatureMap& img_feat, const FeatureMap& depth_feat) {
  if (!img_feat.data.same_shape(depth_feat.data)) throw std::invalid_argument("fuse: feature shapes differ");
  ImageF sum = img_feat.data;
  auto dst = sum.data();
  const auto add = depth_feat.data.data();
  for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += add[k];
  return {{fusion_transform(sum), img_feat.view_id, img_feat.stage}, true};
}

/// GDE disabled: the image feature passes through untouched.
inline FusedFeature bypass(const FeatureMap& img_feat) { return {img_feat, false}; }

}  // namespace cmvs
