#pragma once

// Plane-sweep matching: fixed filter-bank features, warping of source features
// onto reference hypothesis planes, variance cost aggregation, separable cost
// smoothing and conversion to a per-pixel plane distribution.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "cmvs/camera.hpp"
#include "cmvs/hypothesis.hpp"
#include "cmvs/numerics.hpp"

namespace cmvs {

inline constexpr int kFeatureChannels = 8;

struct FeatureMap {
  ImageF data;
  int view_id = 0;
  int stage = 0;
};

struct CostVolume {
  VolumeF values;  // n x H x W x 1, lower is better
};

/// Per-plane sample validity of one warped source view.
using ValidityVolume = Volume<unsigned char>;

struct WarpedView {
  VolumeF values;        // n x H x W x C
  ValidityVolume valid;  // n x H x W
};

namespace detail {
inline Kernel scaled(Kernel k, double s) {
  for (auto& w : k.weights) w *= s;
  return k;
}

// Fixed 3x3 filters shared by image and depth featurization.
inline Kernel sobel_x() { return scaled(Kernel(3, {-1, 0, 1, -2, 0, 2, -1, 0, 1}), 1.0 / 8.0); }
inline Kernel sobel_y() { return scaled(Kernel(3, {-1, -2, -1, 0, 0, 0, 1, 2, 1}), 1.0 / 8.0); }
inline Kernel edge_45() { return scaled(Kernel(3, {-2, -1, 0, -1, 0, 1, 0, 1, 2}), 1.0 / 8.0); }
inline Kernel edge_135() { return scaled(Kernel(3, {0, -1, -2, 1, 0, -1, 2, 1, 0}), 1.0 / 8.0); }
inline Kernel line_horizontal() { return scaled(Kernel(3, {-1, -1, -1, 2, 2, 2, -1, -1, -1}), 1.0 / 6.0); }
inline Kernel line_vertical() { return scaled(Kernel(3, {-1, 2, -1, -1, 2, -1, -1, 2, -1}), 1.0 / 6.0); }
inline Kernel line_45() { return scaled(Kernel(3, {-1, -1, 2, -1, 2, -1, 2, -1, -1}), 1.0 / 6.0); }
inline Kernel line_135() { return scaled(Kernel(3, {2, -1, -1, -1, 2, -1, -1, -1, 2}), 1.0 / 6.0); }
inline Kernel laplacian() { return scaled(Kernel(3, {0, 1, 0, 1, -4, 1, 0, 1, 0}), 1.0 / 4.0); }

/// Zero-mean, unit-variance rescaling of one channel; constant channels become 0.
inline void standardize_channel(ImageF& img, int c) {
  const std::size_t n = img.pixel_count();
  double sum = 0.0, sq = 0.0;
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) sum += img(y, x, c);
  const double mean = sum / static_cast<double>(n);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double d = img(y, x, c) - mean;
      sq += d * d;
    }
  const double sd = std::sqrt(sq / static_cast<double>(n));
  const bool flat = !(sd > 1e-6);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      img(y, x, c) = flat ? 0.0f : static_cast<float>((img(y, x, c) - mean) / sd);
}

inline void copy_channel(const ImageF& src, ImageF& dst, int c) {
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) dst(y, x, c) = src(y, x);
}
}  // namespace detail

/// Eight-channel filter bank on an image already at stage resolution:
/// intensity, Sobel x / y, 3x3 mean, 3x3 standard deviation and three oriented
/// responses (45 and 135 degree edges, horizontal line). Each channel is
/// standardized over the image.
inline ImageF filter_bank_features(const ImageF& img) {
  const ImageF gray = to_gray(img);
  const int h = gray.height(), w = gray.width();
  ImageF out(h, w, kFeatureChannels);
  const ImageF mean = conv2d_fixed(gray, Kernel::box(3));
  ImageF squares = gray;
  for (auto& v : squares.storage()) v = v * v;
  const ImageF mean_sq = conv2d_fixed(squares, Kernel::box(3));
  ImageF stddev(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double var = static_cast<double>(mean_sq(y, x)) - static_cast<double>(mean(y, x)) * mean(y, x);
      stddev(y, x) = static_cast<float>(std::sqrt(std::max(var, 0.0)));
    }
  detail::copy_channel(gray, out, 0);
  detail::copy_channel(conv2d_fixed(gray, detail::sobel_x()), out, 1);
  detail::copy_channel(conv2d_fixed(gray, detail::sobel_y()), out, 2);
  detail::copy_channel(mean, out, 3);
  detail::copy_channel(stddev, out, 4);
  detail::copy_channel(conv2d_fixed(gray, detail::edge_45()), out, 5);
  detail::copy_channel(conv2d_fixed(gray, detail::edge_135()), out, 6);
  detail::copy_channel(conv2d_fixed(gray, detail::line_horizontal()), out, 7);
  for (int c = 0; c < kFeatureChannels; ++c) detail::standardize_channel(out, c);
  return out;
}

/// Features of a full-resolution image at the given stage scale.
inline FeatureMap extract_features(const ImageF& img, double scale, int view_id = 0, int stage = 0) {
  if (img.channels() != 1 && img.channels() != 3)
    throw std::invalid_argument("extract_features: image must be grayscale or RGB");
  return {filter_bank_features(pyramid_level(img, scale)), view_id, stage};
}

/// Samples src_feat at the reprojection of every reference pixel on every
/// hypothesis plane. Samples outside the source image or behind the source
/// camera are zero and flagged invalid.
inline WarpedView warp_features(const ImageF& src_feat, const Camera& ref, const Camera& src,
                                const HypothesisSet& h) {
  const int n = h.planes(), height = h.height(), width = h.width(), ch = src_feat.channels();
  WarpedView out{VolumeF(n, height, width, ch), ValidityVolume(n, height, width, 1)};
  const Reprojector rp(ref, src);
  parallel_for(0, height, [&](int y) {
    for (int x = 0; x < width; ++x) {
      const Vec3 ray = rp.ray(x, y);
      for (int i = 0; i < n; ++i) {
        Projection q;
        float* dst = &out.values(i, y, x);
        bool ok = rp.transfer(ray, h.values(i, y, x), q);
        ok = ok && bilinear_sample_into(src_feat, q.x, q.y, dst);
        if (!ok) std::fill_n(dst, ch, 0.0f);
        out.valid(i, y, x) = ok ? 1 : 0;
      }
    }
  });
  return out;
}

struct CostParams {
  /// Invalid cells cost sentinel_scale * (99th percentile of valid costs).
  double sentinel_scale = 10.0;
  /// Lower bound for the sentinel so degenerate (all-zero) volumes still penalize.
  double sentinel_floor = 1.0;
};

/// Variance over {reference} + {valid warped views} of the feature vectors,
/// averaged over channels. Cells with fewer than two valid views get a sentinel.
inline CostVolume variance_cost(const ImageF& ref_feat, std::span<const WarpedView> warped,
                                const CostParams& params = {}) {
  if (warped.empty()) throw std::invalid_argument("variance_cost: need at least one source view");
  const auto& first = warped.front().values;
  const int n = first.planes(), h = first.height(), w = first.width(), ch = first.channels();
  if (ref_feat.height() != h || ref_feat.width() != w || ref_feat.channels() != ch)
    throw std::invalid_argument("variance_cost: reference feature shape mismatch");
  for (const auto& v : warped)
    if (!v.values.same_shape(first)) throw std::invalid_argument("variance_cost: warped view shape mismatch");

  CostVolume out{VolumeF(n, h, w, 1)};
  Volume<unsigned char> invalid(n, h, w, 1);
  parallel_for(0, h, [&](int y) {
    std::vector<double> mean(static_cast<std::size_t>(ch));
    for (int i = 0; i < n; ++i)
      for (int x = 0; x < w; ++x) {
        const float* rf = ref_feat.pixel(y, x);
        int count = 1;
        for (int c = 0; c < ch; ++c) mean[static_cast<std::size_t>(c)] = rf[c];
        for (const auto& v : warped) {
          if (!v.valid(i, y, x)) continue;
          ++count;
          const float* f = &v.values(i, y, x);
          for (int c = 0; c < ch; ++c) mean[static_cast<std::size_t>(c)] += f[c];
        }
        if (count < 2) {
          invalid(i, y, x) = 1;
          continue;
        }
        for (auto& m : mean) m /= count;
        double acc = 0.0;
        for (int c = 0; c < ch; ++c) {
          const double d = rf[c] - mean[static_cast<std::size_t>(c)];
          acc += d * d;
        }
        for (const auto& v : warped) {
          if (!v.valid(i, y, x)) continue;
          const float* f = &v.values(i, y, x);
          for (int c = 0; c < ch; ++c) {
            const double d = f[c] - mean[static_cast<std::size_t>(c)];
            acc += d * d;
          }
        }
        out.values(i, y, x) = static_cast<float>(acc / count / ch);
      }
  });

  std::vector<double> valid_costs;
  valid_costs.reserve(out.values.size());
  for (std::size_t k = 0; k < out.values.size(); ++k)
    if (!invalid.data()[k]) valid_costs.push_back(out.values.data()[k]);
  double sentinel = params.sentinel_floor;
  if (!valid_costs.empty()) {
    auto p99 = valid_costs.begin() + static_cast<std::ptrdiff_t>(0.99 * (valid_costs.size() - 1));
    std::nth_element(valid_costs.begin(), p99, valid_costs.end());
    sentinel = std::max(params.sentinel_scale * *p99, params.sentinel_floor);
  }
  for (std::size_t k = 0; k < out.values.size(); ++k)
    if (invalid.data()[k]) out.values.data()[k] = static_cast<float>(sentinel);
  return out;
}

/// Separable smoothing: 3x3 Gaussian (sigma 1) per plane, then [1/4, 1/2, 1/4]
/// along the plane axis with replicated end planes.
inline CostVolume regularize(const CostVolume& c) {
  const int n = c.values.planes();
  VolumeF spatial(n, c.values.height(), c.values.width(), c.values.channels());
  const Kernel g = Kernel::gaussian(3, 1.0);
  for (int i = 0; i < n; ++i) spatial.set_plane(i, conv2d_fixed(c.values.plane(i), g));
  CostVolume out{VolumeF(n, c.values.height(), c.values.width(), c.values.channels())};
  const std::size_t stride = spatial.plane_stride();
  const auto src = spatial.data();
  auto dst = out.values.data();
  for (int i = 0; i < n; ++i) {
    const std::size_t prev = static_cast<std::size_t>(std::max(i - 1, 0)) * stride;
    const std::size_t cur = static_cast<std::size_t>(i) * stride;
    const std::size_t next = static_cast<std::size_t>(std::min(i + 1, n - 1)) * stride;
    for (std::size_t k = 0; k < stride; ++k)
      dst[cur + k] = static_cast<float>(0.25 * src[prev + k] + 0.5 * src[cur + k] + 0.25 * src[next + k]);
  }
  return out;
}

/// softmax over planes of -cost / temperature.
inline ProbabilityVolume cost_to_probability(const CostVolume& c, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("cost_to_probability: temperature must be positive");
  VolumeF scores = c.values;
  for (auto& v : scores.data()) v = static_cast<float>(-static_cast<double>(v) / temperature);
  return {softmax_over_planes(scores)};
}

/// Probability mass on the four planes nearest the regressed depth.
inline ImageF photometric_confidence(const ProbabilityVolume& p, const HypothesisSet& h, const DepthMap& d) {
  detail::require_same_grid(h.values, p.values, "photometric_confidence");
  detail::require_same_grid(h.values, d.depth, "photometric_confidence");
  const int n = h.planes();
  const int window = std::min(4, n);
  ImageF conf(h.height(), h.width(), 1);
  for (int y = 0; y < h.height(); ++y)
    for (int x = 0; x < h.width(); ++x) {
      const double target = d.depth(y, x);
      int nearest = 0;
      for (int i = 1; i < n; ++i)
        if (std::abs(h.values(i, y, x) - target) < std::abs(h.values(nearest, y, x) - target)) nearest = i;
      int lo = nearest, hi = nearest;
      while (hi - lo + 1 < window) {
        if (lo == 0) ++hi;
        else if (hi == n - 1) --lo;
        else if (std::abs(h.values(lo - 1, y, x) - target) <= std::abs(h.values(hi + 1, y, x) - target)) --lo;
        else ++hi;
      }
      double mass = 0.0;
      for (int i = lo; i <= hi; ++i) mass += p.values(i, y, x);
      conf(y, x) = static_cast<float>(std::clamp(mass, 0.0, 1.0));
    }
  return conf;
}

}  // namespace cmvs
