#pragma once

// Depth hypothesis planes: uniform sampling, expectation / spread of a
// probability volume, confidence-range refinement and the adaptive
// (softmax-weighted) interval adjustment used by the finer stages.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmvs/numerics.hpp"

namespace cmvs {

/// Per-pixel depth planes, n x H x W, strictly increasing along the plane axis.
struct HypothesisSet {
  VolumeF values;
  int planes() const { return values.planes(); }
  int height() const { return values.height(); }
  int width() const { return values.width(); }
};

/// Per-pixel distribution over hypothesis planes, n x H x W.
struct ProbabilityVolume {
  VolumeF values;
  int planes() const { return values.planes(); }
};

/// Softmax weights used to shift uniform planes, n x H x W.
struct OffsetVolume {
  VolumeF values;
};

struct DepthRangeMap {
  ImageF d_min;
  ImageF d_max;
  ImageF interval;
};

struct DepthMap {
  ImageF depth;
  ImageF sigma;
  ImageF confidence;

  int height() const { return depth.height(); }
  int width() const { return depth.width(); }
  static DepthMap zeros(int h, int w) { return {ImageF(h, w, 1), ImageF(h, w, 1), ImageF(h, w, 1)}; }
};

enum class AdiaMode { off, literal, concentrate };

inline std::string to_string(AdiaMode m) {
  switch (m) {
    case AdiaMode::off: return "off";
    case AdiaMode::literal: return "literal";
    case AdiaMode::concentrate: return "concentrate";
  }
  return "?";
}

inline AdiaMode adia_mode_from_string(const std::string& s) {
  if (s == "off") return AdiaMode::off;
  if (s == "literal") return AdiaMode::literal;
  if (s == "concentrate") return AdiaMode::concentrate;
  throw std::invalid_argument("unknown ADIA mode '" + s + "' (expected off|literal|concentrate)");
}

namespace detail {
inline void require_same_grid(const VolumeF& a, const VolumeF& b, const char* what) {
  if (a.planes() != b.planes() || a.height() != b.height() || a.width() != b.width())
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}
inline void require_same_grid(const VolumeF& a, const ImageF& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width())
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

/// Window of the requested half-width around center, shifted (not truncated)
/// to stay within [lo, hi]. Narrowed only if the global range itself is smaller.
inline std::pair<double, double> clamp_window(double center, double half, double lo, double hi) {
  const double width = std::min(2.0 * half, hi - lo);
  const double start = std::clamp(center - 0.5 * width, lo, hi - width);
  return {start, start + width};
}
}  // namespace detail

/// Range map with the same [d_min, d_max] at every pixel, split into n intervals.
inline DepthRangeMap constant_range(int h, int w, double d_min, double d_max, int n) {
  if (!(d_min < d_max)) throw std::invalid_argument("constant_range: d_min must be < d_max");
  if (n < 1) throw std::invalid_argument("constant_range: need at least one interval");
  return {ImageF(h, w, 1, static_cast<float>(d_min)), ImageF(h, w, 1, static_cast<float>(d_max)),
          ImageF(h, w, 1, static_cast<float>((d_max - d_min) / n))};
}

/// Planes at interval centers: H_i = d_min + (i + 0.5) * e, e = (d_max - d_min) / n.
inline HypothesisSet uniform_hypotheses(const DepthRangeMap& range, int n) {
  if (n < 2) throw std::invalid_argument("uniform_hypotheses: need at least 2 planes");
  const int h = range.d_min.height(), w = range.d_min.width();
  HypothesisSet out{VolumeF(n, h, w, 1)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double lo = range.d_min(y, x);
      const double e = (static_cast<double>(range.d_max(y, x)) - lo) / n;
      for (int i = 0; i < n; ++i) out.values(i, y, x) = static_cast<float>(lo + (i + 0.5) * e);
    }
  return out;
}

/// Expected depth sum_i H_i * P_i. Only the depth field of the result is set.
inline DepthMap regress_depth(const HypothesisSet& h, const ProbabilityVolume& p) {
  detail::require_same_grid(h.values, p.values, "regress_depth");
  const int n = h.planes();
  DepthMap out = DepthMap::zeros(h.height(), h.width());
  parallel_for(0, h.height(), [&](int y) {
    for (int x = 0; x < h.width(); ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += static_cast<double>(h.values(i, y, x)) * p.values(i, y, x);
      out.depth(y, x) = static_cast<float>(acc);
    }
  });
  return out;
}

/// Standard deviation of the plane distribution around the regressed depth.
inline ImageF depth_variance(const HypothesisSet& h, const ProbabilityVolume& p, const DepthMap& d) {
  detail::require_same_grid(h.values, p.values, "depth_variance");
  detail::require_same_grid(h.values, d.depth, "depth_variance");
  const int n = h.planes();
  ImageF sigma(h.height(), h.width(), 1);
  parallel_for(0, h.height(), [&](int y) {
    for (int x = 0; x < h.width(); ++x) {
      const double mean = d.depth(y, x);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        const double diff = static_cast<double>(h.values(i, y, x)) - mean;
        acc += static_cast<double>(p.values(i, y, x)) * diff * diff;
      }
      sigma(y, x) = static_cast<float>(std::sqrt(std::max(acc, 0.0)));
    }
  });
  return sigma;
}

struct RangeParams {
  /// Lower bound applied to sigma before it is used as a divisor.
  double sigma_floor = 1e-3;
  /// Nominal interval of the stage being set up; triggers the degeneracy guard.
  double stage_interval = 1.0;
  /// Interval used when a range is widened; <= 0 means stage_interval / n_next.
  double min_interval = 0.0;
};

/// Confidence range D +- lambda * sigma, kept inside [global_min, global_max].
/// When lambda * sigma < stage_interval / 2 the range is widened to n_next
/// steps of the minimum interval so it never collapses.
inline DepthRangeMap refine_range(const DepthMap& d, double lambda, double global_min, double global_max,
                                  int n_next, const RangeParams& params = {}) {
  if (!(lambda > 0.0)) throw std::invalid_argument("refine_range: lambda must be positive");
  if (n_next < 1) throw std::invalid_argument("refine_range: n_next must be >= 1");
  if (!(global_min < global_max)) throw std::invalid_argument("refine_range: empty global range");
  const double min_interval = params.min_interval > 0.0 ? params.min_interval : params.stage_interval / n_next;
  const double floor_half = 0.5 * n_next * min_interval;
  const int h = d.height(), w = d.width();
  DepthRangeMap out{ImageF(h, w, 1), ImageF(h, w, 1), ImageF(h, w, 1)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double half = lambda * d.sigma(y, x);
      if (!(half >= 0.5 * params.stage_interval)) half = std::max(half, floor_half);
      const auto [lo, hi] = detail::clamp_window(d.depth(y, x), half, global_min, global_max);
      out.d_min(y, x) = static_cast<float>(lo);
      out.d_max(y, x) = static_cast<float>(hi);
      out.interval(y, x) = static_cast<float>((static_cast<double>(out.d_max(y, x)) - out.d_min(y, x)) / n_next);
    }
  return out;
}

/// Fixed-width range D +- n * interval / 2 (the non-adaptive cascade schedule).
inline DepthRangeMap fixed_range(const DepthMap& d, double interval, int n, double global_min,
                                 double global_max) {
  if (!(interval > 0.0) || n < 1) throw std::invalid_argument("fixed_range: bad interval or plane count");
  const int h = d.height(), w = d.width();
  DepthRangeMap out{ImageF(h, w, 1), ImageF(h, w, 1), ImageF(h, w, 1)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto [lo, hi] = detail::clamp_window(d.depth(y, x), 0.5 * n * interval, global_min, global_max);
      out.d_min(y, x) = static_cast<float>(lo);
      out.d_max(y, x) = static_cast<float>(hi);
      out.interval(y, x) = static_cast<float>((static_cast<double>(out.d_max(y, x)) - out.d_min(y, x)) / n);
    }
  return out;
}

/// Softmax (over planes, per pixel) of the sigma-normalized plane distance to
/// the previous depth. `literal` scores (H - D) / sigma; `concentrate` scores
/// -|H - D| / sigma. sigma is floored at sigma_floor.
inline OffsetVolume adia_offsets(const HypothesisSet& h_uniform, const DepthMap& d_prev,
                                 double sigma_floor = 1e-3, AdiaMode mode = AdiaMode::literal) {
  detail::require_same_grid(h_uniform.values, d_prev.depth, "adia_offsets");
  if (mode == AdiaMode::off) throw std::invalid_argument("adia_offsets: mode must be literal or concentrate");
  const int n = h_uniform.planes();
  OffsetVolume out{VolumeF(n, h_uniform.height(), h_uniform.width(), 1)};
  parallel_for(0, h_uniform.height(), [&](int y) {
    std::vector<double> score(static_cast<std::size_t>(n));
    for (int x = 0; x < h_uniform.width(); ++x) {
      const double center = d_prev.depth(y, x);
      const double sigma = std::max(static_cast<double>(d_prev.sigma(y, x)), sigma_floor);
      double peak = -INFINITY;
      for (int i = 0; i < n; ++i) {
        const double z = (static_cast<double>(h_uniform.values(i, y, x)) - center) / sigma;
        score[static_cast<std::size_t>(i)] = mode == AdiaMode::literal ? z : -std::abs(z);
        peak = std::max(peak, score[static_cast<std::size_t>(i)]);
      }
      double sum = 0.0;
      for (auto& s : score) {
        s = std::exp(s - peak);
        sum += s;
      }
      for (int i = 0; i < n; ++i)
        out.values(i, y, x) = static_cast<float>(score[static_cast<std::size_t>(i)] / sum);
    }
  });
  return out;
}

/// Adjusted planes H_i + e * o_i. Adjacent gaps become e * (1 + o_{i+1} - o_i),
/// which is positive for offsets in (0, 1); a violation throws std::logic_error.
/// When sigma is tiny the gap can fall below float resolution (an offset
/// rounds to 1 and its neighbor to 0); the later plane then moves up one ulp.
inline HypothesisSet adia_hypotheses(const HypothesisSet& h_uniform, const ImageF& interval,
                                     const OffsetVolume& o) {
  detail::require_same_grid(h_uniform.values, o.values, "adia_hypotheses");
  detail::require_same_grid(h_uniform.values, interval, "adia_hypotheses");
  const int n = h_uniform.planes();
  HypothesisSet out{VolumeF(n, h_uniform.height(), h_uniform.width(), 1)};
  for (int y = 0; y < h_uniform.height(); ++y)
    for (int x = 0; x < h_uniform.width(); ++x) {
      const double e = interval(y, x);
      double prev = -INFINITY;
      for (int i = 0; i < n; ++i) {
        const double off = o.values(i, y, x);
        const double v = static_cast<double>(h_uniform.values(i, y, x)) + e * off;
        if (!(off >= 0.0 && off <= 1.0) || !(v >= prev))
          throw std::logic_error("adia_hypotheses: adjusted planes are not strictly increasing");
        prev = v;
        float f = static_cast<float>(v);
        if (i > 0 && !(f > out.values(i - 1, y, x))) f = std::nextafter(out.values(i - 1, y, x), INFINITY);
        out.values(i, y, x) = f;
      }
    }
  return out;
}

}  // namespace cmvs
