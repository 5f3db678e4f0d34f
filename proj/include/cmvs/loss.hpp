#pragma once

// Depth supervision: masked L1, the image-synthesis loss (source images
// re-synthesized on the reference grid from predicted vs ground-truth depth),
// the weighted multi-stage total, and a finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cmvs/camera.hpp"
#include "cmvs/hypothesis.hpp"
#include "cmvs/numerics.hpp"

namespace cmvs {

using GradientMap = Image<double>;

struct ValidMask {
  Mask mask;
  std::size_t count = 0;

  static ValidMask from(Mask m) {
    ValidMask v{std::move(m), 0};
    v.recount();
    return v;
  }
  void recount() {
    count = static_cast<std::size_t>(std::count_if(mask.storage().begin(), mask.storage().end(),
                                                   [](unsigned char b) { return b != 0; }));
  }
};

/// A source image with its camera, at the resolution the loss runs at.
struct SourceImage {
  ImageF image;
  Camera camera;
};

struct Synthesis {
  Image<double> image;       // reference grid, source channels
  ValidMask mask;
  Image<double> d_image_dd;  // per-channel derivative w.r.t. the reference depth
};

/// Inverse-warps src_img onto the reference grid using the given reference
/// depth. A pixel is valid iff its depth is positive, the point is in front of
/// the source camera and the sample lies inside the source image.
inline Synthesis synthesize(const ImageF& src_img, const Camera& ref, const Camera& src, const ImageF& depth,
                            bool with_derivative = false) {
  const int h = depth.height(), w = depth.width(), ch = src_img.channels();
  Synthesis out{Image<double>(h, w, ch), ValidMask{Mask(h, w, 1), 0}, {}};
  if (with_derivative) out.d_image_dd = Image<double>(h, w, ch);
  const Reprojector rp(ref, src);
  parallel_for(0, h, [&](int y) {
    std::vector<double> gx(static_cast<std::size_t>(ch)), gy(static_cast<std::size_t>(ch));
    for (int x = 0; x < w; ++x) {
      const double d = depth(y, x);
      double* dst = out.image.pixel(y, x);
      bool ok = d > 0.0 && std::isfinite(d);
      Projection q;
      double dx_dd = 0.0, dy_dd = 0.0;
      ok = ok && rp.transfer(rp.ray(x, y), d, q, &dx_dd, &dy_dd);
      ok = ok && bilinear_sample_into(src_img, q.x, q.y, dst, gx.data(), gy.data());
      if (!ok) std::fill_n(dst, ch, 0.0);
      out.mask.mask(y, x) = ok ? 1 : 0;
      if (with_derivative)
        for (int c = 0; c < ch; ++c)
          out.d_image_dd(y, x, c) = ok ? gx[static_cast<std::size_t>(c)] * dx_dd + gy[static_cast<std::size_t>(c)] * dy_dd : 0.0;
    }
  });
  out.mask.recount();
  return out;
}

/// Float image plus validity mask, as stored by the rest of the engine.
inline std::pair<ImageF, ValidMask> synthesize_view(const ImageF& src_img, const Camera& ref, const Camera& src,
                                                    const DepthMap& depth) {
  Synthesis s = synthesize(src_img, ref, src, depth.depth);
  ImageF img(s.image.height(), s.image.width(), s.image.channels());
  std::transform(s.image.storage().begin(), s.image.storage().end(), img.storage().begin(),
                 [](double v) { return static_cast<float>(v); });
  return {std::move(img), std::move(s.mask)};
}

/// Logical AND of the three validity sources.
inline ValidMask compute_mask(const ValidMask& pred_synth, const ValidMask& gt_synth, const Mask& gt_depth_valid) {
  if (!pred_synth.mask.same_grid(gt_synth.mask) || !pred_synth.mask.same_grid(gt_depth_valid))
    throw std::invalid_argument("compute_mask: resolution mismatch");
  Mask m(pred_synth.mask.height(), pred_synth.mask.width(), 1);
  for (std::size_t k = 0; k < m.size(); ++k)
    m.storage()[k] = (pred_synth.mask.storage()[k] && gt_synth.mask.storage()[k] && gt_depth_valid.storage()[k]) ? 1 : 0;
  return ValidMask::from(std::move(m));
}

/// Pixels with a finite, positive depth.
inline Mask positive_depth_mask(const ImageF& depth) {
  Mask m(depth.height(), depth.width(), 1);
  for (std::size_t k = 0; k < m.size(); ++k) {
    const float d = depth.storage()[k];
    m.storage()[k] = (std::isfinite(d) && d > 0.0f) ? 1 : 0;
  }
  return m;
}

struct LossValue {
  double value = 0.0;
  GradientMap gradient;  // d value / d predicted depth, per pixel
  bool empty = false;    // no valid pixel contributed
};

/// Image-synthesis loss: for every source, the masked L1 difference between
/// the view synthesized from pred_depth and from gt_depth, normalized by the
/// mask count of that source. Only the predicted branch carries gradient.
inline LossValue is_loss(const ImageF& pred_depth, const ImageF& gt_depth, const Camera& ref,
                         std::span<const SourceImage> sources) {
  if (sources.empty()) throw std::invalid_argument("is_loss: need at least one source image");
  if (!pred_depth.same_grid(gt_depth)) throw std::invalid_argument("is_loss: depth maps differ in size");
  const int h = pred_depth.height(), w = pred_depth.width();
  LossValue out{0.0, GradientMap(h, w, 1, 0.0), true};
  const Mask gt_valid = positive_depth_mask(gt_depth);
  for (const auto& src : sources) {
    const Synthesis pred = synthesize(src.image, ref, src.camera, pred_depth, true);
    const Synthesis truth = synthesize(src.image, ref, src.camera, gt_depth);
    const ValidMask m = compute_mask(pred.mask, truth.mask, gt_valid);
    if (m.count == 0) continue;
    out.empty = false;
    const double inv_m = 1.0 / static_cast<double>(m.count);
    const int ch = src.image.channels();
    double view_sum = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!m.mask(y, x)) continue;
        double g = 0.0;
        for (int c = 0; c < ch; ++c) {
          const double diff = pred.image(y, x, c) - truth.image(y, x, c);
          view_sum += std::abs(diff);
          const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
          g += sign * pred.d_image_dd(y, x, c);
        }
        out.gradient(y, x) += g * inv_m;
      }
    out.value += view_sum * inv_m;
  }
  return out;
}

inline LossValue is_loss(const DepthMap& pred, const DepthMap& gt, const Camera& ref,
                         std::span<const SourceImage> sources) {
  return is_loss(pred.depth, gt.depth, ref, sources);
}

/// Mean absolute depth error over valid pixels, with its subgradient.
/// No valid pixel gives value 0 and empty = true.
inline LossValue l1_loss(const ImageF& pred, const ImageF& gt, const Mask& valid) {
  if (!pred.same_grid(gt) || !pred.same_grid(valid)) throw std::invalid_argument("l1_loss: shape mismatch");
  LossValue out{0.0, GradientMap(pred.height(), pred.width(), 1, 0.0), false};
  std::size_t m = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (!valid.storage()[k]) continue;
    ++m;
    sum += std::abs(static_cast<double>(pred.storage()[k]) - gt.storage()[k]);
  }
  if (m == 0) {
    out.empty = true;
    return out;
  }
  out.value = sum / static_cast<double>(m);
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (!valid.storage()[k]) continue;
    const double diff = static_cast<double>(pred.storage()[k]) - gt.storage()[k];
    out.gradient.storage()[k] = (diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0)) / static_cast<double>(m);
  }
  return out;
}

struct StageLoss {
  double l1 = 0.0;
  double is = 0.0;
};

struct LossBreakdown {
  std::vector<StageLoss> stages;
  double lambda1 = 1.0;
  double lambda2 = 0.1;
  double total = 0.0;
};

/// Weighted sum over the three stages: sum_a (lambda1 * L1_a + lambda2 * IS_a).
inline LossBreakdown total_loss(std::span<const StageLoss> stages, double lambda1, double lambda2) {
  if (stages.size() != 3) throw std::invalid_argument("total_loss: expected three stages");
  LossBreakdown out{{stages.begin(), stages.end()}, lambda1, lambda2, 0.0};
  for (const auto& s : stages) out.total += lambda1 * s.l1 + lambda2 * s.is;
  return out;
}

struct ProbePixel {
  int x = 0;
  int y = 0;
};

struct GradientCheck {
  double max_relative_error = 0.0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// Depth -> (value, gradient) functional checked by finite_diff_check.
using LossFunctional = std::function<LossValue(const ImageF&)>;

/// Central differences at each probe against the analytic gradient. The
/// perturbed depths are stored as float, so the step actually taken is
/// recovered from the stored values. Relative error uses
/// max(|analytic|, |numeric|, 1e-8) as denominator.
inline GradientCheck finite_diff_check(const LossFunctional& loss_eval, const ImageF& depth,
                                       std::span<const ProbePixel> probes, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  const LossValue base = loss_eval(depth);
  GradientCheck out;
  ImageF work = depth;
  for (const auto& p : probes) {
    const float original = work(p.y, p.x);
    const float plus = static_cast<float>(original + step);
    const float minus = static_cast<float>(original - step);
    work(p.y, p.x) = plus;
    const double f_plus = loss_eval(work).value;
    work(p.y, p.x) = minus;
    const double f_minus = loss_eval(work).value;
    work(p.y, p.x) = original;
    const double numeric = (f_plus - f_minus) / (static_cast<double>(plus) - static_cast<double>(minus));
    const double analytic = base.gradient(p.y, p.x);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    out.max_relative_error = std::max(out.max_relative_error, std::abs(analytic - numeric) / denom);
    out.analytic.push_back(analytic);
    out.numeric.push_back(numeric);
  }
  return out;
}

/// True when the reprojection of (x, y) into every source stays at least `tol`
/// pixels from the bilinear lattice over [d - step, d + step], no validity
/// flips and no |pred - truth| sign change occurs in that interval. The IS-loss
/// gradient is smooth at such pixels.
inline bool is_loss_smooth_at(const ImageF& pred_depth, const ImageF& gt_depth, const Camera& ref,
                              std::span<const SourceImage> sources, int x, int y, double step, double tol = 1e-3) {
  const double d = pred_depth(y, x);
  const double dg = gt_depth(y, x);
  if (!(d - step > 0.0) || !(dg > 0.0)) return false;
  auto frac_dist = [](double v) { return std::abs(v - std::round(v)); };
  for (const auto& src : sources) {
    const Reprojector rp(ref, src.camera);
    const Vec3 ray = rp.ray(x, y);
    Projection lo, hi, truth;
    if (!rp.transfer(ray, d - step, lo) || !rp.transfer(ray, d + step, hi) || !rp.transfer(ray, dg, truth))
      return false;
    const int ch = src.image.channels();
    std::vector<double> a(static_cast<std::size_t>(ch)), b(static_cast<std::size_t>(ch)), t(static_cast<std::size_t>(ch));
    const bool va = bilinear_sample_into(src.image, lo.x, lo.y, a.data());
    const bool vb = bilinear_sample_into(src.image, hi.x, hi.y, b.data());
    const bool vt = bilinear_sample_into(src.image, truth.x, truth.y, t.data());
    if (va != vb) return false;
    if (!va || !vt) continue;
    if (std::floor(lo.x) != std::floor(hi.x) || std::floor(lo.y) != std::floor(hi.y)) return false;
    for (const auto& q : {lo, hi})
      if (frac_dist(q.x) < tol || frac_dist(q.y) < tol) return false;
    for (int c = 0; c < ch; ++c) {
      const double da = a[static_cast<std::size_t>(c)] - t[static_cast<std::size_t>(c)];
      const double db = b[static_cast<std::size_t>(c)] - t[static_cast<std::size_t>(c)];
      if (da * db <= 0.0) return false;
    }
  }
  return true;
}

}  // namespace cmvs
