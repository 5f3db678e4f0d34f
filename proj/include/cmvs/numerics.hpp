#pragma once

// Dense image / volume containers and the deterministic array operations the
// rest of the engine is built from. Storage is float; reductions run in double.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmvs/parallel.hpp"

namespace cmvs {

/// Row-major H x W x C image.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels = 1, T fill = T{})
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 0)
      throw std::invalid_argument("Image: negative dimension");
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }

  bool same_shape(const Image& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }
  template <typename U>
  bool same_grid(const Image<U>& o) const { return height_ == o.height() && width_ == o.width(); }

  std::size_t index(int y, int x, int c = 0) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  T& operator()(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  const T& operator()(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  T* pixel(int y, int x) { return data_.data() + index(y, x); }
  const T* pixel(int y, int x) const { return data_.data() + index(y, x); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool operator==(const Image& o) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

/// D x H x W x C volume; plane-major so each plane is a contiguous image.
template <typename T>
class Volume {
 public:
  Volume() = default;
  Volume(int planes, int height, int width, int channels = 1, T fill = T{})
      : planes_(planes), height_(height), width_(width), channels_(channels) {
    if (planes < 0 || height < 0 || width < 0 || channels < 0)
      throw std::invalid_argument("Volume: negative dimension");
    data_.assign(static_cast<std::size_t>(planes) * height * width * channels, fill);
  }

  int planes() const { return planes_; }
  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t plane_stride() const { return static_cast<std::size_t>(height_) * width_ * channels_; }

  bool same_shape(const Volume& o) const {
    return planes_ == o.planes_ && height_ == o.height_ && width_ == o.width_ &&
           channels_ == o.channels_;
  }

  std::size_t index(int d, int y, int x, int c = 0) const {
    return d * plane_stride() + (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  T& operator()(int d, int y, int x, int c = 0) { return data_[index(d, y, x, c)]; }
  const T& operator()(int d, int y, int x, int c = 0) const { return data_[index(d, y, x, c)]; }

  Image<T> plane(int d) const {
    Image<T> out(height_, width_, channels_);
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(d * plane_stride()), plane_stride(),
                out.storage().begin());
    return out;
  }
  void set_plane(int d, const Image<T>& img) {
    if (img.height() != height_ || img.width() != width_ || img.channels() != channels_)
      throw std::invalid_argument("Volume::set_plane: shape mismatch");
    std::copy(img.storage().begin(), img.storage().end(),
              data_.begin() + static_cast<std::ptrdiff_t>(d * plane_stride()));
  }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  bool operator==(const Volume& o) const = default;

 private:
  int planes_ = 0;
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using ImageF = Image<float>;
using VolumeF = Volume<float>;
using Mask = Image<unsigned char>;

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

/// Result of a bilinear lookup. An invalid sample carries an all-zero value.
struct SampleResult {
  std::vector<float> value;
  bool valid = false;
};

/// Bilinear lookup at continuous (x, y) with pixel centers on integers.
/// Writes img.channels() values into out; returns false (out zeroed) when
/// (x, y) lies outside [0, W-1] x [0, H-1]. When grad_x / grad_y are
/// non-null they receive the partial derivatives of each channel.
template <typename Out>
bool bilinear_sample_into(const ImageF& img, double x, double y, Out* out, double* grad_x = nullptr,
                          double* grad_y = nullptr) {
  const int channels = img.channels();
  const double max_x = img.width() - 1;
  const double max_y = img.height() - 1;
  // Coordinates a rounding error past the border snap onto it.
  constexpr double eps = 1e-6;
  if (x < 0.0 && x >= -eps) x = 0.0;
  if (y < 0.0 && y >= -eps) y = 0.0;
  if (x > max_x && x <= max_x + eps) x = max_x;
  if (y > max_y && y <= max_y + eps) y = max_y;
  if (!(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y)) {
    std::fill_n(out, channels, Out{});
    if (grad_x) std::fill_n(grad_x, channels, 0.0);
    if (grad_y) std::fill_n(grad_y, channels, 0.0);
    return false;
  }
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  // Keep the cell inside the image when sitting exactly on the last row/column.
  if (x0 > 0 && x0 >= img.width() - 1) x0 = img.width() - 2;
  if (y0 > 0 && y0 >= img.height() - 1) y0 = img.height() - 2;
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const float* p00 = img.pixel(y0, x0);
  const float* p01 = img.pixel(y0, x1);
  const float* p10 = img.pixel(y1, x0);
  const float* p11 = img.pixel(y1, x1);
  for (int c = 0; c < channels; ++c) {
    const double top = p00[c] + fx * (static_cast<double>(p01[c]) - p00[c]);
    const double bottom = p10[c] + fx * (static_cast<double>(p11[c]) - p10[c]);
    out[c] = static_cast<Out>(top + fy * (bottom - top));
    if (grad_x)
      grad_x[c] = (1.0 - fy) * (static_cast<double>(p01[c]) - p00[c]) +
                  fy * (static_cast<double>(p11[c]) - p10[c]);
    if (grad_y) grad_y[c] = bottom - top;
  }
  return true;
}

inline SampleResult bilinear_sample(const ImageF& img, double x, double y) {
  if (img.empty()) throw std::invalid_argument("bilinear_sample: empty image");
  SampleResult r;
  r.value.assign(static_cast<std::size_t>(img.channels()), 0.0f);
  r.valid = bilinear_sample_into(img, x, y, r.value.data());
  return r;
}

/// Square convolution kernel of odd size, row-major weights.
struct Kernel {
  int size = 1;
  std::vector<double> weights{1.0};

  Kernel() = default;
  Kernel(int k, std::vector<double> w) : size(k), weights(std::move(w)) {
    if (k <= 0 || k % 2 == 0) throw std::invalid_argument("Kernel: size must be odd");
    if (weights.size() != static_cast<std::size_t>(k * k))
      throw std::invalid_argument("Kernel: weight count must be k*k");
  }
  double operator()(int dy, int dx) const {
    const int r = size / 2;
    return weights[static_cast<std::size_t>((dy + r) * size + (dx + r))];
  }

  static Kernel identity(int k = 3) {
    std::vector<double> w(static_cast<std::size_t>(k * k), 0.0);
    w[w.size() / 2] = 1.0;
    return Kernel(k, std::move(w));
  }
  static Kernel box(int k = 3) {
    return Kernel(k, std::vector<double>(static_cast<std::size_t>(k * k), 1.0 / (k * k)));
  }
  static Kernel gaussian(int k, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(k * k));
    const int r = k / 2;
    double sum = 0.0;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        w[static_cast<std::size_t>((dy + r) * k + dx + r)] = v;
        sum += v;
      }
    for (auto& v : w) v /= sum;
    return Kernel(k, std::move(w));
  }
};

/// Per-channel 2D correlation with replicate padding; output keeps the input size.
inline ImageF conv2d_fixed(const ImageF& img, const Kernel& kernel) {
  if (kernel.size % 2 == 0) throw std::invalid_argument("conv2d_fixed: kernel size must be odd");
  const int h = img.height(), w = img.width(), ch = img.channels();
  const int r = kernel.size / 2;
  ImageF out(h, w, ch);
  parallel_for(0, h, [&](int y) {
    std::vector<double> acc(static_cast<std::size_t>(ch));
    for (int x = 0; x < w; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -r; dx <= r; ++dx) {
          const double k = kernel(dy, dx);
          if (k == 0.0) continue;
          const float* p = img.pixel(yy, std::clamp(x + dx, 0, w - 1));
          for (int c = 0; c < ch; ++c) acc[static_cast<std::size_t>(c)] += k * p[c];
        }
      }
      float* o = out.pixel(y, x);
      for (int c = 0; c < ch; ++c) o[c] = static_cast<float>(acc[static_cast<std::size_t>(c)]);
    }
  });
  return out;
}

/// Softmax along the plane axis, independently per (pixel, channel).
inline VolumeF softmax_over_planes(const VolumeF& v) {
  if (v.planes() < 1) throw std::invalid_argument("softmax_over_planes: need at least one plane");
  VolumeF out(v.planes(), v.height(), v.width(), v.channels());
  const int n = v.planes();
  const std::size_t stride = v.plane_stride();
  const auto in = v.data();
  auto dst = out.data();
  parallel_for(0, v.height(), [&](int y) {
    std::vector<double> e(static_cast<std::size_t>(n));
    const std::size_t row = static_cast<std::size_t>(y) * v.width() * v.channels();
    for (std::size_t k = row; k < row + static_cast<std::size_t>(v.width()) * v.channels(); ++k) {
      double peak = in[k];
      for (int d = 1; d < n; ++d) peak = std::max(peak, static_cast<double>(in[k + d * stride]));
      double sum = 0.0;
      for (int d = 0; d < n; ++d) {
        e[static_cast<std::size_t>(d)] = std::exp(static_cast<double>(in[k + d * stride]) - peak);
        sum += e[static_cast<std::size_t>(d)];
      }
      for (int d = 0; d < n; ++d)
        dst[k + d * stride] = static_cast<float>(e[static_cast<std::size_t>(d)] / sum);
    }
  });
  return out;
}

/// Bilinear resize with corner-aligned coordinates: output corners land on
/// input corners, so dst (x, y) samples src at x * (W-1)/(W'-1).
inline ImageF resize_bilinear(const ImageF& img, int new_h, int new_w) {
  if (new_h < 1 || new_w < 1) throw std::invalid_argument("resize_bilinear: target dims must be >= 1");
  if (img.empty()) throw std::invalid_argument("resize_bilinear: empty image");
  if (new_h == img.height() && new_w == img.width()) return img;
  const double sx = new_w > 1 ? double(img.width() - 1) / (new_w - 1) : 0.0;
  const double sy = new_h > 1 ? double(img.height() - 1) / (new_h - 1) : 0.0;
  const double ox = new_w > 1 ? 0.0 : 0.5 * (img.width() - 1);
  const double oy = new_h > 1 ? 0.0 : 0.5 * (img.height() - 1);
  ImageF out(new_h, new_w, img.channels());
  parallel_for(0, new_h, [&](int y) {
    for (int x = 0; x < new_w; ++x) {
      const double src_x = std::min(ox + x * sx, double(img.width() - 1));
      const double src_y = std::min(oy + y * sy, double(img.height() - 1));
      bilinear_sample_into(img, src_x, src_y, out.pixel(y, x));
    }
  });
  return out;
}

/// Resamples so that output pixel (x, y) reads input (x * ratio, y * ratio),
/// clamped to the image. With ratio = 1/scale this matches a camera whose
/// intrinsics were multiplied by `scale`.
inline ImageF resample_scaled(const ImageF& img, int new_h, int new_w, double ratio) {
  if (new_h < 1 || new_w < 1) throw std::invalid_argument("resample_scaled: target dims must be >= 1");
  ImageF out(new_h, new_w, img.channels());
  parallel_for(0, new_h, [&](int y) {
    for (int x = 0; x < new_w; ++x) {
      const double src_x = std::clamp(x * ratio, 0.0, double(img.width() - 1));
      const double src_y = std::clamp(y * ratio, 0.0, double(img.height() - 1));
      bilinear_sample_into(img, src_x, src_y, out.pixel(y, x));
    }
  });
  return out;
}

/// Separable Gaussian blur with replicate padding.
inline ImageF gaussian_blur(const ImageF& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> taps(static_cast<std::size_t>(2 * r + 1));
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    taps[static_cast<std::size_t>(i + r)] = std::exp(-i * i / (2.0 * sigma * sigma));
    sum += taps[static_cast<std::size_t>(i + r)];
  }
  for (auto& t : taps) t /= sum;
  const int h = img.height(), w = img.width(), ch = img.channels();
  ImageF tmp(h, w, ch), out(h, w, ch);
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          acc += taps[static_cast<std::size_t>(i + r)] * img(y, std::clamp(x + i, 0, w - 1), c);
        tmp(y, x, c) = static_cast<float>(acc);
      }
  });
  parallel_for(0, h, [&](int y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i)
          acc += taps[static_cast<std::size_t>(i + r)] * tmp(std::clamp(y + i, 0, h - 1), x, c);
        out(y, x, c) = static_cast<float>(acc);
      }
  });
  return out;
}

/// Image size of a pyramid level sampled at x / scale.
inline int scaled_extent(int full, double scale) {
  return static_cast<int>(std::floor((full - 1) * scale + 1e-9)) + 1;
}

/// Anti-aliased pyramid level consistent with scale_camera(cam, scale).
inline ImageF pyramid_level(const ImageF& img, double scale) {
  if (scale <= 0.0) throw std::invalid_argument("pyramid_level: scale must be positive");
  if (scale == 1.0) return img;
  const ImageF smooth = scale < 1.0 ? gaussian_blur(img, 0.5 / scale) : img;
  return resample_scaled(smooth, scaled_extent(img.height(), scale), scaled_extent(img.width(), scale),
                         1.0 / scale);
}

/// Point-samples a single-channel map at x / scale (nearest), for ground-truth
/// depth where interpolating across discontinuities would invent surfaces.
inline ImageF nearest_level(const ImageF& img, double scale) {
  const int h = scaled_extent(img.height(), scale);
  const int w = scaled_extent(img.width(), scale);
  ImageF out(h, w, img.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sy = std::clamp(static_cast<int>(std::lround(y / scale)), 0, img.height() - 1);
      const int sx = std::clamp(static_cast<int>(std::lround(x / scale)), 0, img.width() - 1);
      for (int c = 0; c < img.channels(); ++c) out(y, x, c) = img(sy, sx, c);
    }
  return out;
}

/// Mean over channels, producing a single-channel image.
inline ImageF to_gray(const ImageF& img) {
  if (img.channels() == 1) return img;
  ImageF out(img.height(), img.width(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double s = 0.0;
      for (int c = 0; c < img.channels(); ++c) s += img(y, x, c);
      out(y, x) = static_cast<float>(s / img.channels());
    }
  return out;
}

/// Median of a copy of the values (lower median for even counts).
inline double median_of(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median_of: empty input");
  auto mid = values.begin() + static_cast<std::ptrdiff_t>((values.size() - 1) / 2);
  std::nth_element(values.begin(), mid, values.end());
  return *mid;
}

}  // namespace cmvs
