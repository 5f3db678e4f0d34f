#pragma once

// Pinhole cameras with world->camera extrinsics. Pixel centers sit on integer
// coordinates and the principal point uses the same convention.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>
#include <string>

namespace cmvs {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

/// Raised when a point lands on or behind a camera's image plane.
class BehindCameraError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 matrix() const {
    Mat3 k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }
  Mat3 inverse() const {
    Mat3 k;
    k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
    return k;
  }
  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(cx) || !std::isfinite(cy))
      throw std::invalid_argument("Intrinsics: focal lengths must be positive and finite");
  }
};

struct Extrinsics {
  Mat3 rotation = Mat3::Identity();     // world -> camera
  Vec3 translation = Vec3::Zero();

  Vec3 center() const { return -rotation.transpose() * translation; }

  void validate() const {
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-6 || std::abs(rotation.determinant() - 1.0) > 1e-6)
      throw std::invalid_argument("Extrinsics: rotation must be orthonormal with det 1");
    if (!translation.allFinite()) throw std::invalid_argument("Extrinsics: non-finite translation");
  }
};

struct Camera {
  Intrinsics intrinsics;
  Extrinsics extrinsics;
  double depth_min = 1.0;
  double depth_max = 2.0;

  Camera() = default;
  Camera(const Intrinsics& k, const Extrinsics& rt, double dmin, double dmax)
      : intrinsics(k), extrinsics(rt), depth_min(dmin), depth_max(dmax) {
    validate();
  }

  void validate() const {
    intrinsics.validate();
    extrinsics.validate();
    if (!(depth_min > 0.0) || !(depth_min < depth_max))
      throw std::invalid_argument("Camera: require 0 < depth_min < depth_max");
  }

  Vec3 to_camera(const Vec3& world) const {
    return extrinsics.rotation * world + extrinsics.translation;
  }
};

struct Projection {
  double x = 0.0;
  double y = 0.0;
  double depth = 0.0;
};

/// Pixel coordinates and camera-frame depth of a world point.
inline Projection project(const Camera& cam, const Vec3& world) {
  const Vec3 p = cam.to_camera(world);
  if (!(p.z() > 0.0)) throw BehindCameraError("project: point is behind the camera");
  const auto& k = cam.intrinsics;
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy, p.z()};
}

/// World point seen at pixel (x, y) at camera-frame depth d.
inline Vec3 backproject(const Camera& cam, double x, double y, double d) {
  if (!(d > 0.0)) throw std::invalid_argument("backproject: depth must be positive");
  const auto& k = cam.intrinsics;
  const Vec3 p((x - k.cx) / k.fx * d, (y - k.cy) / k.fy * d, d);
  return cam.extrinsics.rotation.transpose() * (p - cam.extrinsics.translation);
}

/// Precomputed ref -> src transfer. For a reference pixel the source-camera
/// point is affine in depth: q(d) = d * ray(x, y) + offset.
class Reprojector {
 public:
  Reprojector(const Camera& ref, const Camera& src) : src_k_(src.intrinsics) {
    const Mat3& r_ref = ref.extrinsics.rotation;
    const Mat3& r_src = src.extrinsics.rotation;
    relative_rotation_ = r_src * r_ref.transpose();
    offset_ = src.extrinsics.translation - relative_rotation_ * ref.extrinsics.translation;
    ray_map_ = relative_rotation_ * ref.intrinsics.inverse();
  }

  /// Source-camera direction for reference pixel (x, y), per unit reference depth.
  Vec3 ray(double x, double y) const { return ray_map_ * Vec3(x, y, 1.0); }
  const Vec3& offset() const { return offset_; }
  const Mat3& relative_rotation() const { return relative_rotation_; }

  /// Maps source-camera point q to source pixel coordinates; false if q.z <= 0.
  bool to_pixel(const Vec3& q, Projection& out) const {
    if (!(q.z() > 0.0)) return false;
    out = {src_k_.fx * q.x() / q.z() + src_k_.cx, src_k_.fy * q.y() / q.z() + src_k_.cy, q.z()};
    return true;
  }

  /// Source pixel and its derivative w.r.t. reference depth.
  bool transfer(const Vec3& ray, double d, Projection& out, double* dx_dd = nullptr,
                double* dy_dd = nullptr) const {
    const Vec3 q = d * ray + offset_;
    if (!to_pixel(q, out)) return false;
    const double inv_z2 = 1.0 / (q.z() * q.z());
    if (dx_dd) *dx_dd = src_k_.fx * (ray.x() * q.z() - q.x() * ray.z()) * inv_z2;
    if (dy_dd) *dy_dd = src_k_.fy * (ray.y() * q.z() - q.y() * ray.z()) * inv_z2;
    return true;
  }

 private:
  Intrinsics src_k_;
  Mat3 relative_rotation_;
  Vec3 offset_;
  Mat3 ray_map_;
};

/// Reference pixel (x, y) at reference depth d, expressed in the source view.
inline Projection reproject(const Camera& ref, const Camera& src, double x, double y, double d) {
  if (!(d > 0.0)) throw std::invalid_argument("reproject: depth must be positive");
  const Reprojector rp(ref, src);
  Projection out;
  if (!rp.transfer(rp.ray(x, y), d, out)) throw BehindCameraError("reproject: point is behind the source camera");
  return out;
}

/// d(src x)/dd and d(src y)/dd of reproject at (x, y, d).
inline Eigen::Vector2d reproject_depth_derivative(const Camera& ref, const Camera& src, double x,
                                                  double y, double d) {
  const Reprojector rp(ref, src);
  Projection out;
  double dx = 0.0, dy = 0.0;
  if (!rp.transfer(rp.ray(x, y), d, out, &dx, &dy))
    throw BehindCameraError("reproject: point is behind the source camera");
  return {dx, dy};
}

/// Homography induced by the reference fronto-parallel plane at depth d.
/// Unnormalized: H * (x, y, 1) has the source depth as its third coordinate.
inline Mat3 plane_homography(const Camera& ref, const Camera& src, double d) {
  if (!(d > 0.0)) throw std::invalid_argument("plane_homography: depth must be positive");
  const Reprojector rp(ref, src);
  Mat3 plane = d * rp.relative_rotation();
  plane.col(2) += rp.offset();
  return src.intrinsics.matrix() * plane * ref.intrinsics.inverse();
}

/// Rescales intrinsics for an image pyramid level; pixel x maps to factor * x.
inline Camera scale_camera(const Camera& cam, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("scale_camera: factor must be positive");
  Camera out = cam;
  out.intrinsics.fx *= factor;
  out.intrinsics.fy *= factor;
  out.intrinsics.cx *= factor;
  out.intrinsics.cy *= factor;
  return out;
}

/// World->camera rotation looking from eye toward target with the given up hint.
inline Extrinsics look_at(const Vec3& eye, const Vec3& target, const Vec3& up_hint = Vec3(0, -1, 0)) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up_hint);
  if (x.norm() < 1e-12) x = z.cross(Vec3(1, 0, 0));
  x.normalize();
  const Vec3 y = z.cross(x);
  Extrinsics e;
  e.rotation.row(0) = x.transpose();
  e.rotation.row(1) = y.transpose();
  e.rotation.row(2) = z.transpose();
  e.translation = -e.rotation * eye;
  return e;
}

}  // namespace cmvs
