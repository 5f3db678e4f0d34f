#pragma once

// Ray-cast synthetic scenes with exact ground truth: textured planes, spheres
// and oriented boxes under fixed Lambertian lighting, so colors depend only on
// the surface point and agree across views up to occlusion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cmvs/camera.hpp"
#include "cmvs/fusion_eval.hpp"
#include "cmvs/numerics.hpp"

namespace cmvs {

struct Texture {
  enum class Kind { value_noise, checker, constant };
  Kind kind = Kind::value_noise;
  double cell = 10.0;               // world units per noise lattice cell / checker square
  Vec3 base_color{0.8, 0.8, 0.8};
  double contrast = 0.75;           // fraction of the albedo driven by the pattern
  std::uint64_t seed = 1;
};

struct PlanePrim {
  Vec3 point;
  Vec3 normal;
  Texture texture;
};

struct SpherePrim {
  Vec3 center;
  double radius = 1.0;
  Texture texture;
};

/// Box with half extents along the rows of `rotation` (world -> box frame).
struct BoxPrim {
  Vec3 center;
  Vec3 half_extents;
  Mat3 rotation = Mat3::Identity();
  Texture texture;
};

using Primitive = std::variant<PlanePrim, SpherePrim, BoxPrim>;

struct SceneSpec {
  std::vector<Primitive> geometry;
  std::vector<Camera> cameras;  // reference first, then sources
  int width = 320;
  int height = 256;
  std::uint64_t seed = 7;
  Vec3 light_dir{0.3, -0.5, -0.8};
  double ambient = 0.45;
};

struct RenderedView {
  ImageF image;     // RGB in [0, 1]
  ImageF gt_depth;  // camera-frame z; 0 where nothing is hit
  Camera camera;
  Mask valid;       // 1 where a surface is hit
};

struct Hit {
  double depth = std::numeric_limits<double>::infinity();
  Vec3 point;
  Vec3 normal;
  int primitive = -1;
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline double lattice(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(x));
  h = mix64(h ^ static_cast<std::uint64_t>(y));
  h = mix64(h ^ static_cast<std::uint64_t>(z));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

inline double quintic(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

/// Smooth 3D value noise in [0, 1] with one lattice point per `cell` units.
inline double value_noise(const Vec3& p, double cell, std::uint64_t seed) {
  const Vec3 q = p / cell;
  const double fx = std::floor(q.x()), fy = std::floor(q.y()), fz = std::floor(q.z());
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy), iz = static_cast<std::int64_t>(fz);
  const double tx = quintic(q.x() - fx), ty = quintic(q.y() - fy), tz = quintic(q.z() - fz);
  double c[2][2][2];
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int d = 0; d < 2; ++d) c[a][b][d] = lattice(ix + a, iy + b, iz + d, seed);
  auto lerp = [](double u, double v, double t) { return u + (v - u) * t; };
  const double x00 = lerp(c[0][0][0], c[1][0][0], tx), x10 = lerp(c[0][1][0], c[1][1][0], tx);
  const double x01 = lerp(c[0][0][1], c[1][0][1], tx), x11 = lerp(c[0][1][1], c[1][1][1], tx);
  return lerp(lerp(x00, x10, ty), lerp(x01, x11, ty), tz);
}

inline Vec3 albedo(const Texture& t, const Vec3& p) {
  Vec3 rgb;
  for (int c = 0; c < 3; ++c) {
    double pattern = 0.5;
    switch (t.kind) {
      case Texture::Kind::value_noise:
        pattern = (2.0 * value_noise(p, t.cell, t.seed * 3 + static_cast<std::uint64_t>(c)) +
                   value_noise(p, 0.5 * t.cell, t.seed * 3 + 1000 + static_cast<std::uint64_t>(c))) / 3.0;
        break;
      case Texture::Kind::checker: {
        const auto s = static_cast<std::int64_t>(std::floor(p.x() / t.cell) + std::floor(p.y() / t.cell) +
                                                 std::floor(p.z() / t.cell));
        pattern = (s & 1) ? 1.0 : 0.0;
        break;
      }
      case Texture::Kind::constant:
        break;
    }
    rgb[c] = t.base_color[c] * ((1.0 - t.contrast) + t.contrast * pattern);
  }
  return rgb;
}

inline const Texture& texture_of(const Primitive& p) {
  return std::visit([](const auto& prim) -> const Texture& { return prim.texture; }, p);
}

/// Smallest t > eps with origin + t * dir on the primitive.
inline std::optional<std::pair<double, Vec3>> intersect(const Primitive& prim, const Vec3& o, const Vec3& dir,
                                                        double eps) {
  if (const auto* pl = std::get_if<PlanePrim>(&prim)) {
    const double denom = pl->normal.dot(dir);
    if (std::abs(denom) < 1e-15) return std::nullopt;
    const double t = pl->normal.dot(pl->point - o) / denom;
    if (!(t > eps)) return std::nullopt;
    return std::pair{t, pl->normal.normalized()};
  }
  if (const auto* sp = std::get_if<SpherePrim>(&prim)) {
    const Vec3 oc = o - sp->center;
    const double a = dir.squaredNorm(), b = oc.dot(dir), c = oc.squaredNorm() - sp->radius * sp->radius;
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    const double root = std::sqrt(disc);
    double t = (-b - root) / a;
    if (!(t > eps)) t = (-b + root) / a;
    if (!(t > eps)) return std::nullopt;
    return std::pair{t, ((o + t * dir) - sp->center).normalized()};
  }
  const auto& bx = std::get<BoxPrim>(prim);
  const Vec3 lo = bx.rotation * (o - bx.center);
  const Vec3 ld = bx.rotation * dir;
  double t_near = -std::numeric_limits<double>::infinity(), t_far = std::numeric_limits<double>::infinity();
  int axis_near = 0, axis_far = 0;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(ld[a]) < 1e-15) {
      if (std::abs(lo[a]) > bx.half_extents[a]) return std::nullopt;
      continue;
    }
    double t1 = (-bx.half_extents[a] - lo[a]) / ld[a];
    double t2 = (bx.half_extents[a] - lo[a]) / ld[a];
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > t_near) {
      t_near = t1;
      axis_near = a;
    }
    if (t2 < t_far) {
      t_far = t2;
      axis_far = a;
    }
  }
  if (t_near > t_far) return std::nullopt;
  double t = t_near;
  int axis = axis_near;
  if (!(t > eps)) {
    t = t_far;
    axis = axis_far;
  }
  if (!(t > eps)) return std::nullopt;
  Vec3 n_local = Vec3::Zero();
  n_local[axis] = (lo[axis] + t * ld[axis]) > 0.0 ? 1.0 : -1.0;
  return std::pair{t, Vec3(bx.rotation.transpose() * n_local)};
}

inline bool contains(const Primitive& prim, const Vec3& p) {
  if (const auto* sp = std::get_if<SpherePrim>(&prim)) return (p - sp->center).norm() < sp->radius;
  if (const auto* bx = std::get_if<BoxPrim>(&prim)) {
    const Vec3 l = bx->rotation * (p - bx->center);
    return (l.cwiseAbs() - bx->half_extents).maxCoeff() < 0.0;
  }
  return false;
}
}  // namespace detail

/// Nearest surface along the ray through pixel (x, y). With the ray direction
/// scaled to unit camera-frame z, the hit parameter equals camera depth.
inline Hit cast_ray(const SceneSpec& spec, const Camera& cam, double x, double y) {
  const Vec3 origin = cam.extrinsics.center();
  const Vec3 dir = cam.extrinsics.rotation.transpose() * (cam.intrinsics.inverse() * Vec3(x, y, 1.0));
  Hit best;
  for (std::size_t i = 0; i < spec.geometry.size(); ++i) {
    const auto hit = detail::intersect(spec.geometry[i], origin, dir, 1e-9);
    if (hit && hit->first < best.depth) {
      best.depth = hit->first;
      best.normal = hit->second;
      best.primitive = static_cast<int>(i);
    }
  }
  if (best.primitive >= 0) best.point = origin + best.depth * dir;
  return best;
}

/// Shaded color of a surface point: albedo * (ambient + diffuse * |n . l|).
inline Vec3 shade(const SceneSpec& spec, const Hit& hit) {
  const Vec3 l = spec.light_dir.normalized();
  const double lambert = spec.ambient + (1.0 - spec.ambient) * std::abs(hit.normal.dot(l));
  const Vec3 rgb = detail::albedo(detail::texture_of(spec.geometry[static_cast<std::size_t>(hit.primitive)]), hit.point) * lambert;
  return rgb.cwiseMax(0.0).cwiseMin(1.0);
}

inline void validate(const SceneSpec& spec) {
  if (spec.geometry.empty()) throw std::invalid_argument("SceneSpec: need at least one primitive");
  if (spec.cameras.size() < 2) throw std::invalid_argument("SceneSpec: need a reference and at least one source camera");
  if (spec.width < 2 || spec.height < 2) throw std::invalid_argument("SceneSpec: resolution too small");
  for (const auto& cam : spec.cameras) {
    cam.validate();
    const Vec3 c = cam.extrinsics.center();
    for (const auto& prim : spec.geometry) {
      if (detail::contains(prim, c)) throw std::invalid_argument("SceneSpec: camera inside a primitive");
      if (const auto* sp = std::get_if<SpherePrim>(&prim))
        if (cam.to_camera(sp->center).z() - sp->radius <= 0.0)
          throw std::invalid_argument("SceneSpec: sphere not in front of every camera");
      if (const auto* bx = std::get_if<BoxPrim>(&prim))
        if (cam.to_camera(bx->center).z() - bx->half_extents.norm() <= 0.0)
          throw std::invalid_argument("SceneSpec: box not in front of every camera");
      if (const auto* pl = std::get_if<PlanePrim>(&prim))
        if (cam.to_camera(pl->point).z() <= 0.0)
          throw std::invalid_argument("SceneSpec: plane anchor not in front of every camera");
    }
  }
}

inline RenderedView render_view(const SceneSpec& spec, const Camera& cam) {
  RenderedView v{ImageF(spec.height, spec.width, 3), ImageF(spec.height, spec.width, 1), cam,
                 Mask(spec.height, spec.width, 1)};
  parallel_for(0, spec.height, [&](int y) {
    for (int x = 0; x < spec.width; ++x) {
      const Hit hit = cast_ray(spec, cam, x, y);
      if (hit.primitive < 0) continue;
      const Vec3 rgb = shade(spec, hit);
      for (int c = 0; c < 3; ++c) v.image(y, x, c) = static_cast<float>(rgb[c]);
      v.gt_depth(y, x) = static_cast<float>(hit.depth);
      v.valid(y, x) = 1;
    }
  });
  return v;
}

/// One view per camera, reference first. Deterministic for a given spec.
inline std::vector<RenderedView> render_scene(const SceneSpec& spec) {
  validate(spec);
  std::vector<RenderedView> out;
  for (const auto& cam : spec.cameras) out.push_back(render_view(spec, cam));
  return out;
}

/// True when `world` projects inside cam's image and is the first surface hit
/// along that pixel's ray (relative depth tolerance rel_tol).
inline bool visible_from(const SceneSpec& spec, const Camera& cam, const Vec3& world, double rel_tol = 1e-6) {
  const Vec3 pc = cam.to_camera(world);
  if (!(pc.z() > 0.0)) return false;
  const Projection p = project(cam, world);
  if (!(p.x >= 0.0 && p.y >= 0.0 && p.x <= spec.width - 1 && p.y <= spec.height - 1)) return false;
  const Hit hit = cast_ray(spec, cam, p.x, p.y);
  return hit.primitive >= 0 && std::abs(hit.depth - p.depth) <= rel_tol * p.depth;
}

/// Per reference pixel: 1 when the surface seen there is also visible from src.
inline Mask visibility_mask(const SceneSpec& spec, const RenderedView& ref, const Camera& src) {
  Mask m(ref.gt_depth.height(), ref.gt_depth.width(), 1);
  parallel_for(0, m.height(), [&](int y) {
    for (int x = 0; x < m.width(); ++x) {
      if (!ref.valid(y, x)) continue;
      const Vec3 p = backproject(ref.camera, x, y, ref.gt_depth(y, x));
      m(y, x) = visible_from(spec, src, p) ? 1 : 0;
    }
  });
  return m;
}

/// Pixels within `radius` of a depth discontinuity (relative jump > rel_jump).
inline Mask discontinuity_band(const ImageF& depth, int radius, double rel_jump = 0.02) {
  const int h = depth.height(), w = depth.width();
  Mask edge(h, w, 1), band(h, w, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = depth(y, x);
      for (const auto& [dy, dx] : {std::pair{0, 1}, std::pair{1, 0}}) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= h || xx >= w) continue;
        const double e = depth(yy, xx);
        if (std::abs(d - e) > rel_jump * std::max(std::min(d, e), 1e-9)) {
          edge(y, x) = 1;
          edge(yy, xx) = 1;
        }
      }
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!edge(y, x)) continue;
      for (int dy = -radius; dy <= radius; ++dy)
        for (int dx = -radius; dx <= radius; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < h && xx >= 0 && xx < w) band(yy, xx) = 1;
        }
    }
  return band;
}

/// Ground-truth surface points sampled directly on the primitives at the given
/// spacing, kept only where visible from at least min_views cameras.
inline PointCloud gt_surface_points(const SceneSpec& spec, double spacing, int min_views = 1) {
  if (!(spacing > 0.0)) throw std::invalid_argument("gt_surface_points: spacing must be positive");
  std::vector<Vec3> candidates;
  auto basis = [](const Vec3& n) {
    const Vec3 a = std::abs(n.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
    const Vec3 u = n.cross(a).normalized();
    return std::pair{u, Vec3(n.cross(u))};
  };
  for (std::size_t i = 0; i < spec.geometry.size(); ++i) {
    const auto& prim = spec.geometry[i];
    if (const auto* pl = std::get_if<PlanePrim>(&prim)) {
      const Vec3 n = pl->normal.normalized();
      const auto [u, v] = basis(n);
      double umin = INFINITY, umax = -INFINITY, vmin = INFINITY, vmax = -INFINITY;
      for (const auto& cam : spec.cameras)
        for (const auto& [cx, cy] : {std::pair{0.0, 0.0}, std::pair{spec.width - 1.0, 0.0},
                                    std::pair{0.0, spec.height - 1.0}, std::pair{spec.width - 1.0, spec.height - 1.0}}) {
          const Vec3 o = cam.extrinsics.center();
          const Vec3 dir = cam.extrinsics.rotation.transpose() * (cam.intrinsics.inverse() * Vec3(cx, cy, 1.0));
          const double denom = n.dot(dir);
          if (std::abs(denom) < 1e-12) continue;
          const double t = n.dot(pl->point - o) / denom;
          if (t <= 0) continue;
          const Vec3 q = o + t * dir - pl->point;
          umin = std::min(umin, q.dot(u));
          umax = std::max(umax, q.dot(u));
          vmin = std::min(vmin, q.dot(v));
          vmax = std::max(vmax, q.dot(v));
        }
      if (!(umin < umax)) continue;
      for (double a = std::floor(umin / spacing) * spacing; a <= umax; a += spacing)
        for (double b = std::floor(vmin / spacing) * spacing; b <= vmax; b += spacing)
          candidates.push_back(pl->point + a * u + b * v);
    } else if (const auto* sp = std::get_if<SpherePrim>(&prim)) {
      const double area = 4.0 * M_PI * sp->radius * sp->radius;
      const auto count = static_cast<std::size_t>(std::ceil(area / (spacing * spacing)));
      const double golden = M_PI * (3.0 - std::sqrt(5.0));
      for (std::size_t k = 0; k < count; ++k) {
        const double z = 1.0 - 2.0 * (k + 0.5) / static_cast<double>(count);
        const double r = std::sqrt(1.0 - z * z);
        const double phi = golden * static_cast<double>(k);
        candidates.push_back(sp->center + sp->radius * Vec3(r * std::cos(phi), r * std::sin(phi), z));
      }
    } else {
      const auto& bx = std::get<BoxPrim>(prim);
      const Mat3 to_world = bx.rotation.transpose();
      for (int axis = 0; axis < 3; ++axis)
        for (const double side : {-1.0, 1.0}) {
          const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
          for (double s = -bx.half_extents[a1]; s <= bx.half_extents[a1] + 1e-12; s += spacing)
            for (double t = -bx.half_extents[a2]; t <= bx.half_extents[a2] + 1e-12; t += spacing) {
              Vec3 local;
              local[axis] = side * bx.half_extents[axis];
              local[a1] = s;
              local[a2] = t;
              candidates.push_back(bx.center + to_world * local);
            }
        }
    }
  }
  std::vector<unsigned char> keep(candidates.size(), 0);
  parallel_for(0, static_cast<int>(candidates.size()), [&](int k) {
    int seen = 0;
    for (const auto& cam : spec.cameras)
      if (visible_from(spec, cam, candidates[static_cast<std::size_t>(k)], 1e-6) && ++seen >= min_views) {
        keep[static_cast<std::size_t>(k)] = 1;
        break;
      }
  });
  PointCloud out;
  for (std::size_t k = 0; k < candidates.size(); ++k)
    if (keep[k]) out.points.push_back(candidates[k]);
  return out;
}

// ---------------------------------------------------------------- presets

struct RigOptions {
  int width = 320;
  int height = 256;
  int views = 4;            // reference + sources
  double focal = 400.0;
  double baseline = 90.0;
  double look_depth = 230.0;
  double depth_span = 256.0;  // stage-1 planes x stage-1 interval
  double texture_scale = 1.0;  // multiplies every texture cell size
};

/// Reference at the origin looking down +z; sources on a ring of radius
/// `baseline` converging on (0, 0, look_depth). Depth ranges are filled in by
/// fit_depth_ranges.
inline std::vector<Camera> make_rig(const RigOptions& o) {
  if (o.views < 2) throw std::invalid_argument("make_rig: need at least two views");
  const Intrinsics k{o.focal, o.focal, 0.5 * (o.width - 1), 0.5 * (o.height - 1)};
  std::vector<Camera> cams;
  cams.emplace_back(k, Extrinsics{}, 1.0, 2.0);
  const Vec3 target(0, 0, o.look_depth);
  for (int s = 0; s < o.views - 1; ++s) {
    const double angle = M_PI + 2.0 * M_PI * s / (o.views - 1);
    const Vec3 eye(o.baseline * std::cos(angle), 0.6 * o.baseline * std::sin(angle), 0.0);
    cams.emplace_back(k, look_at(eye, target), 1.0, 2.0);
  }
  return cams;
}

/// Sets every camera's depth range to `span` units starting a margin below the
/// nearest visible surface, widened if the farthest surface does not fit.
/// A camera whose depth_min is already > 1 and whose range covers its surfaces is left unchanged.
inline void fit_depth_ranges(SceneSpec& spec, double span, double margin = 16.0) {
  for (auto& cam : spec.cameras) {
    double lo = INFINITY, hi = 0.0;
    for (int y = 0; y < spec.height; y += 2)
      for (int x = 0; x < spec.width; x += 2) {
        const Hit h = cast_ray(spec, cam, x, y);
        if (h.primitive < 0) continue;
        lo = std::min(lo, h.depth);
        hi = std::max(hi, h.depth);
      }
    if (!std::isfinite(lo)) continue;
    if (cam.depth_min > 1.0 && cam.depth_min <= lo - 1.0 && cam.depth_max >= hi + 1.0) continue;
    cam.depth_min = std::max(1.0, std::floor(lo - margin));
    cam.depth_max = std::max(cam.depth_min + span, std::ceil(hi + margin));
  }
}

/// Reference range [look_depth - 82, look_depth + 174]: with 64 planes of 4
/// units the background plane at look_depth lies on a stage-1 plane center.
inline void set_reference_range(SceneSpec& s, const RigOptions& rig) {
  s.cameras[0].depth_min = rig.look_depth - 4.0 * 20.5;
  s.cameras[0].depth_max = s.cameras[0].depth_min + rig.depth_span;
}

/// Textured background plane fronto-parallel to the reference at look_depth,
/// plus a sphere in front of it.
inline SceneSpec canonical_scene(const RigOptions& rig = {}, std::uint64_t seed = 7) {
  SceneSpec s;
  s.width = rig.width;
  s.height = rig.height;
  s.seed = seed;
  s.cameras = make_rig(rig);
  set_reference_range(s, rig);
  const double L = rig.look_depth;
  Texture bg{Texture::Kind::value_noise, 8.0 * rig.texture_scale, Vec3(0.85, 0.8, 0.7), 0.8, seed};
  Texture ball{Texture::Kind::value_noise, 6.0 * rig.texture_scale, Vec3(0.6, 0.75, 0.9), 0.8, seed + 101};
  s.geometry.push_back(PlanePrim{Vec3(0, 0, L), Vec3(0, 0, -1), bg});
  s.geometry.push_back(SpherePrim{Vec3(14, 9, L - 50), 26.0, ball});
  fit_depth_ranges(s, rig.depth_span);
  return s;
}

/// Background plane with a raised slab: a sharp depth step along the slab outline.
inline SceneSpec step_scene(const RigOptions& rig = {}, std::uint64_t seed = 11) {
  SceneSpec s;
  s.width = rig.width;
  s.height = rig.height;
  s.seed = seed;
  s.cameras = make_rig(rig);
  set_reference_range(s, rig);
  const double L = rig.look_depth;
  Texture bg{Texture::Kind::value_noise, 8.0 * rig.texture_scale, Vec3(0.85, 0.8, 0.7), 0.8, seed};
  Texture slab{Texture::Kind::value_noise, 6.0 * rig.texture_scale, Vec3(0.45, 0.6, 0.85), 0.8, seed + 57};
  s.geometry.push_back(PlanePrim{Vec3(0, 0, L), Vec3(0, 0, -1), bg});
  s.geometry.push_back(BoxPrim{Vec3(-6, 3, L - 30), Vec3(35, 26, 6), Mat3::Identity(), slab});
  fit_depth_ranges(s, rig.depth_span);
  return s;
}

/// Canonical geometry with nearly uniform albedo: a textureless failure case.
inline SceneSpec low_texture_scene(const RigOptions& rig = {}, std::uint64_t seed = 13) {
  SceneSpec s = canonical_scene(rig, seed);
  for (auto& prim : s.geometry)
    std::visit([](auto& p) { p.texture.contrast = 0.03; }, prim);
  return s;
}

inline SceneSpec scene_preset(const std::string& name, const RigOptions& rig, std::uint64_t seed) {
  if (name == "canonical") return canonical_scene(rig, seed);
  if (name == "step") return step_scene(rig, seed);
  if (name == "lowtexture") return low_texture_scene(rig, seed);
  throw std::invalid_argument("unknown scene preset '" + name + "' (expected canonical|step|lowtexture)");
}

}  // namespace cmvs
