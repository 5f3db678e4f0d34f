#include <gtest/gtest.h>

#include <cmath>

#include "cmvs/scene.hpp"
#include "support.hpp"

using namespace cmvs;

namespace {
SceneSpec single(Primitive p, int w = 64, int h = 48) {
  SceneSpec s;
  s.width = w;
  s.height = h;
  s.cameras.emplace_back(Intrinsics{80, 80, 0.5 * (w - 1), 0.5 * (h - 1)}, Extrinsics{}, 1.0, 500.0);
  s.geometry.push_back(std::move(p));
  return s;
}
}  // namespace

TEST(Render, FrontoParallelPlaneHasConstantDepth) {
  const SceneSpec s = single(PlanePrim{Vec3(0, 0, 37.5), Vec3(0, 0, -1), Texture{}});
  const RenderedView v = render_view(s, s.cameras[0]);
  for (float d : v.gt_depth.storage()) EXPECT_NEAR(d, 37.5f, 1e-4);
  for (auto m : v.valid.storage()) EXPECT_EQ(m, 1);
}

TEST(Render, SphereOnAxisNearestAtCenter) {
  const SceneSpec s = single(SpherePrim{Vec3(0, 0, 100), 20, Texture{}}, 65, 49);
  const RenderedView v = render_view(s, s.cameras[0]);
  EXPECT_NEAR(v.gt_depth(24, 32), 80.0f, 1e-4);
  float lowest = 1e9f;
  int at_y = -1, at_x = -1;
  for (int y = 0; y < 49; ++y)
    for (int x = 0; x < 65; ++x)
      if (v.valid(y, x) && v.gt_depth(y, x) < lowest) {
        lowest = v.gt_depth(y, x);
        at_y = y;
        at_x = x;
      }
  EXPECT_EQ(at_y, 24);
  EXPECT_EQ(at_x, 32);
  EXPECT_EQ(v.valid(0, 0), 0);
  EXPECT_EQ(v.gt_depth(0, 0), 0.0f);
}

TEST(Render, BoxFaceDepth) {
  const SceneSpec s = single(BoxPrim{Vec3(0, 0, 60), Vec3(10, 10, 5), Mat3::Identity(), Texture{}});
  const RenderedView v = render_view(s, s.cameras[0]);
  EXPECT_NEAR(v.gt_depth(24, 32), 55.0f, 1e-4);
}

TEST(Render, Deterministic) {
  const SceneSpec s = canonical_scene();
  const auto a = render_scene(s), b = render_scene(s);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].image.storage(), b[i].image.storage());
    EXPECT_EQ(a[i].gt_depth.storage(), b[i].gt_depth.storage());
  }
  const auto other = render_scene(canonical_scene({}, 8));
  EXPECT_NE(a[0].image.storage(), other[0].image.storage());
}

TEST(Render, RejectsCameraInsideGeometry) {
  SceneSpec s = single(SpherePrim{Vec3(0, 0, 0), 5, Texture{}});
  s.cameras.push_back(s.cameras[0]);
  EXPECT_THROW(render_scene(s), std::invalid_argument);
  s.geometry[0] = SpherePrim{Vec3(0, 0, 50), 5, Texture{}};
  EXPECT_NO_THROW(render_scene(s));
  s.cameras.resize(1);
  EXPECT_THROW(render_scene(s), std::invalid_argument);
}

TEST(Render, SubpixelRerenderMatchesReference) {
  // Shading is view independent, so casting the source ray through the exact
  // reprojected position must reproduce the reference color.
  const SceneSpec spec = canonical_scene();
  const auto views = render_scene(spec);
  for (std::size_t s = 1; s < views.size(); ++s) {
    const Mask vis = visibility_mask(spec, views[0], views[s].camera);
    double worst = 0;
    std::size_t checked = 0;
    for (int y = 0; y < spec.height; y += 3)
      for (int x = 0; x < spec.width; x += 3) {
        if (!vis(y, x)) continue;
        const auto p = test::reproject_oracle(views[0].camera, views[s].camera, x, y, views[0].gt_depth(y, x));
        const Hit hit = cast_ray(spec, views[s].camera, p.x(), p.y());
        ASSERT_GE(hit.primitive, 0);
        const Vec3 rgb = shade(spec, hit);
        ++checked;
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(rgb[c] - views[0].image(y, x, c)));
      }
    EXPECT_GT(checked, 5000u);
    EXPECT_LT(worst, 1e-5) << "source " << s;
  }
}

TEST(Render, CrossViewColorConsistency) {
  // Bilinear resampling of the source render; the residual is interpolation
  // error where the sphere texture is foreshortened in the source.
  const SceneSpec spec = canonical_scene();
  const auto views = render_scene(spec);
  for (std::size_t s = 1; s < views.size(); ++s) {
    const Mask clean = test::clean_pixels(spec, views, s);
    std::size_t checked = 0, within = 0;
    double worst = 0;
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        if (!clean(y, x)) continue;
        const auto p = test::reproject_oracle(views[0].camera, views[s].camera, x, y, views[0].gt_depth(y, x));
        double err = 0;
        for (int c = 0; c < 3; ++c)
          err = std::max(err, std::abs(test::bilinear_oracle(views[s].image, p.x(), p.y(), c) - views[0].image(y, x, c)));
        ++checked;
        within += err < 2.0 / 255.0;
        worst = std::max(worst, err);
      }
    EXPECT_GT(checked, 30000u);
    EXPECT_GE(static_cast<double>(within) / checked, 0.99) << "source " << s;
    EXPECT_LT(worst, 0.05) << "source " << s;
  }
}

TEST(Visibility, OccludedBehindSphere) {
  const SceneSpec spec = canonical_scene();
  const auto views = render_scene(spec);
  // Every view sees its own surface.
  const Mask self = visibility_mask(spec, views[0], views[0].camera);
  for (std::size_t k = 0; k < self.size(); ++k) EXPECT_EQ(self.storage()[k], views[0].valid.storage()[k]);
  // Some plane pixels hidden by the sphere in a source view.
  std::size_t hidden = 0;
  const Mask m = visibility_mask(spec, views[1], views[0].camera);
  for (std::size_t k = 0; k < m.size(); ++k) hidden += views[1].valid.storage()[k] && !m.storage()[k];
  EXPECT_GT(hidden, 100u);
}

TEST(DiscontinuityBand, MarksStepOutline) {
  ImageF d(10, 10, 1, 100.0f);
  for (int y = 0; y < 10; ++y)
    for (int x = 5; x < 10; ++x) d(y, x) = 130.0f;
  const Mask b = discontinuity_band(d, 1);
  for (int x = 0; x < 10; ++x) EXPECT_EQ(b(4, x) != 0, x >= 3 && x <= 6) << x;
}

TEST(GroundTruthPoints, OnSurfacesAndVisible) {
  const SceneSpec spec = test::plane_scene();
  const PointCloud c = gt_surface_points(spec, 2.0);
  ASSERT_GT(c.size(), 1000u);
  for (const auto& p : c.points) EXPECT_NEAR(p.z(), RigOptions{}.look_depth, 1e-9);
  const PointCloud strict = gt_surface_points(spec, 2.0, 4);
  EXPECT_LT(strict.size(), c.size());
  for (const auto& p : strict.points)
    for (const auto& cam : spec.cameras) EXPECT_TRUE(visible_from(spec, cam, p));
}

TEST(Presets, RangesCoverScene) {
  for (const char* name : {"canonical", "step", "lowtexture"}) {
    const SceneSpec s = scene_preset(name, {}, 3);
    const auto views = render_scene(s);
    for (const auto& v : views)
      for (float d : v.gt_depth.storage())
        if (d > 0) {
          EXPECT_GT(d, v.camera.depth_min);
          EXPECT_LT(d, v.camera.depth_max);
        }
  }
  EXPECT_THROW(scene_preset("nope", {}, 1), std::invalid_argument);
}
