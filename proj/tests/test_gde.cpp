#include <gtest/gtest.h>

#include <cmath>

#include "cmvs/gde.hpp"
#include "support.hpp"

using namespace cmvs;

namespace {
DepthMap from_depth(const ImageF& d) {
  return {d, ImageF(d.height(), d.width(), 1, 1.0f), ImageF(d.height(), d.width(), 1, 0.5f)};
}

/// Sub-pixel column where a left-to-right profile crosses the midpoint of a
/// step between lo and hi.
double crossing(const ImageF& d, int y, double lo, double hi) {
  const double mid = 0.5 * (lo + hi);
  for (int x = 0; x + 1 < d.width(); ++x) {
    const double a = d(y, x), b = d(y, x + 1);
    if ((a - mid) * (b - mid) <= 0 && a != b) return x + (mid - a) / (b - a);
  }
  return -1;
}
}  // namespace

TEST(RefineDepth, ConstantDepthUnchanged) {
  test::Rng rng(40);
  const ImageF guide = test::random_image(rng, 10, 10, 3);
  const DepthMap out = refine_depth(from_depth(ImageF(10, 10, 1, 42.0f)), guide);
  for (float v : out.depth.storage()) EXPECT_NEAR(v, 42.0f, 1e-4);
  EXPECT_EQ(out.confidence(3, 3), 0.5f);
}

TEST(RefineDepth, AlignedGuideStepPreserved) {
  ImageF depth(5, 20, 1), guide(5, 20, 1);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 20; ++x) {
      depth(y, x) = x < 10 ? 100.0f : 140.0f;
      guide(y, x) = x < 10 ? 0.2f : 0.8f;
    }
  const DepthMap out = refine_depth(from_depth(depth), guide);
  EXPECT_NEAR(crossing(out.depth, 2, 100, 140), 9.5, 0.5);
  EXPECT_NEAR(out.depth(2, 9), 100.0, 1e-3);
  EXPECT_NEAR(out.depth(2, 10), 140.0, 1e-3);
}

TEST(RefineDepth, ConstantGuideActsLikeGaussian) {
  ImageF depth(5, 20, 1), guide(5, 20, 1, 0.5f);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 20; ++x) depth(y, x) = x < 10 ? 100.0f : 140.0f;
  const RefineParams p;
  const DepthMap out = refine_depth(from_depth(depth), guide, p);
  // 1-D oracle: the 2-D window separates; rows are identical.
  for (int x = 5; x < 15; ++x) {
    double num = 0, den = 0;
    for (int dx = -p.radius; dx <= p.radius; ++dx) {
      const double w = std::exp(-dx * dx / (2 * p.spatial_sigma * p.spatial_sigma));
      num += w * (x + dx < 10 ? 100.0 : 140.0);
      den += w;
    }
    EXPECT_NEAR(out.depth(2, x), num / den, 1e-3);
  }
  EXPECT_GT(out.depth(2, 9), 101.0f);
}

TEST(RefineDepth, OutputWithinWindowRange) {
  test::Rng rng(41);
  const ImageF depth = test::random_image(rng, 12, 12, 1, 50, 90);
  const ImageF guide = test::random_image(rng, 12, 12, 1);
  const DepthMap out = refine_depth(from_depth(depth), guide);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      float lo = 1e9f, hi = -1e9f;
      for (int yy = std::max(0, y - 2); yy <= std::min(11, y + 2); ++yy)
        for (int xx = std::max(0, x - 2); xx <= std::min(11, x + 2); ++xx) {
          lo = std::min(lo, depth(yy, xx));
          hi = std::max(hi, depth(yy, xx));
        }
      EXPECT_GE(out.depth(y, x), lo - 1e-3f);
      EXPECT_LE(out.depth(y, x), hi + 1e-3f);
    }
}

TEST(DepthToFeature, ConstantDepthHasOnlyIdentityChannel) {
  const FeatureMap f = depth_to_feature(ImageF(8, 8, 1, 300.0f), 8, 200, 400);
  ASSERT_EQ(f.data.channels(), 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      EXPECT_NEAR(f.data(y, x, 0), 0.5, 1e-6);
      for (int c = 1; c < 8; ++c) EXPECT_NEAR(f.data(y, x, c), 0.0, 1e-6);
    }
  EXPECT_THROW(depth_to_feature(ImageF(8, 8, 1, 1.0f), 4, 0, 1), std::invalid_argument);
}

TEST(DepthToFeature, RampHasConstantGradient) {
  ImageF d(9, 9, 1);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) d(y, x) = static_cast<float>(100 + 4 * x);
  const FeatureMap f = depth_to_feature(d, 8, 100, 200, 2.0);
  // Normalized slope 4 * 2 / 100 per pixel; Sobel-x scaled by 1/8 returns the slope.
  for (int y = 1; y < 8; ++y)
    for (int x = 1; x < 8; ++x) {
      EXPECT_NEAR(f.data(y, x, 1), 0.08, 1e-6);
      EXPECT_NEAR(f.data(y, x, 2), 0.0, 1e-6);
      EXPECT_NEAR(f.data(y, x, 7), 0.0, 1e-6);
    }
}

TEST(Fuse, ZeroDepthFeatureGivesTransformOfImage) {
  test::Rng rng(42);
  const FeatureMap img{test::random_image(rng, 7, 9, 8)};
  const FeatureMap zero{ImageF(7, 9, 8, 0.0f)};
  const FusedFeature f = fuse(img, zero);
  EXPECT_TRUE(f.gde_enabled);
  EXPECT_EQ(f.feature.data.storage(), fusion_transform(img.data).storage());
}

TEST(Fuse, Linear) {
  test::Rng rng(43);
  const FeatureMap a{test::random_image(rng, 7, 9, 8, -1, 1)}, b{test::random_image(rng, 7, 9, 8, -1, 1)};
  const FeatureMap c{test::random_image(rng, 7, 9, 8, -1, 1)};
  const FeatureMap zero{ImageF(7, 9, 8, 0.0f)};
  const ImageF ab = fuse(a, b).feature.data, c0 = fuse(c, zero).feature.data;
  FeatureMap ac{a.data};
  for (std::size_t k = 0; k < ac.data.size(); ++k) ac.data.storage()[k] += c.data.storage()[k];
  const ImageF sum = fuse(ac, b).feature.data;
  for (std::size_t k = 0; k < sum.size(); ++k)
    EXPECT_NEAR(sum.storage()[k], ab.storage()[k] + c0.storage()[k], 1e-5);
}

TEST(Fuse, TransformPreservesConstants) {
  for (const auto out = fusion_transform(ImageF(6, 6, 8, 0.3f)); float v : out.storage()) EXPECT_NEAR(v, 0.3f, 1e-6);
}

TEST(Bypass, ReturnsImageFeatureUntouched) {
  test::Rng rng(44);
  const FeatureMap img{test::random_image(rng, 5, 5, 8), 3, 2};
  const FusedFeature f = bypass(img);
  EXPECT_FALSE(f.gde_enabled);
  EXPECT_EQ(f.feature.data.storage(), img.data.storage());
  EXPECT_EQ(f.feature.view_id, 3);
}
