#include <gtest/gtest.h>

#include <cmath>

#include "cmvs/numerics.hpp"
#include "support.hpp"

using namespace cmvs;

TEST(Bilinear, GridNodeIsExact) {
  test::Rng rng(1);
  const ImageF img = test::random_image(rng, 6, 7, 3);
  const auto r = bilinear_sample(img, 2.0, 3.0);
  ASSERT_TRUE(r.valid);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(r.value[static_cast<std::size_t>(c)], img(3, 2, c));
}

TEST(Bilinear, CenterOfFourPixels) {
  ImageF img(2, 2, 1);
  img(0, 0) = 0;
  img(0, 1) = 0;
  img(1, 0) = 1;
  img(1, 1) = 1;
  const auto r = bilinear_sample(img, 0.5, 0.5);
  ASSERT_TRUE(r.valid);
  EXPECT_FLOAT_EQ(r.value[0], 0.5f);
}

TEST(Bilinear, OutOfBoundsIsInvalidZero) {
  const ImageF img(4, 4, 2, 1.0f);
  const auto r = bilinear_sample(img, -0.5, 1.0);
  EXPECT_FALSE(r.valid);
  EXPECT_EQ(r.value, std::vector<float>(2, 0.0f));
  EXPECT_FALSE(bilinear_sample(img, 1.0, 3.0001).valid);
  EXPECT_TRUE(bilinear_sample(img, 3.0, 3.0).valid);
}

TEST(Bilinear, MatchesFourCornerFormulaAndGradient) {
  test::Rng rng(2);
  const ImageF img = test::random_image(rng, 9, 11, 1);
  for (int t = 0; t < 200; ++t) {
    const double x = test::uniform(rng, 0, 9.999), y = test::uniform(rng, 0, 7.999);
    double v = 0, gx = 0, gy = 0;
    ASSERT_TRUE(bilinear_sample_into(img, x, y, &v, &gx, &gy));
    EXPECT_NEAR(v, test::bilinear_oracle(img, x, y), 1e-6);
    const double h = 1e-6;
    EXPECT_NEAR(gx, (test::bilinear_oracle(img, x + h, y) - test::bilinear_oracle(img, x - h, y)) / (2 * h), 1e-4);
    EXPECT_NEAR(gy, (test::bilinear_oracle(img, x, y + h) - test::bilinear_oracle(img, x, y - h)) / (2 * h), 1e-4);
  }
}

TEST(Conv2d, IdentityKernel) {
  test::Rng rng(3);
  const ImageF img = test::random_image(rng, 5, 6, 2);
  EXPECT_EQ(conv2d_fixed(img, Kernel::identity(3)).storage(), img.storage());
}

TEST(Conv2d, ConstantPreservedByBox) {
  const ImageF img(5, 5, 1, 0.25f);
  for (const auto out = conv2d_fixed(img, Kernel::box(3)); float v : out.storage()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(Conv2d, ImpulseGivesBoxFootprint) {
  ImageF img(7, 7, 1, 0.0f);
  img(3, 3) = 1.0f;
  const ImageF out = conv2d_fixed(img, Kernel::box(3));
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x) {
      const bool inside = std::abs(y - 3) <= 1 && std::abs(x - 3) <= 1;
      EXPECT_NEAR(out(y, x), inside ? 1.0 / 9.0 : 0.0, 1e-7);
    }
}

TEST(Conv2d, EvenKernelRejected) { EXPECT_THROW(Kernel(2, {1, 1, 1, 1}), std::invalid_argument); }

TEST(Softmax, UniformValues) {
  VolumeF v(4, 2, 2, 1, 3.0f);
  for (const auto out = softmax_over_planes(v); float p : out.data()) EXPECT_FLOAT_EQ(p, 0.25f);
}

TEST(Softmax, TwoPlaneHandValue) {
  VolumeF v(2, 1, 1, 1);
  v(0, 0, 0) = 0.0f;
  v(1, 0, 0) = static_cast<float>(std::log(3.0));
  const VolumeF p = softmax_over_planes(v);
  EXPECT_NEAR(p(0, 0, 0), 0.25, 1e-7);
  EXPECT_NEAR(p(1, 0, 0), 0.75, 1e-7);
}

TEST(Softmax, ShiftInvariantPerPixel) {
  test::Rng rng(4);
  VolumeF v(5, 3, 3, 1);
  for (auto& x : v.data()) x = static_cast<float>(test::uniform(rng, -3, 3));
  VolumeF shifted = v;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x)
      for (int d = 0; d < 5; ++d) shifted(d, y, x) += static_cast<float>(y * 3 + x);
  const VolumeF a = softmax_over_planes(v), b = softmax_over_planes(shifted);
  for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a.data()[k], b.data()[k], 1e-6);
}

TEST(Softmax, LargeScoresStayFinite) {
  VolumeF v(3, 1, 1, 1);
  v(0, 0, 0) = 1e4f;
  v(1, 0, 0) = -1e4f;
  v(2, 0, 0) = 1e4f;
  const VolumeF p = softmax_over_planes(v);
  EXPECT_NEAR(p(0, 0, 0), 0.5, 1e-7);
  EXPECT_EQ(p(1, 0, 0), 0.0f);
}

TEST(Resize, SameSizeIsIdentity) {
  test::Rng rng(5);
  const ImageF img = test::random_image(rng, 4, 5, 3);
  EXPECT_EQ(resize_bilinear(img, 4, 5).storage(), img.storage());
}

TEST(Resize, ConstantStaysConstant) {
  const ImageF img(4, 6, 2, 0.7f);
  for (const auto out = resize_bilinear(img, 9, 3); float v : out.storage()) EXPECT_FLOAT_EQ(v, 0.7f);
}

TEST(Resize, CornerAlignedCenterValue) {
  ImageF img(2, 2, 1);
  img(0, 0) = 0;
  img(0, 1) = 1;
  img(1, 0) = 2;
  img(1, 1) = 3;
  const ImageF out = resize_bilinear(img, 3, 3);
  EXPECT_FLOAT_EQ(out(1, 1), 1.5f);
  EXPECT_FLOAT_EQ(out(0, 0), 0.0f);
  EXPECT_FLOAT_EQ(out(2, 2), 3.0f);
}

TEST(Pyramid, ExtentAndConstant) {
  EXPECT_EQ(scaled_extent(256, 0.25), 64);
  EXPECT_EQ(scaled_extent(320, 0.5), 160);
  const ImageF img(256, 320, 3, 0.4f);
  const ImageF half = pyramid_level(img, 0.5);
  EXPECT_EQ(half.height(), 128);
  EXPECT_EQ(half.width(), 160);
  for (float v : half.storage()) EXPECT_NEAR(v, 0.4f, 1e-6);
}

TEST(Pyramid, LinearRampSampledAtScaledCoordinates) {
  // A ramp is unchanged by a symmetric blur away from the border, so level
  // pixel x must read the full-resolution value at x / scale.
  ImageF img(64, 64, 1);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) img(y, x) = static_cast<float>(0.5 * x + 0.25 * y);
  const ImageF q = pyramid_level(img, 0.25);
  for (int y = 2; y < q.height() - 2; ++y)
    for (int x = 2; x < q.width() - 2; ++x) EXPECT_NEAR(q(y, x), 0.5 * 4 * x + 0.25 * 4 * y, 1e-4);
}

TEST(Median, LowerMedian) {
  EXPECT_EQ(median_of({3, 1, 2}), 2);
  EXPECT_EQ(median_of({4, 1, 3, 2}), 2);
  EXPECT_THROW(median_of({}), std::invalid_argument);
}
