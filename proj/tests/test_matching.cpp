#include <gtest/gtest.h>

#include <cmath>

#include "cmvs/matching.hpp"
#include "cmvs/scene.hpp"
#include "support.hpp"

using namespace cmvs;

namespace {
HypothesisSet constant_planes(int n, int h, int w, double first, double step) {
  HypothesisSet out{VolumeF(n, h, w, 1)};
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.values(i, y, x) = static_cast<float>(first + step * i);
  return out;
}

WarpedView constant_view(int n, int h, int w, std::vector<float> feat, bool valid = true) {
  const int ch = static_cast<int>(feat.size());
  WarpedView v{VolumeF(n, h, w, ch), ValidityVolume(n, h, w, 1, valid ? 1 : 0)};
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < ch; ++c) v.values(i, y, x, c) = feat[static_cast<std::size_t>(c)];
  return v;
}
}  // namespace

TEST(Features, ConstantImageHasNoStructure) {
  const ImageF f = filter_bank_features(ImageF(12, 10, 3, 0.4f));
  ASSERT_EQ(f.channels(), kFeatureChannels);
  for (float v : f.storage()) EXPECT_EQ(v, 0.0f);
}

TEST(Features, Deterministic) {
  test::Rng rng(30);
  const ImageF img = test::random_image(rng, 16, 16, 3);
  EXPECT_EQ(filter_bank_features(img).storage(), filter_bank_features(img).storage());
}

TEST(Features, VerticalStepPeaksAtEdgeColumns) {
  ImageF img(9, 12, 1, 0.0f);
  for (int y = 0; y < 9; ++y)
    for (int x = 6; x < 12; ++x) img(y, x) = 1.0f;
  const ImageF f = filter_bank_features(img);
  // Sobel-x responds on the two columns adjacent to the step and nowhere else.
  for (int x = 0; x < 12; ++x) {
    const float v = f(4, x, 1);
    if (x == 5 || x == 6) EXPECT_GT(v, 0.0f);
    else EXPECT_LT(v, f(4, 5, 1));
  }
  EXPECT_FLOAT_EQ(f(4, 5, 1), f(4, 6, 1));
}

TEST(Warp, IdentityCameraReproducesSource) {
  test::Rng rng(31);
  const auto [ref, src] = test::random_pair(rng);
  const ImageF feat = test::random_image(rng, 10, 12, 4);
  const auto h = constant_planes(3, 10, 12, 4.0, 3.0);
  const WarpedView w = warp_features(feat, src, src, h);
  for (int i = 0; i < 3; ++i)
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 12; ++x) {
        ASSERT_EQ(w.valid(i, y, x), 1);
        for (int c = 0; c < 4; ++c) EXPECT_NEAR(w.values(i, y, x, c), feat(y, x, c), 1e-5);
      }
}

TEST(Warp, PlaneBehindSourceIsMasked) {
  Intrinsics k{100, 100, 5, 5};
  const Camera ref(k, Extrinsics{}, 1, 100);
  Extrinsics e;
  e.translation = Vec3(0, 0, -50);  // source center at z = 50, looking down +z
  const Camera src(k, e, 1, 100);
  const auto h = constant_planes(2, 10, 10, 10.0, 5.0);
  const WarpedView w = warp_features(ImageF(10, 10, 2, 1.0f), ref, src, h);
  for (auto v : w.valid.data()) EXPECT_EQ(v, 0);
  for (float v : w.values.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Warp, GroundTruthPlaneReproducesReferenceFeatures) {
  const SceneSpec spec = test::plane_scene();
  const auto views = render_scene(spec);
  const ImageF ref_feat = filter_bank_features(views[0].image);
  const double L = RigOptions{}.look_depth;
  // Plane 0 is the true depth, plane 1 is two stage-1 intervals behind it.
  const auto h = constant_planes(2, spec.height, spec.width, L, 8.0);
  for (std::size_t s = 1; s < views.size(); ++s) {
    const WarpedView w = warp_features(filter_bank_features(views[s].image), views[0].camera, views[s].camera, h);
    std::vector<double> on, off;
    for (int y = 8; y < spec.height - 8; ++y)
      for (int x = 8; x < spec.width - 8; ++x) {
        if (!w.valid(0, y, x) || !w.valid(1, y, x)) continue;
        double a = 0, b = 0;
        for (int c = 0; c < kFeatureChannels; ++c) {
          a += std::abs(w.values(0, y, x, c) - ref_feat(y, x, c));
          b += std::abs(w.values(1, y, x, c) - ref_feat(y, x, c));
        }
        on.push_back(a / kFeatureChannels);
        off.push_back(b / kFeatureChannels);
      }
    ASSERT_GT(on.size(), 10000u);
    // Standardized features: unit spread, so 0.1 is a small residual.
    EXPECT_LT(test::median(on), 0.1) << "source " << s;
    EXPECT_LT(test::median(on), 0.2 * test::median(off)) << "source " << s;
  }
}

TEST(VarianceCost, IdenticalViewsCostZero) {
  const ImageF ref(3, 3, 2, 0.5f);
  const std::vector<WarpedView> w{constant_view(2, 3, 3, {0.5f, 0.5f}), constant_view(2, 3, 3, {0.5f, 0.5f})};
  for (const auto out = variance_cost(ref, w); float v : out.values.data()) EXPECT_EQ(v, 0.0f);
}

TEST(VarianceCost, TwoViewsHandValue) {
  ImageF ref(1, 1, 2);
  ref(0, 0, 0) = 1.0f;
  ref(0, 0, 1) = -2.0f;
  const std::vector<WarpedView> w{constant_view(1, 1, 1, {3.0f, 2.0f})};
  // channel 0: m = 2, ((1-2)^2 + (3-2)^2)/2 = 1; channel 1: m = 0, (4 + 4)/2 = 4; mean over channels 2.5
  EXPECT_NEAR(variance_cost(ref, w).values(0, 0, 0), 2.5, 1e-6);
}

TEST(VarianceCost, MaskedViewExcluded) {
  ImageF ref(1, 1, 1, 1.0f);
  const std::vector<WarpedView> with_bad{constant_view(1, 1, 1, {3.0f}), constant_view(1, 1, 1, {100.0f}, false)};
  const std::vector<WarpedView> without{constant_view(1, 1, 1, {3.0f})};
  EXPECT_FLOAT_EQ(variance_cost(ref, with_bad).values(0, 0, 0), variance_cost(ref, without).values(0, 0, 0));
}

TEST(VarianceCost, AllInvalidCellGetsSentinel) {
  ImageF ref(1, 2, 1, 0.0f);
  WarpedView v = constant_view(2, 1, 2, {1.0f});
  v.valid(1, 0, 1) = 0;
  const std::vector<WarpedView> w{v};
  const CostVolume c = variance_cost(ref, w, CostParams{10.0, 1.0});
  EXPECT_FLOAT_EQ(c.values(0, 0, 0), 0.25f);
  EXPECT_FLOAT_EQ(c.values(1, 0, 1), 2.5f);  // 10 x p99 (0.25)
}

TEST(Regularize, ConstantUnchangedAndSinglePlane) {
  CostVolume c{VolumeF(4, 5, 5, 1, 0.3f)};
  for (const auto out = regularize(c); float v : out.values.data()) EXPECT_NEAR(v, 0.3f, 1e-6);
  CostVolume one{VolumeF(1, 5, 5, 1, 0.0f)};
  one.values(0, 2, 2) = 1.0f;
  const CostVolume r = regularize(one);
  const Kernel g = Kernel::gaussian(3, 1.0);
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) EXPECT_NEAR(r.values(0, 2 + dy, 2 + dx), g(dy, dx), 1e-6);
}

TEST(Regularize, ImpulseFootprintIsSeparableProduct) {
  CostVolume c{VolumeF(5, 7, 7, 1, 0.0f)};
  c.values(2, 3, 3) = 1.0f;
  const CostVolume r = regularize(c);
  const double e = std::exp(-0.5), e2 = std::exp(-1.0);
  const double norm = 1 + 4 * e + 4 * e2;
  auto g = [&](int dy, int dx) { return std::exp(-(dx * dx + dy * dy) / 2.0) / norm; };
  const double depth_taps[] = {0.25, 0.5, 0.25};
  for (int i = 0; i < 5; ++i)
    for (int y = 0; y < 7; ++y)
      for (int x = 0; x < 7; ++x) {
        const int di = i - 2, dy = y - 3, dx = x - 3;
        const double expect =
            (std::abs(di) <= 1 && std::abs(dy) <= 1 && std::abs(dx) <= 1) ? depth_taps[di + 1] * g(dy, dx) : 0.0;
        EXPECT_NEAR(r.values(i, y, x), expect, 1e-7);
      }
}

TEST(CostToProbability, DominantPlaneAndUniform) {
  CostVolume c{VolumeF(4, 1, 1, 1, 10.0f)};
  c.values(2, 0, 0) = 0.0f;
  EXPECT_NEAR(cost_to_probability(c, 0.1).values(2, 0, 0), 1.0, 1e-6);
  CostVolume flat{VolumeF(4, 1, 1, 1, 3.0f)};
  for (const auto out = cost_to_probability(flat, 1.0); float p : out.values.data()) EXPECT_FLOAT_EQ(p, 0.25f);
  for (const auto out = cost_to_probability(c, 1e9); float p : out.values.data()) EXPECT_NEAR(p, 0.25, 1e-6);
  EXPECT_THROW(cost_to_probability(c, 0.0), std::invalid_argument);
}

TEST(Confidence, DeltaUniformAndSharpening) {
  const auto h = constant_planes(8, 1, 1, 1.0, 1.0);
  ProbabilityVolume delta{VolumeF(8, 1, 1, 1, 0.0f)};
  delta.values(3, 0, 0) = 1.0f;
  EXPECT_FLOAT_EQ(photometric_confidence(delta, h, regress_depth(h, delta))(0, 0), 1.0f);
  ProbabilityVolume flat{VolumeF(8, 1, 1, 1, 0.125f)};
  EXPECT_FLOAT_EQ(photometric_confidence(flat, h, regress_depth(h, flat))(0, 0), 0.5f);

  test::Rng rng(32);
  CostVolume c{VolumeF(8, 1, 1, 1)};
  for (auto& v : c.values.data()) v = static_cast<float>(test::uniform(rng, 0, 1));
  c.values(5, 0, 0) = -0.5f;
  double last = 0;
  for (double t : {2.0, 0.5, 0.1, 0.02}) {
    const auto p = cost_to_probability(c, t);
    const double conf = photometric_confidence(p, h, regress_depth(h, p))(0, 0);
    EXPECT_GE(conf, last - 1e-6);
    last = conf;
  }
}
