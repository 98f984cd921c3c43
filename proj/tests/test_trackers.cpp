#include <gtest/gtest.h>

#include "datkit/datkit.hpp"
#include "support/oracles.hpp"

using namespace datkit;

namespace {

// Smooth but well-textured test pattern sampled at (x - dx, y - dy).
Frame pattern(int w, int h, double dx, double dy) {
  Frame f(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = x - dx, v = y - dy;
      const double s = 128 + 50 * std::sin(u * 0.31) * std::cos(v * 0.23) + 40 * std::sin((u + 2 * v) * 0.11);
      f.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(s + 0.5), 0.0, 255.0));
    }
  return f;
}

GeneratedSequence translation_sequence(std::size_t n, double vx, double vy, std::uint64_t seed = 1) {
  SynthSpec s;
  s.canvas = {320, 240};
  s.n_frames = n;
  s.waypoints = {{0, 100, 100, 48, 48}, {n - 1, 100 + vx * double(n - 1), 100 + vy * double(n - 1), 48, 48}};
  s.texture_seed = seed;
  return generate_sequence(s, seed);
}

}  // namespace

// ---------------------------------------------------------------------------
// Lucas-Kanade

TEST(LucasKanade, RecoversSubpixelTranslation) {
  const Frame a = pattern(120, 100, 0, 0), b = pattern(120, 100, 2.6, -1.3);
  std::vector<Point2> pts{{40, 40}, {60, 50}, {80, 60}};
  const auto res = lk_flow(a, b, pts, LkParams{});
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ASSERT_EQ(res[i].status, FlowStatus::Converged);
    EXPECT_NEAR(res[i].point.x - pts[i].x, 2.6, 0.1);
    EXPECT_NEAR(res[i].point.y - pts[i].y, -1.3, 0.1);
  }
}

TEST(LucasKanade, PyramidHandlesLargeMotion) {
  const Frame a = pattern(160, 120, 0, 0), b = pattern(160, 120, 9, 6);
  const std::vector<Point2> pts{{70, 60}};
  const auto res = lk_flow(a, b, pts, LkParams{});
  ASSERT_EQ(res[0].status, FlowStatus::Converged);
  EXPECT_NEAR(res[0].point.x, 79, 0.2);
  EXPECT_NEAR(res[0].point.y, 66, 0.2);
}

TEST(LucasKanade, FlatRegionIsIllConditioned) {
  const Frame a(64, 64, 0, 100), b(64, 64, 1, 100);
  const std::vector<Point2> pts{{32, 32}};
  EXPECT_EQ(lk_flow(a, b, pts, LkParams{})[0].status, FlowStatus::IllConditioned);
}

TEST(ImagePyramid, LevelSizesHalve) {
  const ImagePyramid p(Frame(101, 60), 3);
  ASSERT_EQ(p.levels(), 3);
  EXPECT_EQ(p.level(1).width(), 51);
  EXPECT_EQ(p.level(2).height(), 15);
}

// ---------------------------------------------------------------------------
// Median Flow

TEST(MedianFlow, FollowsPureTranslation) {
  // Whole-pixel steps: the renderer snaps the target to the pixel grid.
  const auto g = translation_sequence(40, 2.0, -1.0);
  MedianFlowTracker t;
  t.init(g.sequence.load(0), *g.truth.boxes[0]);
  for (std::size_t f = 1; f < 40; ++f) {
    const auto u = t.update(g.sequence.load(f));
    ASSERT_FALSE(u.failed) << "frame " << f;
    const auto& gt = *g.truth.boxes[f];
    EXPECT_NEAR(u.box->center_x(), gt.center_x(), 0.5) << "frame " << f;
    EXPECT_NEAR(u.box->center_y(), gt.center_y(), 0.5) << "frame " << f;
    EXPECT_GT(u.quality, 0.5);
  }
}

TEST(MedianFlow, FailsWhenTargetIsCovered) {
  SynthSpec s;
  s.canvas = {320, 240};
  s.n_frames = 10;
  s.waypoints = {{0, 150, 120, 48, 48}, {9, 160, 120, 48, 48}};
  s.occlusions = {{5, 10}};
  s.background = {Background::Kind::Flat, 0};
  const auto g = generate_sequence(s, 2);
  MedianFlowTracker t;
  t.init(g.sequence.load(4), *g.truth.boxes[4]);
  EXPECT_TRUE(t.update(g.sequence.load(5)).failed);
}

TEST(MedianFlow, ContractChecks) {
  MedianFlowTracker t;
  EXPECT_THROW(t.update(Frame(32, 32)), ContractViolation);
  EXPECT_THROW(t.init(Frame(32, 32), {40, 40, 5, 5}), TrackerInitError);
  EXPECT_THROW(t.init(Frame(32, 32), {1, 1, 0, 5}), TrackerInitError);
  EXPECT_FALSE(t.initialized());
}

// ---------------------------------------------------------------------------
// KCF

TEST(Kcf, LabelPeaksAtOriginWithWrap) {
  const auto y = kcf::gaussian_label(6, 8, 1.0);
  EXPECT_DOUBLE_EQ(y(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(y(0, 1), y(0, 7));
  EXPECT_DOUBLE_EQ(y(1, 0), y(5, 0));
  EXPECT_EQ(kcf::wrap_lag(5, 8), -3);
  EXPECT_EQ(kcf::wrap_lag(4, 8), 4);
}

TEST(Kcf, FourierSolutionMatchesSpatialRidgeRegression) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    RealMatrix x(6, 8), z(6, 8);
    for (auto& v : x.data()) v = rng.normal(0, 0.3);
    for (auto& v : z.data()) v = rng.normal(0, 0.3);
    const auto y = kcf::gaussian_label(6, 8, 0.8);
    const auto resp = kcf::detect(kcf::train(x, y, 0.5, 1e-3), x, z, 0.5);
    const auto oracle = datkit::testing::kcf_spatial_oracle(x, y, z, 0.5, 1e-3);
    for (std::size_t i = 0; i < resp.size(); ++i) EXPECT_NEAR(resp.data()[i], oracle.data()[i], 1e-8);
  }
}

TEST(Kcf, TrainingPatchReproducesLabel) {
  Rng rng(4);
  RealMatrix x(8, 8);
  for (auto& v : x.data()) v = rng.normal(0, 0.3);
  const auto y = kcf::gaussian_label(8, 8, 1.0);
  const auto resp = kcf::detect(kcf::train(x, y, 0.5, 1e-7), x, x, 0.5);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(resp.data()[i], y.data()[i], 1e-4);
}

TEST(Kcf, FirstUpdateResponseMatchesOracle) {
  const Frame a = pattern(64, 64, 0, 0), b = pattern(64, 64, 1, 0);
  const BoundingBox box = BoundingBox::from_center(32, 32, 3.2, 3.2);
  KcfTracker t;
  t.init(a, box);
  ASSERT_EQ(t.window_width(), 8);
  (void)t.update(b);
  const KcfParams p;
  const auto y = datkit::testing::wrapped_gaussian(8, 8, 3.2 * p.output_sigma_factor);
  const auto oracle = datkit::testing::kcf_spatial_oracle(datkit::testing::kcf_window_features(a, 32, 32, 8, 8), y,
                                                          datkit::testing::kcf_window_features(b, 32, 32, 8, 8), p.kernel_sigma, p.lambda);
  for (std::size_t i = 0; i < oracle.size(); ++i) EXPECT_NEAR(t.last_response().data()[i], oracle.data()[i], 1e-6);
}

TEST(Kcf, WindowIsEvenAndSmooth) {
  KcfTracker t;
  t.init(Frame(400, 300), {100, 100, 71, 33});
  EXPECT_EQ(t.window_width(), 180);  // ceil(177.5) = 178 -> 180
  EXPECT_EQ(t.window_height(), 90);  // 82.5 -> 84 = 2^2*3*7 -> 90
}

TEST(Kcf, TracksIntegerTranslation) {
  const auto g = translation_sequence(30, 2.0, 1.0, 3);
  KcfTracker t;
  t.init(g.sequence.load(0), *g.truth.boxes[0]);
  for (std::size_t f = 1; f < 30; ++f) {
    const auto u = t.update(g.sequence.load(f));
    ASSERT_FALSE(u.failed) << "frame " << f;
    EXPECT_LE(std::abs(u.box->center_x() - g.truth.boxes[f]->center_x()), 1.0) << "frame " << f;
    EXPECT_LE(std::abs(u.box->center_y() - g.truth.boxes[f]->center_y()), 1.0) << "frame " << f;
  }
}

TEST(Kcf, ContractChecks) {
  KcfTracker t;
  EXPECT_THROW(t.update(Frame(32, 32)), ContractViolation);
  EXPECT_THROW(t.init(Frame(32, 32), {50, 50, 4, 4}), TrackerInitError);
  EXPECT_THROW(KcfTracker(KcfParams{.padding = 0.5}), ContractViolation);
}
