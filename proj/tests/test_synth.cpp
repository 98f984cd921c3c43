#include <gtest/gtest.h>

#include "datkit/datkit.hpp"

using namespace datkit;

namespace {

SynthSpec simple_spec() {
  SynthSpec s;
  s.canvas = {160, 120};
  s.n_frames = 30;
  s.waypoints = {{0, 40, 40, 24, 24}, {29, 110, 70, 24, 24}};
  s.texture_seed = 3;
  s.occlusions = {{10, 14}};
  s.absences = {{20, 23}};
  return s;
}

}  // namespace

TEST(Synth, InterpolatesLinearly) {
  const auto spec = simple_spec();
  const auto mid = interpolate_path(spec.waypoints, 29);
  EXPECT_DOUBLE_EQ(mid.center_x(), 110);
  const auto q = interpolate_path(spec.waypoints, 10);
  EXPECT_NEAR(q.center_x(), 40 + 70.0 * 10 / 29, 1e-12);
}

TEST(Synth, TruthFlagsOcclusionsAndAbsences) {
  const auto t = synthesize_truth(simple_spec(), 1);
  EXPECT_TRUE(t.occluded[10]);
  EXPECT_TRUE(t.occluded[13]);
  EXPECT_FALSE(t.occluded[14]);
  EXPECT_TRUE(t.boxes[12]);  // occluded targets keep ground truth
  EXPECT_FALSE(t.boxes[21]);
  EXPECT_EQ(t.annotations.size(), 27u);
}

TEST(Synth, SameSeedSameFrames) {
  const auto a = generate_sequence(simple_spec(), 5);
  const auto b = generate_sequence(simple_spec(), 5);
  const auto c = generate_sequence(simple_spec(), 6);
  for (std::size_t f : {0u, 12u, 29u}) EXPECT_EQ(a.sequence.load(f), b.sequence.load(f));
  EXPECT_NE(a.sequence.load(0).pixels, c.sequence.load(0).pixels);
}

TEST(Synth, FramesRenderIndependently) {
  const auto g = generate_sequence(simple_spec(), 5);
  const Frame late = g.sequence.load(25);
  (void)g.sequence.load(3);
  EXPECT_EQ(g.sequence.load(25), late);
}

TEST(Synth, OccluderCoversTargetWithMargin) {
  auto spec = simple_spec();
  spec.background = {Background::Kind::Flat, 0};
  const auto g = generate_sequence(spec, 1);
  const Frame f = g.sequence.load(11);
  const auto r = rasterize(*g.truth.boxes[11]);
  for (int y = r.y - spec.occluder_margin; y < r.y + r.h + spec.occluder_margin; ++y)
    for (int x = r.x - spec.occluder_margin; x < r.x + r.w + spec.occluder_margin; ++x)
      if (x >= 0 && y >= 0 && x < f.width && y < f.height) ASSERT_EQ(f.at(x, y), kOccluderIntensity);
}

TEST(Synth, TargetIsTexturedAndAbsentFrameIsBackground) {
  auto spec = simple_spec();
  spec.background = {Background::Kind::Flat, 0};
  const auto g = generate_sequence(spec, 1);
  const auto r = rasterize(*g.truth.boxes[0]);
  EXPECT_GT(mean_abs_gradient(g.sequence.load(0), r), 5.0);
  const Frame absent = g.sequence.load(21);
  for (auto p : absent.pixels) ASSERT_EQ(p, 96);
}

TEST(Synth, JitterIsDeterministicPerFrame) {
  auto spec = simple_spec();
  spec.jitter_sigma = 2.0;
  const auto a = synthesize_truth(spec, 8), b = synthesize_truth(spec, 8);
  EXPECT_EQ(a.annotations, b.annotations);
  EXPECT_NE(a.boxes[5], interpolate_path(spec.waypoints, 5));
}

TEST(Synth, ValidationRejectsBadSpecs) {
  auto s = simple_spec();
  s.waypoints.back().frame_index = 28;
  EXPECT_THROW(validate(s), SpecError);
  s = simple_spec();
  s.occlusions = {{19, 21}};
  EXPECT_THROW(validate(s), SpecError);
  s = simple_spec();
  s.occlusions = {{5, 5}};
  EXPECT_THROW(validate(s), SpecError);
  s = simple_spec();
  s.category = Category::N;
  EXPECT_THROW(validate(s), SpecError);
  s = simple_spec();
  s.waypoints[1].x = 155;
  EXPECT_THROW(synthesize_truth(s, 1), SpecError);
}

TEST(Synth, JsonRoundTrip) {
  auto s = simple_spec();
  s.background = {Background::Kind::Noise, 3.5};
  s.participant_id = "P9";
  const auto j = to_json(s);
  const auto back = synth_spec_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back), j);
}

TEST(Synth, JsonErrorsAreSpecErrors) {
  EXPECT_THROW(synth_spec_from_json(nlohmann::json::parse(R"({"waypoints":[]})")), SpecError);
  EXPECT_THROW(synth_spec_from_json(nlohmann::json::parse(R"({"n_frames":2,"waypoints":[[0,5,5,2,2],[1,5,5,2,2]],"background":"stripes"})")),
               SpecError);
}

TEST(Benchmark, SpecsAreValidWithTwoOcclusionsAndJumps) {
  for (std::size_t i = 0; i < 10; ++i) {
    const auto spec = occlusion_benchmark_spec(i, 2024);
    EXPECT_NO_THROW(validate(spec));
    ASSERT_EQ(spec.occlusions.size(), 2u);
    for (const auto& o : spec.occlusions) {
      EXPECT_GE(o.length(), 12u);
      EXPECT_LE(o.length(), 17u);
      const auto before = interpolate_path(spec.waypoints, o.start);
      const auto after = interpolate_path(spec.waypoints, o.end - 1);
      EXPECT_GE(std::hypot(after.center_x() - before.center_x(), after.center_y() - before.center_y()), 160.0 - 1e-9);
    }
    EXPECT_EQ(spec.category, i % 2 == 0 ? Category::L : Category::R);
  }
}

TEST(Benchmark, ShortSequencesRejected) { EXPECT_THROW(occlusion_benchmark_spec(0, 1, 100), ContractViolation); }

TEST(Benchmark, SuiteIsReproducible) {
  const auto a = occlusion_benchmark_suite(2, 77, 300);
  const auto b = occlusion_benchmark_suite(2, 77, 300);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[1].sequence.annotations(), b[1].sequence.annotations());
  EXPECT_EQ(a[1].sequence.load(150), b[1].sequence.load(150));
  EXPECT_EQ(a[0].sequence.participant_id(), "P0");
}
