#include <gtest/gtest.h>

#include <cmath>

#include "datkit/datkit.hpp"
#include "support/reference_sim.hpp"
#include "support/stubs.hpp"

using namespace datkit;
namespace dt = datkit::testing;

namespace {

DatParams rck(std::size_t r, std::size_t c, std::size_t k) {
  DatParams p;
  p.reset_iterations = r;
  p.consecutive_iou = c;
  p.check_iterations = k;
  return p;
}

dt::BoxScript steady(std::size_t n) { return dt::BoxScript(n, BoundingBox{100, 100, 40, 40}); }

std::string sources(const Trace& t) {
  std::string s;
  for (const auto& o : t) s += o.source == Source::Detector ? 'D' : o.source == Source::Tracker ? 'T' : 'N';
  return s;
}

std::vector<std::size_t> calls_of(const Trace& t) {
  std::vector<std::size_t> v;
  for (const auto& o : t)
    if (o.detector_called) v.push_back(o.frame_index);
  return v;
}

Trace run_stubs(const dt::BoxScript& script, std::vector<bool> fails, const DatParams& p) {
  dt::ScriptedDetector det(script);
  return dat_run(dt::blank_sequence(script.size()), det, dt::scripted_tracker_factory(std::move(fails)), p, RunMode::Dat);
}

}  // namespace

TEST(Dat, ScheduledResetPattern) {
  const Trace t = run_stubs(steady(10), {}, rck(4, 2, 60));
  EXPECT_EQ(sources(t), "DDTTTTDDTT");
  EXPECT_EQ(t[1].state_after, StateTag::Tracking);
  EXPECT_FALSE(t[2].detector_called);
  EXPECT_TRUE(t[6].detector_called);
}

TEST(Dat, AlwaysMissDetectorProbesEveryK) {
  const Trace t = run_stubs(dt::BoxScript(10), {}, rck(100, 2, 3));
  EXPECT_EQ(calls_of(t), (std::vector<std::size_t>{0, 1, 4, 7}));
  EXPECT_EQ(t[1].state_after, StateTag::Disabled);
  EXPECT_EQ(sources(t), "NNNNNNNNNN");
}

TEST(Dat, TrackerFailureHandsSameFrameToDetector) {
  std::vector<bool> fails(12, false);
  fails[5] = true;
  const Trace t = run_stubs(steady(12), fails, rck(100, 3, 60));
  EXPECT_EQ(sources(t), "DDDTTDDDTTTT");
  EXPECT_TRUE(t[5].tracker_updated);
  EXPECT_TRUE(t[5].detector_called);
  EXPECT_EQ(t[5].source, Source::Detector);
}

TEST(Dat, ExactlyOneLocalizerPerFrame) {
  const auto b = dt::random_behavior(17, 400);
  const Trace t = run_stubs(b.detections, b.tracker_fails, dt::to_dat_params(b.params));
  for (const auto& o : t) {
    EXPECT_EQ(o.box.has_value(), o.source != Source::None);
    if (o.source == Source::Tracker) EXPECT_FALSE(o.detector_called);
  }
}

TEST(Dat, JumpBreaksTheStreak) {
  dt::BoxScript s = steady(8);
  s[2] = BoundingBox{400, 300, 40, 40};  // IOU 0 with its neighbours
  const Trace t = run_stubs(s, {}, rck(100, 3, 60));
  EXPECT_EQ(sources(t), "DDDDDDTT");
}

TEST(Dat, OverlapMustExceedThreshold) {
  // Consecutive boxes with IOU exactly 0.1 do not extend the streak.
  dt::BoxScript s;
  for (int i = 0; i < 6; ++i) s.push_back(BoundingBox{i * 36.0, 0, 44, 10});
  ASSERT_EQ(iou(*s[0], *s[1]), 0.1);
  const Trace t = run_stubs(s, {}, rck(100, 2, 60));
  EXPECT_EQ(sources(t), "DDDDDD");
}

TEST(Dat, DisabledProbeWithSingleHitRequirementStartsTracker) {
  dt::BoxScript s(12);
  for (std::size_t f = 4; f < 12; ++f) s[f] = BoundingBox{10, 10, 20, 20};
  const Trace t = run_stubs(s, {}, rck(100, 1, 4));
  // Frame 0 misses and disables; the probe at frame 4 hits and, with C=1,
  // hands over to the tracker at once.
  EXPECT_EQ(calls_of(t), (std::vector<std::size_t>{0, 4}));
  EXPECT_EQ(sources(t), "NNNNDTTTTTTT");
}

TEST(Dat, DisabledProbeResumesAcquisition) {
  dt::BoxScript s(20);
  for (std::size_t f = 6; f < 20; ++f) s[f] = BoundingBox{10, 10, 20, 20};
  const Trace t = run_stubs(s, {}, rck(100, 3, 3));
  EXPECT_EQ(calls_of(t), (std::vector<std::size_t>{0, 1, 2, 5, 8, 9, 10}));
  EXPECT_EQ(t[8].state_after, StateTag::Acquiring);
  EXPECT_EQ(t[10].state_after, StateTag::Tracking);
}

TEST(Dat, ResetWithoutStreakNeedsOneDetection) {
  DatParams p = rck(3, 3, 60);
  p.reset_requires_streak = false;
  const Trace t = run_stubs(steady(12), {}, p);
  EXPECT_EQ(sources(t), "DDDTTTDTTTDT");
}

TEST(Dat, TrackerInitFailureIsEngineError) {
  struct Refusing : Tracker {
    void init(const Frame&, const BoundingBox&) override { throw TrackerInitError("no"); }
    TrackerUpdate update(const Frame&) override { return TrackerUpdate::failure(); }
    bool initialized() const noexcept override { return false; }
    std::string_view name() const noexcept override { return "refusing"; }
  };
  dt::ScriptedDetector det(steady(5));
  EXPECT_THROW(dat_run(dt::blank_sequence(5), det, [] { return std::make_unique<Refusing>(); }, rck(10, 1, 5), RunMode::Dat),
               EngineError);
}

TEST(Dat, InvalidParamsRejected) {
  dt::ScriptedDetector det(steady(1));
  EXPECT_THROW(DatEngine(det, dt::perfect_tracker_factory(), rck(0, 1, 1)), ValidationError);
  DatParams p = rck(1, 1, 1);
  p.category = Category::O;
  EXPECT_THROW(DatEngine(det, dt::perfect_tracker_factory(), p), ValidationError);
}

TEST(Dat, ParamsParseRck) {
  const DatParams p = DatParams{}.with_rck("200/8/30");
  EXPECT_EQ(p.reset_iterations, 200u);
  EXPECT_EQ(p.consecutive_iou, 8u);
  EXPECT_EQ(p.check_iterations, 30u);
  EXPECT_EQ(p.name(), "200/8/30");
  for (const char* bad : {"1/2", "0/1/1", "a/b/c", "1/2/3/4", "1/-2/3", "01/2/3"})
    EXPECT_THROW(DatParams{}.with_rck(bad), ValidationError) << bad;
}

// ---------------------------------------------------------------------------
// Baselines

TEST(Baselines, DetectorOnlyCallsEveryFrame) {
  dt::ScriptedDetector det(steady(7));
  const Trace t = dat_run(dt::blank_sequence(7), det, dt::perfect_tracker_factory(), rck(2, 1, 1), RunMode::DetectorOnly);
  EXPECT_EQ(det.calls().size(), 7u);
  EXPECT_EQ(sources(t), "DDDDDDD");
}

TEST(Baselines, TrackerOnlyStartsAtFirstGroundTruth) {
  std::vector<AnnotationRecord> ann{{2, Category::L, {5, 5, 4, 4}}, {4, Category::L, {6, 5, 4, 4}}};
  dt::ScriptedDetector det(steady(6));
  std::vector<bool> fails(6, false);
  fails[4] = true;
  const Trace t = dat_run(dt::blank_sequence(6, ann), det, dt::scripted_tracker_factory(fails), rck(2, 1, 1),
                          RunMode::TrackerOnly);
  EXPECT_TRUE(det.calls().empty());
  EXPECT_EQ(sources(t), "NNTTNT");
  EXPECT_EQ(t[2].box, ann[0].box);
  EXPECT_EQ(t[5].box->x, 7);  // failed frame keeps the last good position
  EXPECT_FALSE(t[1].tracker_updated);
}

TEST(Baselines, TrackerOnlyWithoutGroundTruthIsUnusable) {
  dt::ScriptedDetector det(steady(3));
  EXPECT_THROW(dat_run(dt::blank_sequence(3), det, dt::perfect_tracker_factory(), rck(2, 1, 1), RunMode::TrackerOnly),
               UnusableBaselineError);
}

// ---------------------------------------------------------------------------
// Properties

TEST(DatProperties, DetectorCallsMatchClosedForm) {
  for (std::size_t n : {100u, 1000u})
    for (std::size_t r : {50u, 100u, 200u})
      for (std::size_t c : {1u, 3u, 9u}) {
        dt::ScriptedDetector det(steady(n));
        (void)dat_run(dt::blank_sequence(n), det, dt::perfect_tracker_factory(), rck(r, c, 60), RunMode::Dat);
        const double closed = static_cast<double>(c) * std::ceil(double(n - c) / double(r + c)) + double(c);
        EXPECT_LE(std::abs(double(det.calls().size()) - closed), double(c)) << n << " " << r << " " << c;
      }
}

TEST(DatProperties, MatchesReferenceSimulator) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto b = dt::random_behavior(seed, 300);
    EXPECT_EQ(dt::check_against_reference(b), "") << "seed " << seed;
  }
}

TEST(DatProperties, ReferenceCoversAllStates) {
  // Sanity check on the generator: the behaviors exercise every state.
  std::size_t tracking = 0, disabled = 0, probes = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto b = dt::random_behavior(seed, 300);
    const auto t = run_stubs(b.detections, b.tracker_fails, dt::to_dat_params(b.params));
    for (const auto& o : t) {
      tracking += o.state_after == StateTag::Tracking;
      disabled += o.state_after == StateTag::Disabled;
      probes += o.detector_called && o.state_after == StateTag::Disabled;
    }
  }
  EXPECT_GT(tracking, 0u);
  EXPECT_GT(disabled, 0u);
  EXPECT_GT(probes, 0u);
}

TEST(DatProperties, CallsMonotoneInRAndC) {
  auto calls = [&](std::size_t r, std::size_t c) {
    dt::RefParams p;
    p.R = r;
    p.C = c;
    p.K = 30;
    return dt::reference_detector_calls(dt::reference_simulate(steady(2000), {}, 2000, p));
  };
  for (std::size_t c : {1u, 3u, 8u}) EXPECT_GE(calls(50, c), calls(100, c));
  for (std::size_t r : {50u, 100u, 200u}) EXPECT_LE(calls(r, 1), calls(r, 3));
}
