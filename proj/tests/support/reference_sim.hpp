#pragma once

// Brute-force DAT reference, written straight from the frame rules with a
// plain mode variable and counters. It shares nothing with dat_step except
// iou(), so disagreements point at one side or the other.

#include <optional>
#include <vector>

#include "datkit/core.hpp"
#include "datkit/random.hpp"

namespace datkit::testing {

struct RefFrame {
  char source = 'N';  // 'D', 'T' or 'N'
  bool detector_called = false;
  bool tracker_updated = false;
  std::optional<BoundingBox> box;
};

struct RefParams {
  std::size_t R = 100, C = 3, K = 60;
  double overlap = 0.1;
  bool reset_requires_streak = true;
};

/// `detections[f]`: what the detector returns on frame f. `tracker_fails[f]`:
/// whether a running tracker fails on frame f (missing entries = success).
/// A successful tracker moves its box one pixel right per update.
inline std::vector<RefFrame> reference_simulate(const std::vector<std::optional<BoundingBox>>& detections,
                                                const std::vector<bool>& tracker_fails, std::size_t n,
                                                const RefParams& p) {
  enum Mode { Acquire, Track, Off };
  Mode mode = Acquire;
  std::size_t hits = 0, misses = 0, need = p.C, age = 0, idle = 0;
  std::optional<BoundingBox> prev;
  BoundingBox tbox;
  std::vector<RefFrame> out;

  auto enter_acquire = [&](std::size_t required) {
    mode = Acquire;
    hits = 0;
    misses = 0;
    prev.reset();
    need = required;
  };
  auto start_tracking = [&](const BoundingBox& b) {
    mode = Track;
    age = 0;
    tbox = b;
  };

  for (std::size_t f = 0; f < n; ++f) {
    RefFrame r;
    const std::optional<BoundingBox> d = f < detections.size() ? detections[f] : std::nullopt;
    const bool fails = f < tracker_fails.size() && tracker_fails[f];

    if (mode == Track && age == p.R) enter_acquire(p.reset_requires_streak ? p.C : 1);

    if (mode == Track) {
      r.tracker_updated = true;
      ++age;
      if (!fails) {
        tbox.x += 1.0;
        r.source = 'T';
        r.box = tbox;
        out.push_back(r);
        continue;
      }
      enter_acquire(p.C);
    }

    if (mode == Acquire) {
      r.detector_called = true;
      if (d) {
        hits = (prev && iou(*d, *prev) > p.overlap) ? hits + 1 : 1;
        misses = 0;
        prev = d;
        r.source = 'D';
        r.box = d;
        if (hits >= need) start_tracking(*d);
      } else {
        ++misses;
        hits = 0;
        prev.reset();
        if (misses >= p.C) {
          mode = Off;
          idle = 0;
        }
      }
    } else if (mode == Off) {
      ++idle;
      if (idle % p.K == 0) {
        r.detector_called = true;
        if (d) {
          r.source = 'D';
          r.box = d;
          enter_acquire(p.C);
          hits = 1;
          prev = d;
          if (hits >= need) start_tracking(*d);
        }
      }
    }
    out.push_back(r);
  }
  return out;
}

inline std::size_t reference_detector_calls(const std::vector<RefFrame>& frames) {
  std::size_t n = 0;
  for (const auto& f : frames) n += f.detector_called ? 1 : 0;
  return n;
}

/// Random detector/tracker behavior: the detector follows a drifting target
/// with random misses, occasional jumps (which break the IOU streak) and
/// long dropouts; the tracker fails at random.
struct RandomBehavior {
  std::vector<std::optional<BoundingBox>> detections;
  std::vector<bool> tracker_fails;
  RefParams params;
};

inline RandomBehavior random_behavior(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  RandomBehavior b;
  b.params.R = 1 + rng.below(40);
  b.params.C = 1 + rng.below(5);
  b.params.K = 1 + rng.below(12);
  b.params.reset_requires_streak = rng.uniform() < 0.5;
  const double miss = rng.uniform(0.0, 0.5);
  const double jump = rng.uniform(0.0, 0.2);
  const double fail = rng.uniform(0.0, 0.15);
  double cx = 100, cy = 100;
  std::size_t dropout = 0;
  for (std::size_t f = 0; f < n; ++f) {
    if (dropout == 0 && rng.uniform() < 0.01) dropout = 1 + rng.below(60);
    if (rng.uniform() < jump) {
      cx = rng.uniform(30, 600);
      cy = rng.uniform(30, 350);
    } else {
      cx += rng.normal(0, 2);
      cy += rng.normal(0, 2);
    }
    if (dropout > 0) {
      --dropout;
      b.detections.emplace_back();
    } else if (rng.uniform() < miss) {
      b.detections.emplace_back();
    } else {
      b.detections.push_back(BoundingBox::from_center(cx, cy, 40, 40));
    }
    b.tracker_fails.push_back(rng.uniform() < fail);
  }
  return b;
}

}  // namespace datkit::testing
