#pragma once

// Detector-assisted tracking.
//
// Each frame is localized by exactly one of a detector or a tracker. The
// engine starts out acquiring: the detector runs every frame until it has
// produced C consecutive hits, each overlapping the previous one by more
// than `overlap_threshold` IOU, and then a fresh tracker is initialized on
// the last detection. The tracker runs until it fails or has driven R
// frames, at which point acquisition starts over. C consecutive misses
// while acquiring disable the pipeline; while disabled the detector probes
// once every K frames and a hit resumes acquisition.

#include <charconv>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "datkit/core.hpp"
#include "datkit/dataio.hpp"
#include "datkit/detector.hpp"
#include "datkit/error.hpp"
#include "datkit/text.hpp"
#include "datkit/tracker.hpp"

namespace datkit {

struct DatParams {
  std::size_t reset_iterations = 100;   // R
  std::size_t consecutive_iou = 3;      // C
  std::size_t check_iterations = 60;    // K
  double overlap_threshold = 0.1;
  Category category = Category::L;
  // When false, a scheduled reset re-initializes on a single detection
  // instead of a full C-streak.
  bool reset_requires_streak = true;

  bool valid() const noexcept {
    return reset_iterations >= 1 && consecutive_iou >= 1 && check_iterations >= 1 && overlap_threshold > 0.0 &&
           overlap_threshold < 1.0 && (category == Category::L || category == Category::R);
  }

  /// "R/C/K"
  std::string name() const {
    return std::to_string(reset_iterations) + "/" + std::to_string(consecutive_iou) + "/" +
           std::to_string(check_iterations);
  }

  /// Parses "R/C/K" into the three counts, leaving the other fields alone.
  DatParams with_rck(std::string_view rck) const {
    const auto parts = text::split(rck, '/');
    if (parts.size() != 3) throw ValidationError("parameters must be R/C/K, got '" + std::string(rck) + "'");
    std::size_t v[3];
    for (int i = 0; i < 3; ++i) {
      const auto parsed = text::parse_int(parts[static_cast<std::size_t>(i)]);
      if (!parsed || *parsed < 1 || std::to_string(*parsed) != parts[static_cast<std::size_t>(i)])
        throw ValidationError("parameters must be positive integers R/C/K, got '" + std::string(rck) + "'");
      v[i] = static_cast<std::size_t>(*parsed);
    }
    DatParams out = *this;
    out.reset_iterations = v[0];
    out.consecutive_iou = v[1];
    out.check_iterations = v[2];
    return out;
  }
};

enum class Source { None, Detector, Tracker };
enum class StateTag { Acquiring, Tracking, Disabled };

inline constexpr std::string_view to_string(Source s) noexcept {
  switch (s) {
    case Source::None: return "NONE";
    case Source::Detector: return "DETECTOR";
    case Source::Tracker: return "TRACKER";
  }
  return "?";
}

inline std::optional<Source> source_from_string(std::string_view s) noexcept {
  if (s == "NONE") return Source::None;
  if (s == "DETECTOR") return Source::Detector;
  if (s == "TRACKER") return Source::Tracker;
  return std::nullopt;
}

inline constexpr std::string_view to_string(StateTag s) noexcept {
  switch (s) {
    case StateTag::Acquiring: return "acquiring";
    case StateTag::Tracking: return "tracking";
    case StateTag::Disabled: return "disabled";
  }
  return "?";
}

struct Acquiring {
  std::size_t hit_streak = 0;
  std::size_t miss_streak = 0;
  std::optional<Detection> last_detection;
  std::size_t required_hits = 0;  // hits needed to start the tracker
};

struct Tracking {
  std::unique_ptr<Tracker> tracker;
  std::size_t frames_since_init = 0;
};

struct Disabled {
  std::size_t frames_idle = 0;
};

using DatState = std::variant<Acquiring, Tracking, Disabled>;

inline DatState initial_state(const DatParams& p) { return Acquiring{0, 0, std::nullopt, p.consecutive_iou}; }

inline StateTag tag_of(const DatState& s) noexcept {
  switch (s.index()) {
    case 0: return StateTag::Acquiring;
    case 1: return StateTag::Tracking;
    default: return StateTag::Disabled;
  }
}

struct FrameOutcome {
  std::size_t frame_index = 0;
  std::optional<BoundingBox> box;
  Source source = Source::None;
  bool detector_called = false;
  bool tracker_updated = false;
  StateTag state_after = StateTag::Acquiring;
};

using Trace = std::vector<FrameOutcome>;

namespace detail {

inline std::unique_ptr<Tracker> start_tracker(const TrackerFactory& make_tracker, const Frame& frame,
                                              const BoundingBox& box) {
  auto tracker = make_tracker();
  try {
    tracker->init(frame, box);
  } catch (const TrackerInitError& e) {
    throw EngineError("frame " + std::to_string(frame.index) + ": tracker initialization failed: " + e.what());
  }
  return tracker;
}

inline std::optional<Detection> detect_primary(Detector& detector, const Frame& frame, Category category) {
  const DetectorResult result = detector.detect(frame, category);
  return select_primary(result.detections, category);
}

// One acquisition step; `state` holds `acq`.
inline void acquire(DatState& state, Acquiring& acq, const Frame& frame, Detector& detector,
                    const TrackerFactory& make_tracker, const DatParams& p, FrameOutcome& out) {
  out.detector_called = true;
  const auto hit = detect_primary(detector, frame, p.category);
  if (!hit) {
    acq.miss_streak += 1;
    acq.hit_streak = 0;
    acq.last_detection.reset();
    if (acq.miss_streak >= p.consecutive_iou) state = Disabled{0};
    return;
  }
  if (!acq.last_detection || iou(hit->box, acq.last_detection->box) > p.overlap_threshold) acq.hit_streak += 1;
  else acq.hit_streak = 1;
  acq.miss_streak = 0;
  acq.last_detection = hit;
  out.box = hit->box;
  out.source = Source::Detector;
  if (acq.hit_streak >= acq.required_hits) state = Tracking{start_tracker(make_tracker, frame, hit->box), 0};
}

}  // namespace detail

/// Advances the engine by one frame.
inline FrameOutcome dat_step(DatState& state, const Frame& frame, Detector& detector,
                             const TrackerFactory& make_tracker, const DatParams& p) {
  FrameOutcome out;
  out.frame_index = frame.index;

  // Scheduled reset.
  if (auto* t = std::get_if<Tracking>(&state); t && t->frames_since_init >= p.reset_iterations)
    state = Acquiring{0, 0, std::nullopt, p.reset_requires_streak ? p.consecutive_iou : 1};

  if (auto* t = std::get_if<Tracking>(&state)) {
    const TrackerUpdate upd = t->tracker->update(frame);
    t->frames_since_init += 1;
    out.tracker_updated = true;
    if (!upd.failed && upd.box) {
      out.box = upd.box;
      out.source = Source::Tracker;
      out.state_after = StateTag::Tracking;
      return out;
    }
    // Tracker lost the target: the detector takes this same frame.
    state = initial_state(p);
  }

  if (auto* a = std::get_if<Acquiring>(&state)) {
    detail::acquire(state, *a, frame, detector, make_tracker, p, out);
  } else if (auto* d = std::get_if<Disabled>(&state)) {
    d->frames_idle += 1;
    if (d->frames_idle % p.check_iterations == 0) {
      out.detector_called = true;
      if (const auto hit = detail::detect_primary(detector, frame, p.category)) {
        out.box = hit->box;
        out.source = Source::Detector;
        Acquiring acq{1, 0, hit, p.consecutive_iou};
        if (acq.hit_streak >= acq.required_hits)
          state = Tracking{detail::start_tracker(make_tracker, frame, hit->box), 0};
        else
          state = std::move(acq);
      }
    }
  }
  out.state_after = tag_of(state);
  return out;
}

/// Stateful wrapper around dat_step.
class DatEngine {
 public:
  DatEngine(Detector& detector, TrackerFactory make_tracker, DatParams params)
      : detector_(detector), make_tracker_(std::move(make_tracker)), params_(params), state_(initial_state(params)) {
    if (!params_.valid()) throw ValidationError("invalid DAT parameters " + params_.name());
  }

  FrameOutcome step(const Frame& frame) { return dat_step(state_, frame, detector_, make_tracker_, params_); }

  const DatState& state() const noexcept { return state_; }
  const DatParams& params() const noexcept { return params_; }

 private:
  Detector& detector_;
  TrackerFactory make_tracker_;
  DatParams params_;
  DatState state_;
};

enum class RunMode { Dat, DetectorOnly, TrackerOnly };

inline constexpr std::string_view to_string(RunMode m) noexcept {
  switch (m) {
    case RunMode::Dat: return "dat";
    case RunMode::DetectorOnly: return "detector_only";
    case RunMode::TrackerOnly: return "tracker_only";
  }
  return "?";
}

inline std::optional<RunMode> run_mode_from_string(std::string_view s) noexcept {
  if (s == "dat") return RunMode::Dat;
  if (s == "detector_only") return RunMode::DetectorOnly;
  if (s == "tracker_only") return RunMode::TrackerOnly;
  return std::nullopt;
}

/// Runs a whole sequence, loading one frame at a time.
///  - Dat: folds dat_step from the initial acquiring state.
///  - DetectorOnly: the detector localizes every frame.
///  - TrackerOnly: the tracker starts from the first ground-truth box of
///    the category and is never re-initialized.
inline Trace dat_run(const FrameSequence& seq, Detector& detector, const TrackerFactory& make_tracker,
                     const DatParams& params, RunMode mode) {
  Trace trace;
  trace.reserve(seq.size());
  switch (mode) {
    case RunMode::Dat: {
      DatEngine engine(detector, make_tracker, params);
      for (std::size_t i = 0; i < seq.size(); ++i) trace.push_back(engine.step(seq.load(i)));
      break;
    }
    case RunMode::DetectorOnly: {
      for (std::size_t i = 0; i < seq.size(); ++i) {
        const Frame frame = seq.load(i);
        FrameOutcome out;
        out.frame_index = i;
        out.detector_called = true;
        if (const auto hit = detail::detect_primary(detector, frame, params.category)) {
          out.box = hit->box;
          out.source = Source::Detector;
        }
        trace.push_back(out);
      }
      break;
    }
    case RunMode::TrackerOnly: {
      const auto gt = seq.ground_truth(params.category);
      std::size_t first = 0;
      while (first < gt.size() && !gt[first]) ++first;
      if (first == gt.size())
        throw UnusableBaselineError("tracker-only baseline needs a ground-truth box for category " +
                                    to_string(params.category));
      std::unique_ptr<Tracker> tracker;
      for (std::size_t i = 0; i < seq.size(); ++i) {
        FrameOutcome out;
        out.frame_index = i;
        out.state_after = StateTag::Tracking;
        if (i >= first) {
          const Frame frame = seq.load(i);
          out.tracker_updated = true;
          if (i == first) {
            tracker = detail::start_tracker(make_tracker, frame, *gt[first]);
            out.box = gt[first];
            out.source = Source::Tracker;
          } else if (const auto upd = tracker->update(frame); !upd.failed && upd.box) {
            out.box = upd.box;
            out.source = Source::Tracker;
          }
        }
        trace.push_back(out);
      }
      break;
    }
  }
  return trace;
}

}  // namespace datkit
