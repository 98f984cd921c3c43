#pragma once

// Scoring against ground truth, cost-model frame rates and fold
// aggregation.
//
// Per frame, the primary prediction is matched to the ground-truth box
// through the IOU bands of MatchThresholds:
//   accurate (IOU >= 0.5)            -> TP
//   localization error (0.15..0.5)   -> TP, and counted in the
//                                       localization-error rate
//   background error (IOU < 0.15)    -> one FP and one FN
//   miss                             -> FN
//   false alarm                      -> FP
// A strict variant treats localization errors like background errors.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "datkit/core.hpp"
#include "datkit/dat.hpp"
#include "datkit/dataio.hpp"
#include "datkit/error.hpp"

namespace datkit {

struct MatchCounts {
  std::size_t accurate = 0;
  std::size_t localization = 0;
  std::size_t background = 0;
  std::size_t miss = 0;
  std::size_t false_alarm = 0;
  std::size_t correct_rejection = 0;

  std::size_t tp() const noexcept { return accurate + localization; }
  std::size_t fp() const noexcept { return background + false_alarm; }
  std::size_t fn() const noexcept { return background + miss; }

  void add(MatchOutcome m) noexcept {
    switch (m) {
      case MatchOutcome::AccuratePrediction: ++accurate; break;
      case MatchOutcome::LocalizationError: ++localization; break;
      case MatchOutcome::BackgroundError: ++background; break;
      case MatchOutcome::Miss: ++miss; break;
      case MatchOutcome::FalseAlarm: ++false_alarm; break;
      case MatchOutcome::CorrectRejection: ++correct_rejection; break;
    }
  }

  MatchCounts& operator+=(const MatchCounts& o) noexcept {
    accurate += o.accurate;
    localization += o.localization;
    background += o.background;
    miss += o.miss;
    false_alarm += o.false_alarm;
    correct_rejection += o.correct_rejection;
    return *this;
  }
};

/// Harmonic mean; 0 when both inputs are 0.
inline double f1(double precision, double recall) noexcept {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

inline double safe_ratio(std::size_t num, std::size_t den) noexcept {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

struct CostModel {
  double c_detect = 1.0 / 1.5;  // s per detector call
  double c_track = 1.0 / 155.0;  // s per tracker update
  double c_idle = 0.0;          // s per frame where nothing runs

  bool valid() const noexcept { return c_detect >= 0.0 && c_track >= 0.0 && c_idle >= 0.0; }
};

struct RunCounts {
  std::size_t frames = 0;
  std::size_t detector_calls = 0;
  std::size_t tracker_updates = 0;
  std::size_t idle_frames = 0;

  RunCounts& operator+=(const RunCounts& o) noexcept {
    frames += o.frames;
    detector_calls += o.detector_calls;
    tracker_updates += o.tracker_updates;
    idle_frames += o.idle_frames;
    return *this;
  }
};

inline RunCounts count_components(const Trace& trace) {
  RunCounts c;
  c.frames = trace.size();
  for (const auto& o : trace) {
    c.detector_calls += o.detector_called ? 1 : 0;
    c.tracker_updates += o.tracker_updated ? 1 : 0;
    c.idle_frames += (!o.detector_called && !o.tracker_updated) ? 1 : 0;
  }
  return c;
}

/// frames / (calls * c_detect + updates * c_track + idle * c_idle).
inline double modeled_fps(const RunCounts& counts, const CostModel& cost) {
  if (!cost.valid()) throw ValidationError("cost model coefficients must be >= 0");
  const double seconds = static_cast<double>(counts.detector_calls) * cost.c_detect +
                         static_cast<double>(counts.tracker_updates) * cost.c_track +
                         static_cast<double>(counts.idle_frames) * cost.c_idle;
  if (!(seconds > 0.0)) throw Error("modeled frame rate is undefined: total modeled time is zero");
  return static_cast<double>(counts.frames) / seconds;
}

struct EvaluationReport {
  Category category = Category::L;
  MatchCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double precision_strict = 0.0;
  double recall_strict = 0.0;
  double f1_strict = 0.0;
  double localization_error_rate = 0.0;
  RunCounts run;
  std::optional<double> modeled_fps;
  std::optional<double> wall_fps;

  std::size_t ground_truth_frames() const noexcept {
    return counts.accurate + counts.localization + counts.background + counts.miss;
  }
  double detector_fraction() const noexcept { return safe_ratio(run.detector_calls, run.frames); }
};

inline void finalize_metrics(EvaluationReport& r) {
  const auto& c = r.counts;
  r.precision = safe_ratio(c.tp(), c.tp() + c.fp());
  r.recall = safe_ratio(c.tp(), c.tp() + c.fn());
  r.f1 = f1(r.precision, r.recall);
  r.precision_strict = safe_ratio(c.accurate, c.accurate + c.localization + c.fp());
  r.recall_strict = safe_ratio(c.accurate, c.accurate + c.localization + c.fn());
  r.f1_strict = f1(r.precision_strict, r.recall_strict);
  r.localization_error_rate = safe_ratio(c.localization, c.tp());
}

/// Per-frame ground truth of one category over [0, frames).
inline std::vector<std::optional<BoundingBox>> ground_truth_track(std::span<const AnnotationRecord> gt,
                                                                  Category category, std::size_t frames) {
  std::vector<std::optional<BoundingBox>> out(frames);
  std::optional<std::size_t> lo, hi;
  for (const auto& r : gt) {
    if (r.category != category) continue;
    lo = lo ? std::min(*lo, r.frame_index) : r.frame_index;
    hi = hi ? std::max(*hi, r.frame_index) : r.frame_index;
    if (r.frame_index < frames && !out[r.frame_index]) out[r.frame_index] = r.box;
  }
  if (hi && *hi >= frames)
    throw ValidationError("frame range mismatch: predictions cover frames [0, " + std::to_string(frames) +
                          ") but ground truth spans [" + std::to_string(*lo) + ", " + std::to_string(*hi) + "]");
  return out;
}

inline EvaluationReport score_predictions(std::span<const std::optional<BoundingBox>> predictions,
                                          std::span<const AnnotationRecord> gt, Category category,
                                          const MatchThresholds& th = {}) {
  if (!th.valid()) throw ValidationError("invalid match thresholds");
  const auto truth = ground_truth_track(gt, category, predictions.size());
  EvaluationReport r;
  r.category = category;
  r.run.frames = predictions.size();
  for (std::size_t f = 0; f < predictions.size(); ++f) {
    std::optional<Detection> pred;
    if (predictions[f]) pred = as_detection(*predictions[f], category);
    r.counts.add(classify_match(pred, truth[f], th));
  }
  finalize_metrics(r);
  return r;
}

/// Scores a run trace and fills in component accounting and, if a cost
/// model is given, the modeled frame rate.
inline EvaluationReport score_trace(const Trace& trace, std::span<const AnnotationRecord> gt, Category category,
                                    const MatchThresholds& th = {},
                                    const std::optional<CostModel>& cost = std::nullopt) {
  std::vector<std::optional<BoundingBox>> preds;
  preds.reserve(trace.size());
  for (const auto& o : trace) preds.push_back(o.box);
  EvaluationReport r = score_predictions(preds, gt, category, th);
  r.run = count_components(trace);
  if (cost && r.run.frames > 0) r.modeled_fps = modeled_fps(r.run, *cost);
  return r;
}

// ---------------------------------------------------------------------------
// Aggregation over folds

struct FoldEntry {
  Category category = Category::L;
  std::string sequence;
  int fold = 0;
  double value = 0.0;
};

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample SD over folds; 0 for a single fold
  std::size_t folds = 0;
};

/// Two-stage averaging: entries sharing (category, sequence, fold) are
/// averaged first; each fold's value is the mean over its
/// (category, sequence) cells; the result is mean and sample SD over folds.
inline MetricSummary aggregate(std::span<const FoldEntry> entries) {
  if (entries.empty()) throw ValidationError("cannot aggregate an empty group");
  std::map<std::tuple<int, int, std::string>, std::pair<double, std::size_t>> cells;
  for (const auto& e : entries) {
    auto& cell = cells[{e.fold, static_cast<int>(e.category), e.sequence}];
    cell.first += e.value;
    cell.second += 1;
  }
  std::map<int, std::pair<double, std::size_t>> folds;
  for (const auto& [key, cell] : cells) {
    auto& f = folds[std::get<0>(key)];
    f.first += cell.first / static_cast<double>(cell.second);
    f.second += 1;
  }
  std::vector<double> values;
  for (const auto& [fold, f] : folds) values.push_back(f.first / static_cast<double>(f.second));
  MetricSummary s;
  s.folds = values.size();
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["category"] = to_string(r.category);
  j["frames"] = r.run.frames;
  j["tp_accurate"] = r.counts.accurate;
  j["tp_localization"] = r.counts.localization;
  j["background_errors"] = r.counts.background;
  j["misses"] = r.counts.miss;
  j["false_alarms"] = r.counts.false_alarm;
  j["correct_rejections"] = r.counts.correct_rejection;
  j["fp"] = r.counts.fp();
  j["fn"] = r.counts.fn();
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["precision_strict"] = r.precision_strict;
  j["recall_strict"] = r.recall_strict;
  j["f1_strict"] = r.f1_strict;
  j["localization_error_rate"] = r.localization_error_rate;
  j["detector_calls"] = r.run.detector_calls;
  j["tracker_updates"] = r.run.tracker_updates;
  j["idle_frames"] = r.run.idle_frames;
  j["detector_fraction"] = r.detector_fraction();
  j["modeled_fps"] = r.modeled_fps ? nlohmann::ordered_json(*r.modeled_fps) : nlohmann::ordered_json(nullptr);
  j["wall_fps"] = r.wall_fps ? nlohmann::ordered_json(*r.wall_fps) : nlohmann::ordered_json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Trace files: frame,source,x,y,w,h,detector_called,tracker_updated

inline constexpr std::string_view kTraceHeader = "frame,source,x,y,w,h,detector_called,tracker_updated";

inline std::string emit_trace(const Trace& trace) {
  std::string out(kTraceHeader);
  out += '\n';
  for (const auto& o : trace) {
    out += std::to_string(o.frame_index);
    out += ',';
    out += to_string(o.source);
    if (o.box) {
      for (double v : {o.box->x, o.box->y, o.box->w, o.box->h}) {
        out += ',';
        out += text::format_double(v);
      }
    } else {
      out += ",,,,";
    }
    out += o.detector_called ? ",1" : ",0";
    out += o.tracker_updated ? ",1" : ",0";
    out += '\n';
  }
  return out;
}

inline Trace parse_trace(std::string_view csv) {
  const auto rows = text::lines(csv);
  if (rows.empty() || text::trim(rows[0]) != kTraceHeader)
    throw ParseError(std::string("expected header '") + std::string(kTraceHeader) + "'", 1);
  Trace trace;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (text::trim(rows[i]).empty()) continue;
    const auto f = text::split(rows[i], ',');
    if (f.size() != 8) throw ParseError("expected 8 fields", line_no);
    FrameOutcome o;
    const auto idx = text::parse_int(f[0]);
    if (!idx || *idx < 0) throw ParseError("bad frame index", line_no);
    o.frame_index = static_cast<std::size_t>(*idx);
    if (o.frame_index != trace.size()) throw ParseError("trace rows must be consecutive frames from 0", line_no);
    const auto src = source_from_string(f[1]);
    if (!src) throw ParseError("unknown source '" + std::string(f[1]) + "'", line_no);
    o.source = *src;
    if (o.source != Source::None) {
      double v[4];
      for (int k = 0; k < 4; ++k) {
        const auto p = text::parse_double(f[2 + static_cast<std::size_t>(k)]);
        if (!p) throw ParseError("non-numeric box field", line_no);
        v[k] = *p;
      }
      o.box = BoundingBox{v[0], v[1], v[2], v[3]};
      if (!o.box->valid()) throw ParseError("box dimensions must be positive", line_no);
    }
    auto flag = [&](std::string_view s) {
      if (s == "1") return true;
      if (s == "0") return false;
      throw ParseError("flag must be 0 or 1", line_no);
    };
    o.detector_called = flag(f[6]);
    o.tracker_updated = flag(f[7]);
    trace.push_back(o);
  }
  return trace;
}

}  // namespace datkit
