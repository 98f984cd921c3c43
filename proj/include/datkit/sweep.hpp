#pragma once

// Grid sweeps over (R, C, K).

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "datkit/dat.hpp"
#include "datkit/eval.hpp"

namespace datkit {

struct SweepGrid {
  std::vector<std::size_t> reset_iterations;
  std::vector<std::size_t> consecutive_iou;
  std::vector<std::size_t> check_iterations;

  std::size_t cells() const noexcept {
    return reset_iterations.size() * consecutive_iou.size() * check_iterations.size();
  }

  /// Covers the combinations 100/3/60, 100/9/60 and 200/8/30.
  static SweepGrid defaults() { return {{50, 100, 200}, {1, 3, 8, 9}, {30, 60}}; }
};

/// One sequence/category pair evaluated in every cell. The detector
/// factory is called once per run so stateful detectors start fresh.
struct SweepCase {
  const FrameSequence* sequence = nullptr;
  Category category = Category::L;
  int fold = 0;
  std::function<std::unique_ptr<Detector>()> make_detector;
};

struct SweepRow {
  DatParams params;
  MetricSummary f1;
  MetricSummary f1_strict;
  RunCounts run;
  double modeled_fps = 0.0;
  double detector_fraction = 0.0;
};

struct SweepOptions {
  DatParams base;  // overlap threshold and reset mode; R/C/K and category are overwritten
  CostModel cost;
  MatchThresholds thresholds;
  unsigned jobs = 1;
};

inline SweepRow evaluate_cell(const DatParams& cell, std::span<const SweepCase> cases, const TrackerFactory& make_tracker,
                              const SweepOptions& opt) {
  SweepRow row;
  row.params = cell;
  std::vector<FoldEntry> f1s, strict;
  for (const auto& c : cases) {
    DatParams p = cell;
    p.category = c.category;
    auto detector = c.make_detector();
    const Trace trace = dat_run(*c.sequence, *detector, make_tracker, p, RunMode::Dat);
    const EvaluationReport rep = score_trace(trace, c.sequence->annotations(), c.category, opt.thresholds);
    f1s.push_back({c.category, c.sequence->sequence_id(), c.fold, rep.f1});
    strict.push_back({c.category, c.sequence->sequence_id(), c.fold, rep.f1_strict});
    row.run += rep.run;
  }
  row.f1 = aggregate(f1s);
  row.f1_strict = aggregate(strict);
  row.modeled_fps = modeled_fps(row.run, opt.cost);
  row.detector_fraction = safe_ratio(row.run.detector_calls, row.run.frames);
  return row;
}

/// One row per grid cell, sorted by F1 then modeled FPS (both descending);
/// remaining ties keep grid order.
inline std::vector<SweepRow> sweep_parameters(const SweepGrid& grid, std::span<const SweepCase> cases,
                                              const TrackerFactory& make_tracker, const SweepOptions& opt) {
  if (grid.cells() == 0) throw ValidationError("sweep grid is empty");
  if (cases.empty()) throw ValidationError("sweep needs at least one sequence");
  std::vector<DatParams> cells;
  for (auto r : grid.reset_iterations)
    for (auto c : grid.consecutive_iou)
      for (auto k : grid.check_iterations) {
        DatParams p = opt.base;
        p.reset_iterations = r;
        p.consecutive_iou = c;
        p.check_iterations = k;
        cells.push_back(p);
      }

  std::vector<SweepRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        rows[i] = evaluate_cell(cells[i], cases, make_tracker, opt);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(opt.jobs, static_cast<unsigned>(cells.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.f1.mean != b.f1.mean) return a.f1.mean > b.f1.mean;
    return a.modeled_fps > b.modeled_fps;
  });
  return rows;
}

inline constexpr std::string_view kSweepHeader = "R,C,K,f1_mean,f1_sd,f1_strict_mean,modeled_fps,detector_fraction";

inline std::string emit_sweep_csv(std::span<const SweepRow> rows) {
  std::string out(kSweepHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.params.reset_iterations) + "," + std::to_string(r.params.consecutive_iou) + "," +
           std::to_string(r.params.check_iterations);
    for (double v : {r.f1.mean, r.f1.sd, r.f1_strict.mean, r.modeled_fps, r.detector_fraction}) {
      out += ',';
      out += text::format_double(v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace datkit
