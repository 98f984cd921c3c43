#pragma once

// Median Flow: a grid of points inside the box is tracked forward to the
// new frame and back again; points whose round trip lands far from where
// they started are discarded, and the box moves by the median displacement
// of the rest and scales by the median change in pairwise distances.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <vector>

#include "datkit/error.hpp"
#include "datkit/optical_flow.hpp"
#include "datkit/tracker.hpp"

namespace datkit {

struct MedianFlowParams {
  int grid = 10;
  int pyramid_levels = 3;
  int lk_window = 7;
  int lk_iterations = 20;
  double fb_fail_threshold = 10.0;

  bool valid() const noexcept {
    return grid >= 2 && pyramid_levels > 0 && lk_window > 0 && lk_iterations > 0 && fb_fail_threshold > 0;
  }

  LkParams lk() const noexcept { return {pyramid_levels, lk_window, lk_iterations, 0.03, 1e-4}; }
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace detail

/// Diagnostics of the last update, exposed for tests and tuning.
struct MedianFlowStats {
  std::size_t seeded = 0;
  std::size_t valid = 0;
  std::size_t kept = 0;
  double median_fb_error = 0.0;
  Point2 displacement;
  double scale = 1.0;
};

class MedianFlowTracker final : public Tracker {
 public:
  explicit MedianFlowTracker(MedianFlowParams params = {}) : params_(params) {
    if (!params_.valid()) throw ContractViolation("invalid Median Flow parameters");
  }

  void init(const Frame& frame, const BoundingBox& box) override {
    if (!box.valid() || !clip_to_canvas(box, frame.width, frame.height))
      throw TrackerInitError("Median Flow init box has no area inside the frame");
    prev_.emplace(frame, params_.pyramid_levels);
    box_ = box;
    width_ = frame.width;
    height_ = frame.height;
  }

  TrackerUpdate update(const Frame& frame) override {
    if (!prev_) throw ContractViolation("Median Flow update before init");
    ImagePyramid cur(frame, params_.pyramid_levels);
    const TrackerUpdate result = step(cur);
    prev_ = std::move(cur);
    return result;
  }

  bool initialized() const noexcept override { return prev_.has_value(); }
  std::string_view name() const noexcept override { return "mf"; }

  const BoundingBox& box() const noexcept { return box_; }
  const MedianFlowStats& last_stats() const noexcept { return stats_; }

 private:
  std::vector<Point2> seed_points() const {
    // Keep every LK window inside the image.
    const double m = params_.lk_window + 1.0;
    const BoundingBox inner{m, m, width_ - 1.0 - 2 * m, height_ - 1.0 - 2 * m};
    std::vector<Point2> pts;
    if (!inner.valid()) return pts;
    const auto region = intersect(box_, inner);
    if (!region) return pts;
    const int g = params_.grid;
    pts.reserve(static_cast<std::size_t>(g * g));
    for (int j = 0; j < g; ++j)
      for (int i = 0; i < g; ++i)
        pts.push_back({region->x + (i + 0.5) * region->w / g, region->y + (j + 0.5) * region->h / g});
    return pts;
  }

  TrackerUpdate step(const ImagePyramid& cur) {
    stats_ = {};
    const auto pts = seed_points();
    stats_.seeded = pts.size();
    if (pts.empty()) return TrackerUpdate::failure();

    const LkParams lk = params_.lk();
    const auto fwd = lk_flow(*prev_, cur, pts, lk);
    std::vector<Point2> fwd_pts(fwd.size());
    for (std::size_t i = 0; i < fwd.size(); ++i) fwd_pts[i] = fwd[i].point;
    const auto bwd = lk_flow(cur, *prev_, fwd_pts, lk);

    struct Candidate {
      std::size_t index;
      double fb;
    };
    std::vector<Candidate> valid;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (fwd[i].status != FlowStatus::Converged || bwd[i].status != FlowStatus::Converged) continue;
      valid.push_back({i, distance(pts[i], bwd[i].point)});
    }
    stats_.valid = valid.size();

    const std::size_t keep = (valid.size() + 1) / 2;
    std::stable_sort(valid.begin(), valid.end(), [](const auto& a, const auto& b) { return a.fb < b.fb; });
    valid.resize(keep);
    stats_.kept = keep;

    const std::size_t min_points = static_cast<std::size_t>(params_.grid * params_.grid) / 4;
    if (keep == 0 || keep < min_points) return TrackerUpdate::failure();

    std::vector<double> fb, dx, dy;
    for (const auto& c : valid) {
      fb.push_back(c.fb);
      dx.push_back(fwd_pts[c.index].x - pts[c.index].x);
      dy.push_back(fwd_pts[c.index].y - pts[c.index].y);
    }
    stats_.median_fb_error = detail::median_of(fb);
    const double quality = 1.0 / (1.0 + stats_.median_fb_error);
    if (stats_.median_fb_error > params_.fb_fail_threshold) return TrackerUpdate::failure(quality);

    std::vector<double> ratios;
    ratios.reserve(keep * (keep - 1) / 2);
    for (std::size_t a = 0; a < keep; ++a)
      for (std::size_t b = a + 1; b < keep; ++b) {
        const double before = distance(pts[valid[a].index], pts[valid[b].index]);
        if (before <= 1e-9) continue;
        ratios.push_back(distance(fwd_pts[valid[a].index], fwd_pts[valid[b].index]) / before);
      }
    const double scale = ratios.empty() ? 1.0 : detail::median_of(std::move(ratios));
    const Point2 shift{detail::median_of(std::move(dx)), detail::median_of(std::move(dy))};
    stats_.displacement = shift;
    stats_.scale = scale;

    const BoundingBox moved = BoundingBox::from_center(box_.center_x() + shift.x, box_.center_y() + shift.y,
                                                       box_.w * scale, box_.h * scale);
    if (!moved.valid() || !clip_to_canvas(moved, width_, height_)) return TrackerUpdate::failure(quality);
    box_ = moved;
    return TrackerUpdate::success(box_, quality);
  }

  MedianFlowParams params_;
  std::optional<ImagePyramid> prev_;
  BoundingBox box_;
  int width_ = 0;
  int height_ = 0;
  MedianFlowStats stats_;
};

inline TrackerFactory median_flow_factory(MedianFlowParams params = {}) {
  return [params] { return std::make_unique<MedianFlowTracker>(params); };
}

}  // namespace datkit
