#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "datkit/error.hpp"

namespace datkit {

/// Axis-aligned box in continuous pixel units: top-left corner plus size.
/// Area semantics are inclusive-exclusive, so area() is exactly w * h.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  constexpr double area() const noexcept { return w * h; }
  constexpr double right() const noexcept { return x + w; }
  constexpr double bottom() const noexcept { return y + h; }
  constexpr double center_x() const noexcept { return x + 0.5 * w; }
  constexpr double center_y() const noexcept { return y + 0.5 * h; }

  bool valid() const noexcept {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
           std::isfinite(h) && w > 0.0 && h > 0.0;
  }

  static constexpr BoundingBox from_center(double cx, double cy, double w,
                                           double h) noexcept {
    return {cx - 0.5 * w, cy - 0.5 * h, w, h};
  }

  friend constexpr bool operator==(const BoundingBox&,
                                   const BoundingBox&) = default;
};

/// Intersection of two boxes; absent when they do not overlap with
/// positive area.
inline std::optional<BoundingBox> intersect(const BoundingBox& a,
                                            const BoundingBox& b) noexcept {
  const double x0 = std::max(a.x, b.x);
  const double y0 = std::max(a.y, b.y);
  const double x1 = std::min(a.right(), b.right());
  const double y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  return BoundingBox{x0, y0, x1 - x0, y1 - y0};
}

/// Intersection over union, in [0, 1]; 0 for disjoint boxes.
inline double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const auto inter = intersect(a, b);
  if (!inter) return 0.0;
  const double i = inter->area();
  const double u = a.area() + b.area() - i;
  if (u <= 0.0) return 0.0;
  return std::clamp(i / u, 0.0, 1.0);
}

/// Clip a box to a width x height canvas; absent if nothing remains.
inline std::optional<BoundingBox> clip_to_canvas(const BoundingBox& b,
                                                 double width,
                                                 double height) noexcept {
  // Boxes already inside come back bit-identical (no right - left rounding).
  if (b.w > 0.0 && b.h > 0.0 && b.x >= 0.0 && b.y >= 0.0 && b.right() <= width && b.bottom() <= height) return b;
  return intersect(b, BoundingBox{0.0, 0.0, width, height});
}

enum class Category { L, R, O, N };

inline constexpr char to_char(Category c) noexcept {
  switch (c) {
    case Category::L: return 'L';
    case Category::R: return 'R';
    case Category::O: return 'O';
    case Category::N: return 'N';
  }
  return '?';
}

inline std::string to_string(Category c) { return std::string(1, to_char(c)); }

inline std::optional<Category> category_from_string(std::string_view s) noexcept {
  if (s == "L") return Category::L;
  if (s == "R") return Category::R;
  if (s == "O") return Category::O;
  if (s == "N") return Category::N;
  return std::nullopt;
}

struct Detection {
  BoundingBox box;
  Category category = Category::L;
  double confidence = 1.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// Tracker boxes carry no score of their own; they enter evaluation with
/// full confidence.
inline Detection as_detection(const BoundingBox& box, Category category) {
  return Detection{box, category, 1.0};
}

enum class MatchOutcome {
  AccuratePrediction,
  LocalizationError,
  BackgroundError,
  Miss,
  CorrectRejection,
  FalseAlarm,
};

inline constexpr std::string_view to_string(MatchOutcome m) noexcept {
  switch (m) {
    case MatchOutcome::AccuratePrediction: return "accurate";
    case MatchOutcome::LocalizationError: return "localization_error";
    case MatchOutcome::BackgroundError: return "background_error";
    case MatchOutcome::Miss: return "miss";
    case MatchOutcome::CorrectRejection: return "correct_rejection";
    case MatchOutcome::FalseAlarm: return "false_alarm";
  }
  return "?";
}

/// IOU bands: at or above `accurate` is an accurate prediction, between
/// `localization` and `accurate` a correct but poorly placed one, below
/// `localization` a background error.
struct MatchThresholds {
  double accurate = 0.5;
  double localization = 0.15;

  bool valid() const noexcept {
    return localization > 0.0 && localization < accurate && accurate <= 1.0;
  }
};

inline MatchOutcome classify_iou(double overlap,
                                 const MatchThresholds& th = {}) noexcept {
  if (overlap >= th.accurate) return MatchOutcome::AccuratePrediction;
  if (overlap >= th.localization) return MatchOutcome::LocalizationError;
  return MatchOutcome::BackgroundError;
}

inline MatchOutcome classify_match(const std::optional<Detection>& pred,
                                   const std::optional<BoundingBox>& gt,
                                   const MatchThresholds& th = {}) noexcept {
  if (!pred) return gt ? MatchOutcome::Miss : MatchOutcome::CorrectRejection;
  if (!gt) return MatchOutcome::FalseAlarm;
  return classify_iou(iou(pred->box, *gt), th);
}

/// Highest-confidence detection of `category`. Ties go to the larger box,
/// then to the earlier input.
inline std::optional<Detection> select_primary(std::span<const Detection> detections,
                                               Category category) {
  const Detection* best = nullptr;
  for (const auto& d : detections) {
    if (d.category != category) continue;
    if (best == nullptr || d.confidence > best->confidence ||
        (d.confidence == best->confidence && d.box.area() > best->box.area())) {
      best = &d;
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

}  // namespace datkit
