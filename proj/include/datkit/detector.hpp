#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "datkit/core.hpp"
#include "datkit/dataio.hpp"
#include "datkit/random.hpp"

namespace datkit {

struct DetectorResult {
  std::vector<Detection> detections;
  double cost_units = 1.0;
};

/// Per-frame detector. Implementations must not depend on which frames
/// were queried before.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual DetectorResult detect(const Frame& frame, Category category) = 0;
};

/// Keeps the most confident detection per camera-wearer category (L, R);
/// O detections pass through.
inline std::vector<Detection> one_per_wearer_category(std::vector<Detection> dets) {
  std::vector<Detection> out;
  for (Category c : {Category::L, Category::R})
    if (auto best = select_primary(dets, c)) out.push_back(*best);
  for (const auto& d : dets)
    if (d.category == Category::O) out.push_back(d);
  return out;
}

struct ReplayNoise {
  double miss_prob = 0.0;
  double fp_prob = 0.0;
  double jitter_sigma = 0.0;
  double confidence_floor = 0.0;
  std::uint64_t seed = 0;

  bool valid() const noexcept {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    return prob(miss_prob) && prob(fp_prob) && prob(confidence_floor) && jitter_sigma >= 0.0;
  }
};

/// Replays ground truth through a noise model:
///  - a present box is dropped with probability miss_prob;
///  - otherwise its center moves by N(0, jitter_sigma) per axis and each
///    side is scaled by exp(N(0, jitter_sigma / side)), so the side length
///    changes by about jitter_sigma pixels; the result is clipped to the
///    canvas and scored with confidence max(floor, IOU(jittered, truth));
///  - with probability fp_prob a spurious box is added, uniform over the
///    canvas, sized like a randomly chosen ground-truth box of the
///    category, with confidence uniform in [floor, 1).
/// Every frame draws from a generator keyed by (seed, frame, category), so
/// results do not depend on call order.
class ReplayDetector final : public Detector {
 public:
  ReplayDetector(std::vector<AnnotationRecord> annotations, Canvas canvas, ReplayNoise noise)
      : annotations_(std::move(annotations)), canvas_(canvas), noise_(noise) {
    sort_annotations(annotations_);
    if (!noise_.valid()) throw ValidationError("invalid replay noise parameters");
  }

  DetectorResult detect(const Frame& frame, Category category) override {
    return detect_index(frame.index, category);
  }

  DetectorResult detect_index(std::size_t frame_index, Category category) const {
    std::uint64_t key = hash_combine(noise_.seed, static_cast<std::uint64_t>(Stream::Replay));
    key = hash_combine(key, frame_index);
    key = hash_combine(key, static_cast<std::uint64_t>(category));
    Rng rng(key);

    // Draw order is fixed regardless of which branches fire.
    const double u_miss = rng.uniform();
    const double n_dx = rng.normal(), n_dy = rng.normal(), n_w = rng.normal(), n_h = rng.normal();
    const double u_fp = rng.uniform();
    const double u_fx = rng.uniform(), u_fy = rng.uniform(), u_fconf = rng.uniform();
    const std::uint64_t size_pick = rng();

    DetectorResult result;
    const BoundingBox* gt = find(frame_index, category);
    if (gt != nullptr && u_miss >= noise_.miss_prob) {
      BoundingBox box = *gt;
      const double s = noise_.jitter_sigma;
      if (s > 0.0) {
        const double w = gt->w * std::exp(n_w * s / gt->w);
        const double h = gt->h * std::exp(n_h * s / gt->h);
        box = BoundingBox::from_center(gt->center_x() + n_dx * s, gt->center_y() + n_dy * s, w, h);
      }
      if (auto clipped = clip_to_canvas(box, canvas_.width, canvas_.height)) {
        const double conf = std::max(noise_.confidence_floor, iou(*clipped, *gt));
        result.detections.push_back({*clipped, category, conf});
      }
    }
    if (u_fp < noise_.fp_prob) {
      double w = canvas_.width / 8.0, h = canvas_.height / 8.0;
      std::vector<const AnnotationRecord*> pool;
      for (const auto& r : annotations_)
        if (r.category == category) pool.push_back(&r);
      if (!pool.empty()) {
        const auto* pick = pool[size_pick % pool.size()];
        w = pick->box.w;
        h = pick->box.h;
      }
      w = std::min(w, static_cast<double>(canvas_.width));
      h = std::min(h, static_cast<double>(canvas_.height));
      const BoundingBox spurious{u_fx * (canvas_.width - w), u_fy * (canvas_.height - h), w, h};
      const double conf = noise_.confidence_floor + (1.0 - noise_.confidence_floor) * u_fconf;
      result.detections.push_back({spurious, category, conf});
    }
    result.detections = one_per_wearer_category(std::move(result.detections));
    return result;
  }

  const ReplayNoise& noise() const noexcept { return noise_; }

 private:
  const BoundingBox* find(std::size_t frame_index, Category category) const {
    auto it = std::lower_bound(annotations_.begin(), annotations_.end(), frame_index,
                               [](const AnnotationRecord& r, std::size_t f) { return r.frame_index < f; });
    for (; it != annotations_.end() && it->frame_index == frame_index; ++it)
      if (it->category == category) return &it->box;
    return nullptr;
  }

  std::vector<AnnotationRecord> annotations_;
  Canvas canvas_;
  ReplayNoise noise_;
};

}  // namespace datkit
