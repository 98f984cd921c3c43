#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string_view>

#include "datkit/core.hpp"
#include "datkit/dataio.hpp"

namespace datkit {

/// One tracker step. `failed` is set exactly when `box` is absent.
struct TrackerUpdate {
  std::optional<BoundingBox> box;
  double quality = 0.0;
  bool failed = true;

  static TrackerUpdate success(const BoundingBox& b, double quality) { return {b, quality, false}; }
  static TrackerUpdate failure(double quality = 0.0) { return {std::nullopt, quality, true}; }
};

/// Online single-object tracker. `init` must be called once before any
/// `update`; calling `update` first throws ContractViolation. After a
/// failed update the tracker keeps its last good position and may be
/// updated again.
class Tracker {
 public:
  virtual ~Tracker() = default;

  virtual void init(const Frame& frame, const BoundingBox& box) = 0;
  virtual TrackerUpdate update(const Frame& frame) = 0;
  virtual bool initialized() const noexcept = 0;
  virtual std::string_view name() const noexcept = 0;
};

using TrackerFactory = std::function<std::unique_ptr<Tracker>()>;

}  // namespace datkit
