#pragma once

// Deterministic synthetic sequences: one textured target moving along a
// piecewise-linear path, with scripted occlusions (target covered, ground
// truth kept) and absences (no target, no ground truth).
//
// Randomness: texture from (texture_seed, Texture stream); background noise
// from (seed, Background stream); per-frame jitter from a generator keyed
// by (seed, Jitter stream, frame index), so any frame can be rendered on
// its own. Frames are rendered lazily by the returned sequence's loader.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "datkit/core.hpp"
#include "datkit/dataio.hpp"
#include "datkit/error.hpp"
#include "datkit/random.hpp"

namespace datkit {

struct Waypoint {
  std::size_t frame_index = 0;
  double x = 0.0;  // target center
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

/// Half-open frame interval [start, end).
struct FrameInterval {
  std::size_t start = 0;
  std::size_t end = 0;

  bool contains(std::size_t f) const noexcept { return f >= start && f < end; }
  std::size_t length() const noexcept { return end > start ? end - start : 0; }
};

struct Background {
  enum class Kind { Flat, Noise, Gradient };
  Kind kind = Kind::Noise;
  double sigma = 4.0;  // Noise only
};

struct SynthSpec {
  Canvas canvas{};
  std::size_t n_frames = 0;
  std::vector<Waypoint> waypoints;
  double jitter_sigma = 0.0;
  std::uint64_t texture_seed = 0;
  std::vector<FrameInterval> occlusions;
  std::vector<FrameInterval> absences;
  Background background{};
  Category category = Category::L;
  std::string participant_id;
  std::string sequence_id;
  // Occluder extends this many pixels past the target on every side.
  int occluder_margin = 12;
};

inline constexpr int kTextureCells = 16;
inline constexpr std::uint8_t kOccluderIntensity = 128;

inline void validate(const SynthSpec& spec) {
  if (spec.canvas.width < 1 || spec.canvas.height < 1) throw SpecError("canvas must be at least 1x1");
  if (spec.n_frames < 1) throw SpecError("n_frames must be >= 1");
  if (spec.waypoints.empty()) throw SpecError("at least one waypoint is required");
  if (spec.waypoints.front().frame_index != 0) throw SpecError("first waypoint must be at frame 0");
  if (spec.waypoints.back().frame_index != spec.n_frames - 1)
    throw SpecError("last waypoint must be at frame n_frames-1");
  for (std::size_t i = 1; i < spec.waypoints.size(); ++i)
    if (spec.waypoints[i].frame_index <= spec.waypoints[i - 1].frame_index)
      throw SpecError("waypoint frame indices must be strictly increasing");
  for (const auto& wp : spec.waypoints)
    if (!(wp.w > 0.0) || !(wp.h > 0.0)) throw SpecError("waypoint sizes must be positive");
  if (spec.jitter_sigma < 0.0) throw SpecError("jitter_sigma must be >= 0");
  if (spec.occluder_margin < 0) throw SpecError("occluder_margin must be >= 0");
  if (spec.background.kind == Background::Kind::Noise && spec.background.sigma < 0.0)
    throw SpecError("background noise sigma must be >= 0");
  if (spec.category == Category::N) throw SpecError("target category cannot be N");
  auto check_intervals = [&](const std::vector<FrameInterval>& v, const char* what) {
    for (const auto& iv : v)
      if (iv.start >= iv.end || iv.end > spec.n_frames)
        throw SpecError(std::string(what) + " interval [" + std::to_string(iv.start) + "," + std::to_string(iv.end) +
                        ") is empty or outside [0, n_frames)");
  };
  check_intervals(spec.occlusions, "occlusion");
  check_intervals(spec.absences, "absence");
  for (const auto& o : spec.occlusions)
    for (const auto& a : spec.absences)
      if (o.start < a.end && a.start < o.end) throw SpecError("occlusion and absence intervals overlap");
}

/// Target box on the piecewise-linear path at frame f, before jitter.
inline BoundingBox interpolate_path(const std::vector<Waypoint>& waypoints, std::size_t f) {
  if (waypoints.size() == 1 || f <= waypoints.front().frame_index) {
    const auto& w = waypoints.front();
    return BoundingBox::from_center(w.x, w.y, w.w, w.h);
  }
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    const auto& a = waypoints[i - 1];
    const auto& b = waypoints[i];
    if (f <= b.frame_index) {
      const double t = static_cast<double>(f - a.frame_index) / static_cast<double>(b.frame_index - a.frame_index);
      auto lerp = [t](double u, double v) { return u + t * (v - u); };
      return BoundingBox::from_center(lerp(a.x, b.x), lerp(a.y, b.y), lerp(a.w, b.w), lerp(a.h, b.h));
    }
  }
  const auto& w = waypoints.back();
  return BoundingBox::from_center(w.x, w.y, w.w, w.h);
}

inline bool in_any(const std::vector<FrameInterval>& v, std::size_t f) {
  return std::any_of(v.begin(), v.end(), [f](const auto& iv) { return iv.contains(f); });
}

/// Ground truth plus per-frame flags, computed without rendering pixels.
struct SyntheticTruth {
  std::vector<AnnotationRecord> annotations;
  std::vector<std::optional<BoundingBox>> boxes;  // target placement, absent frames empty
  std::vector<bool> occluded;
  std::vector<bool> absent;
};

inline SyntheticTruth synthesize_truth(const SynthSpec& spec, std::uint64_t seed) {
  validate(spec);
  SyntheticTruth truth;
  truth.boxes.resize(spec.n_frames);
  truth.occluded.resize(spec.n_frames);
  truth.absent.resize(spec.n_frames);
  const double W = spec.canvas.width;
  const double H = spec.canvas.height;
  for (std::size_t f = 0; f < spec.n_frames; ++f) {
    BoundingBox box = interpolate_path(spec.waypoints, f);
    if (box.x < 0.0 || box.y < 0.0 || box.right() > W || box.bottom() > H)
      throw SpecError("target box leaves the canvas at frame " + std::to_string(f));
    if (spec.jitter_sigma > 0.0) {
      Rng rng(hash_combine(hash_combine(seed, static_cast<std::uint64_t>(Stream::Jitter)), f));
      const double dx = rng.normal(0.0, spec.jitter_sigma);
      const double dy = rng.normal(0.0, spec.jitter_sigma);
      box.x = std::clamp(box.x + dx, 0.0, W - box.w);
      box.y = std::clamp(box.y + dy, 0.0, H - box.h);
    }
    truth.absent[f] = in_any(spec.absences, f);
    truth.occluded[f] = in_any(spec.occlusions, f);
    if (!truth.absent[f]) {
      truth.boxes[f] = box;
      truth.annotations.push_back({f, spec.category, box});
    }
  }
  return truth;
}

namespace detail {

inline std::vector<std::uint8_t> make_texture(std::uint64_t texture_seed) {
  Rng rng(texture_seed, Stream::Texture);
  std::vector<std::uint8_t> cells(kTextureCells * kTextureCells);
  for (auto& c : cells) c = static_cast<std::uint8_t>(16 + rng.below(225));
  return cells;
}

inline Frame make_background(const SynthSpec& spec, std::uint64_t seed) {
  Frame bg(spec.canvas.width, spec.canvas.height, 0, 96);
  switch (spec.background.kind) {
    case Background::Kind::Flat:
      break;
    case Background::Kind::Noise: {
      Rng rng(seed, Stream::Background);
      for (auto& p : bg.pixels)
        p = static_cast<std::uint8_t>(std::clamp(std::floor(110.0 + spec.background.sigma * rng.normal() + 0.5), 0.0, 255.0));
      break;
    }
    case Background::Kind::Gradient: {
      const double denom = std::max(1, spec.canvas.width - 1);
      for (int y = 0; y < bg.height; ++y)
        for (int x = 0; x < bg.width; ++x)
          bg.at(x, y) = static_cast<std::uint8_t>(std::floor(40.0 + 160.0 * x / denom + 0.5));
      break;
    }
  }
  return bg;
}

inline double round_half_up(double v) { return std::floor(v + 0.5); }

// Bilinear resample of the texture grid onto a rw x rh patch at (x0, y0).
inline void draw_texture(Frame& frame, const std::vector<std::uint8_t>& texture, int x0, int y0, int rw, int rh) {
  constexpr int T = kTextureCells;
  for (int j = 0; j < rh; ++j) {
    const int y = y0 + j;
    if (y < 0 || y >= frame.height) continue;
    const double v = std::clamp((j + 0.5) * T / rh - 0.5, 0.0, T - 1.0);
    const int v0 = std::min(static_cast<int>(v), T - 2);
    const double fv = v - v0;
    for (int i = 0; i < rw; ++i) {
      const int x = x0 + i;
      if (x < 0 || x >= frame.width) continue;
      const double u = std::clamp((i + 0.5) * T / rw - 0.5, 0.0, T - 1.0);
      const int u0 = std::min(static_cast<int>(u), T - 2);
      const double fu = u - u0;
      auto c = [&](int cu, int cv) { return static_cast<double>(texture[cv * T + cu]); };
      const double val = (1 - fu) * (1 - fv) * c(u0, v0) + fu * (1 - fv) * c(u0 + 1, v0) +
                         (1 - fu) * fv * c(u0, v0 + 1) + fu * fv * c(u0 + 1, v0 + 1);
      frame.at(x, y) = static_cast<std::uint8_t>(std::clamp(round_half_up(val), 0.0, 255.0));
    }
  }
}

inline void fill_rect(Frame& frame, int x0, int y0, int rw, int rh, std::uint8_t value) {
  const int xa = std::max(0, x0), ya = std::max(0, y0);
  const int xb = std::min(frame.width, x0 + rw), yb = std::min(frame.height, y0 + rh);
  for (int y = ya; y < yb; ++y)
    for (int x = xa; x < xb; ++x) frame.at(x, y) = value;
}

}  // namespace detail

/// Integer raster rectangle covered by a continuous box.
struct PixelRect {
  int x = 0, y = 0, w = 0, h = 0;
};

inline PixelRect rasterize(const BoundingBox& box) {
  const int x0 = static_cast<int>(detail::round_half_up(box.x));
  const int y0 = static_cast<int>(detail::round_half_up(box.y));
  const int rw = std::max(1, static_cast<int>(detail::round_half_up(box.w)));
  const int rh = std::max(1, static_cast<int>(detail::round_half_up(box.h)));
  return {x0, y0, rw, rh};
}

struct GeneratedSequence {
  FrameSequence sequence;
  SyntheticTruth truth;
};

inline GeneratedSequence generate_sequence(const SynthSpec& spec, std::uint64_t seed) {
  SyntheticTruth truth = synthesize_truth(spec, seed);
  auto background = std::make_shared<const Frame>(detail::make_background(spec, seed));
  auto texture = std::make_shared<const std::vector<std::uint8_t>>(detail::make_texture(spec.texture_seed));
  auto boxes = std::make_shared<const std::vector<std::optional<BoundingBox>>>(truth.boxes);
  auto occluded = std::make_shared<const std::vector<bool>>(truth.occluded);
  const int margin = spec.occluder_margin;

  auto loader = [background, texture, boxes, occluded, margin](std::size_t f) {
    Frame frame = *background;
    frame.index = f;
    if (const auto& box = (*boxes)[f]) {
      const PixelRect r = rasterize(*box);
      detail::draw_texture(frame, *texture, r.x, r.y, r.w, r.h);
      if ((*occluded)[f])
        detail::fill_rect(frame, r.x - margin, r.y - margin, r.w + 2 * margin, r.h + 2 * margin, kOccluderIntensity);
    }
    return frame;
  };
  FrameSequence seq(spec.n_frames, std::move(loader), truth.annotations, spec.canvas, spec.participant_id,
                    spec.sequence_id);
  return {std::move(seq), std::move(truth)};
}

/// Mean of |dI/dx| + |dI/dy| (forward differences) over a pixel rectangle.
inline double mean_abs_gradient(const Frame& frame, const PixelRect& r) {
  const int xa = std::max(0, r.x), ya = std::max(0, r.y);
  const int xb = std::min(frame.width - 1, r.x + r.w - 1), yb = std::min(frame.height - 1, r.y + r.h - 1);
  double sum = 0.0;
  std::size_t n = 0;
  for (int y = ya; y < yb; ++y)
    for (int x = xa; x < xb; ++x) {
      sum += std::abs(int(frame.at(x + 1, y)) - int(frame.at(x, y))) +
             std::abs(int(frame.at(x, y + 1)) - int(frame.at(x, y)));
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

// ---------------------------------------------------------------------------
// JSON form; keys mirror the SynthSpec field names.

inline nlohmann::ordered_json to_json(const SynthSpec& spec) {
  nlohmann::ordered_json j;
  j["canvas"] = {spec.canvas.width, spec.canvas.height};
  j["n_frames"] = spec.n_frames;
  auto& wps = j["waypoints"] = nlohmann::ordered_json::array();
  for (const auto& w : spec.waypoints)
    wps.push_back({{"frame_index", w.frame_index}, {"x", w.x}, {"y", w.y}, {"w", w.w}, {"h", w.h}});
  j["jitter_sigma"] = spec.jitter_sigma;
  j["texture_seed"] = spec.texture_seed;
  auto intervals = [](const std::vector<FrameInterval>& v) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& iv : v) arr.push_back({iv.start, iv.end});
    return arr;
  };
  j["occlusions"] = intervals(spec.occlusions);
  j["absences"] = intervals(spec.absences);
  switch (spec.background.kind) {
    case Background::Kind::Flat: j["background"] = "flat"; break;
    case Background::Kind::Gradient: j["background"] = "gradient"; break;
    case Background::Kind::Noise: j["background"] = {{"noise", spec.background.sigma}}; break;
  }
  j["category"] = to_string(spec.category);
  j["participant_id"] = spec.participant_id;
  j["sequence_id"] = spec.sequence_id;
  j["occluder_margin"] = spec.occluder_margin;
  return j;
}

inline SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  try {
    SynthSpec spec;
    if (j.contains("canvas")) {
      const auto& c = j.at("canvas");
      if (c.is_array()) spec.canvas = {c.at(0).get<int>(), c.at(1).get<int>()};
      else spec.canvas = {c.at("width").get<int>(), c.at("height").get<int>()};
    }
    spec.n_frames = j.at("n_frames").get<std::size_t>();
    for (const auto& w : j.at("waypoints")) {
      if (w.is_array())
        spec.waypoints.push_back({w.at(0).get<std::size_t>(), w.at(1).get<double>(), w.at(2).get<double>(),
                                  w.at(3).get<double>(), w.at(4).get<double>()});
      else
        spec.waypoints.push_back({w.at("frame_index").get<std::size_t>(), w.at("x").get<double>(),
                                  w.at("y").get<double>(), w.at("w").get<double>(), w.at("h").get<double>()});
    }
    spec.jitter_sigma = j.value("jitter_sigma", 0.0);
    spec.texture_seed = j.value("texture_seed", std::uint64_t{0});
    auto intervals = [&](const char* key) {
      std::vector<FrameInterval> out;
      if (j.contains(key))
        for (const auto& iv : j.at(key)) out.push_back({iv.at(0).get<std::size_t>(), iv.at(1).get<std::size_t>()});
      return out;
    };
    spec.occlusions = intervals("occlusions");
    spec.absences = intervals("absences");
    if (j.contains("background")) {
      const auto& b = j.at("background");
      if (b.is_string()) {
        const auto s = b.get<std::string>();
        if (s == "flat") spec.background = {Background::Kind::Flat, 0.0};
        else if (s == "gradient") spec.background = {Background::Kind::Gradient, 0.0};
        else if (s == "noise") spec.background = {Background::Kind::Noise, 4.0};
        else throw SpecError("unknown background '" + s + "'");
      } else if (b.contains("noise")) {
        spec.background = {Background::Kind::Noise, b.at("noise").get<double>()};
      } else {
        throw SpecError("background must be \"flat\", \"gradient\" or {\"noise\": sigma}");
      }
    }
    if (j.contains("category")) {
      const auto c = category_from_string(j.at("category").get<std::string>());
      if (!c) throw SpecError("unknown category in spec");
      spec.category = *c;
    }
    spec.participant_id = j.value("participant_id", "");
    spec.sequence_id = j.value("sequence_id", "");
    spec.occluder_margin = j.value("occluder_margin", 12);
    validate(spec);
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("invalid synth spec: ") + e.what());
  }
}

/// One sequence of the occlusion-recovery benchmark: a target wandering
/// through random waypoints every ~90 frames with two scripted occlusions,
/// during each of which it travels 160-260 px.
inline SynthSpec occlusion_benchmark_spec(std::size_t index, std::uint64_t suite_seed, std::size_t n_frames = 900) {
  if (n_frames < 240) throw ContractViolation("occlusion benchmark needs at least 240 frames");
  Rng rng(hash_combine(suite_seed, index), Stream::Script);
  SynthSpec spec;
  spec.canvas = {720, 405};
  spec.n_frames = n_frames;
  spec.jitter_sigma = 0.5;
  spec.texture_seed = hash_combine(suite_seed, 1000 + index);
  spec.background = {Background::Kind::Noise, 4.0};
  spec.category = index % 2 == 0 ? Category::L : Category::R;
  spec.participant_id = "P" + std::to_string(index / 2);
  spec.sequence_id = "bench_" + std::to_string(index);

  const double size = 56.0 + 16.0 * rng.uniform();
  const double margin = size / 2 + 4;
  auto inside = [&](double x, double y) { return x > margin && x < 720 - margin && y > margin && y < 405 - margin; };
  auto random_center = [&](double cx, double cy, double max_step) {
    for (int tries = 0; tries < 100; ++tries) {
      const double nx = cx + rng.uniform(-max_step, max_step);
      const double ny = cy + rng.uniform(-max_step, max_step);
      if (inside(nx, ny)) return std::pair{nx, ny};
    }
    return std::pair{360.0, 202.0};
  };
  // The hand moves quickly while hidden, so it reappears well outside a
  // stalled tracker's search region.
  auto jump_from = [&](double cx, double cy) {
    for (int tries = 0; tries < 200; ++tries) {
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double radius = rng.uniform(160.0, 260.0);
      const double nx = cx + radius * std::cos(angle), ny = cy + radius * std::sin(angle);
      if (inside(nx, ny)) return std::pair{nx, ny};
    }
    return std::pair{cx < 360.0 ? 720.0 - margin - 1 : margin + 1, cy < 202.0 ? 405.0 - margin - 1 : margin + 1};
  };

  const std::size_t len1 = 12 + rng.below(6);
  const std::size_t len2 = 12 + rng.below(6);
  const std::size_t start1 = n_frames / 4 + rng.below(n_frames / 8);
  const std::size_t start2 = (5 * n_frames) / 8 + rng.below(n_frames / 8);
  spec.occlusions = {{start1, start1 + len1}, {start2, start2 + len2}};

  std::vector<std::size_t> keys{0, n_frames - 1};
  for (const auto& occ : spec.occlusions) {
    keys.push_back(occ.start);
    keys.push_back(occ.end - 1);
  }
  auto near_occlusion = [&](std::size_t f) {
    return std::ranges::any_of(spec.occlusions, [f](const FrameInterval& o) { return f + 20 > o.start && f < o.end + 20; });
  };
  for (std::size_t f = 90; f + 20 < n_frames; f += 90)
    if (!near_occlusion(f)) keys.push_back(f);
  std::ranges::sort(keys);

  double cx = rng.uniform(margin + 40, 720 - margin - 40);
  double cy = rng.uniform(margin + 40, 405 - margin - 40);
  for (std::size_t f : keys) {
    if (f != 0) {
      const bool reappears = std::ranges::any_of(spec.occlusions, [f](const FrameInterval& o) { return o.end - 1 == f; });
      std::tie(cx, cy) = reappears ? jump_from(cx, cy) : random_center(cx, cy, 250.0);
    }
    spec.waypoints.push_back({f, cx, cy, size, size});
  }
  return spec;
}

/// `count` benchmark sequences; sequence i is generated with its own seed
/// derived from the suite seed.
inline std::vector<GeneratedSequence> occlusion_benchmark_suite(std::size_t count, std::uint64_t suite_seed,
                                                                std::size_t n_frames = 900) {
  std::vector<GeneratedSequence> suite;
  suite.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    suite.push_back(generate_sequence(occlusion_benchmark_spec(i, suite_seed, n_frames), hash_combine(suite_seed, 2000 + i)));
  return suite;
}

}  // namespace datkit
