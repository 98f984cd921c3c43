#pragma once

// Effective configuration of one `run`: defaults, then a JSON config file,
// then command-line flags. The same flat JSON schema is echoed into reports.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "datkit/dat.hpp"
#include "datkit/detector.hpp"
#include "datkit/error.hpp"
#include "datkit/eval.hpp"

namespace datkit {

struct RunConfig {
  RunMode mode = RunMode::Dat;
  std::string tracker = "mf";
  std::string detector = "replay";
  DatParams params;
  ReplayNoise noise;  // noise.seed mirrors `seed`
  std::string external_cmd;
  double external_timeout = 10.0;  // seconds
  CostModel cost;
  MatchThresholds thresholds;
  std::string seq;
  std::string out;
  std::string trace;
  std::uint64_t seed = 1;
};

namespace detail {

template <class T>
T json_get(const nlohmann::json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace detail

/// Overlays keys present in `j`. Unknown keys are rejected so typos do not
/// silently fall back to defaults.
inline void apply_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const char* k = key.c_str();
    if (key == "mode") {
      const auto m = run_mode_from_string(detail::json_get<std::string>(j, k));
      if (!m) throw ValidationError("unknown mode '" + value.get<std::string>() + "'");
      c.mode = *m;
    } else if (key == "tracker") {
      c.tracker = detail::json_get<std::string>(j, k);
    } else if (key == "detector") {
      c.detector = detail::json_get<std::string>(j, k);
    } else if (key == "params") {
      c.params = c.params.with_rck(detail::json_get<std::string>(j, k));
    } else if (key == "category") {
      const auto cat = category_from_string(detail::json_get<std::string>(j, k));
      if (!cat) throw ValidationError("unknown category '" + value.get<std::string>() + "'");
      c.params.category = *cat;
    } else if (key == "overlap_threshold") {
      c.params.overlap_threshold = detail::json_get<double>(j, k);
    } else if (key == "reset_requires_streak") {
      c.params.reset_requires_streak = detail::json_get<bool>(j, k);
    } else if (key == "seed") {
      c.seed = detail::json_get<std::uint64_t>(j, k);
    } else if (key == "miss_prob") {
      c.noise.miss_prob = detail::json_get<double>(j, k);
    } else if (key == "fp_prob") {
      c.noise.fp_prob = detail::json_get<double>(j, k);
    } else if (key == "jitter_sigma") {
      c.noise.jitter_sigma = detail::json_get<double>(j, k);
    } else if (key == "confidence_floor") {
      c.noise.confidence_floor = detail::json_get<double>(j, k);
    } else if (key == "external_cmd") {
      c.external_cmd = detail::json_get<std::string>(j, k);
    } else if (key == "external_timeout") {
      c.external_timeout = detail::json_get<double>(j, k);
    } else if (key == "c_detect") {
      c.cost.c_detect = detail::json_get<double>(j, k);
    } else if (key == "c_track") {
      c.cost.c_track = detail::json_get<double>(j, k);
    } else if (key == "c_idle") {
      c.cost.c_idle = detail::json_get<double>(j, k);
    } else if (key == "iou_accurate") {
      c.thresholds.accurate = detail::json_get<double>(j, k);
    } else if (key == "iou_localization") {
      c.thresholds.localization = detail::json_get<double>(j, k);
    } else if (key == "seq") {
      c.seq = detail::json_get<std::string>(j, k);
    } else if (key == "out") {
      c.out = detail::json_get<std::string>(j, k);
    } else if (key == "trace") {
      c.trace = detail::json_get<std::string>(j, k);
    } else {
      throw ValidationError("unknown config key '" + key + "'");
    }
  }
  c.noise.seed = c.seed;
}

inline nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(c.mode);
  j["tracker"] = c.tracker;
  j["detector"] = c.detector;
  j["params"] = c.params.name();
  j["category"] = to_string(c.params.category);
  j["overlap_threshold"] = c.params.overlap_threshold;
  j["reset_requires_streak"] = c.params.reset_requires_streak;
  j["seed"] = c.seed;
  if (c.detector == "replay") {
    j["miss_prob"] = c.noise.miss_prob;
    j["fp_prob"] = c.noise.fp_prob;
    j["jitter_sigma"] = c.noise.jitter_sigma;
    j["confidence_floor"] = c.noise.confidence_floor;
  } else {
    j["external_cmd"] = c.external_cmd;
    j["external_timeout"] = c.external_timeout;
  }
  j["c_detect"] = c.cost.c_detect;
  j["c_track"] = c.cost.c_track;
  j["c_idle"] = c.cost.c_idle;
  j["iou_accurate"] = c.thresholds.accurate;
  j["iou_localization"] = c.thresholds.localization;
  j["seq"] = c.seq;
  j["out"] = c.out;
  j["trace"] = c.trace;
  return j;
}

inline void validate(const RunConfig& c) {
  if (c.tracker != "mf" && c.tracker != "kcf") throw ValidationError("tracker must be 'mf' or 'kcf', got '" + c.tracker + "'");
  if (c.detector != "replay" && c.detector != "external")
    throw ValidationError("detector must be 'replay' or 'external', got '" + c.detector + "'");
  if (c.detector == "external" && c.external_cmd.empty())
    throw ValidationError("external detector needs a command (--external-cmd)");
  if (!(c.external_timeout > 0.0)) throw ValidationError("external timeout must be positive");
  if (!c.params.valid()) throw ValidationError("invalid DAT parameters " + c.params.name());
  if (!c.noise.valid()) throw ValidationError("invalid replay noise parameters");
  if (!c.cost.valid()) throw ValidationError("cost model coefficients must be >= 0");
  if (!c.thresholds.valid()) throw ValidationError("IOU thresholds must satisfy 0 < localization < accurate <= 1");
  if (c.seq.empty()) throw ValidationError("no sequence directory given (--seq)");
  if (!std::filesystem::is_directory(c.seq)) throw ValidationError("sequence directory '" + c.seq + "' does not exist");
  if (c.out.empty()) throw ValidationError("no report path given (--out)");
}

/// Trace path next to the report unless one was configured:
/// R.json -> R.trace.csv.
inline std::filesystem::path trace_path_for(const RunConfig& c) {
  if (!c.trace.empty()) return c.trace;
  std::filesystem::path p(c.out);
  p.replace_extension(".trace.csv");
  return p;
}

}  // namespace datkit
