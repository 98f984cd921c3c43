// dat-kit: run DAT experiments, generate synthetic sequences, sweep
// parameters, score prediction files and split participants.
//
// Exit codes: 0 ok, 1 usage, 2 data/validation, 3 external detector.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "datkit/datkit.hpp"

namespace fs = std::filesystem;
using namespace datkit;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

TrackerFactory tracker_factory(const std::string& name) {
  if (name == "mf") return median_flow_factory();
  if (name == "kcf") return kcf_factory();
  throw ValidationError("tracker must be 'mf' or 'kcf', got '" + name + "'");
}

Category parse_category(const std::string& s) {
  const auto c = category_from_string(s);
  if (!c || (*c != Category::L && *c != Category::R)) throw ValidationError("category must be L or R, got '" + s + "'");
  return *c;
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

// Flags shared by several subcommands. Everything is optional so the run
// subcommand can tell "given on the command line" from "defaulted".
struct NoiseFlags {
  std::optional<double> miss, fp, jitter, floor;
  void add(CLI::App* app) {
    app->add_option("--miss", miss, "replay miss probability");
    app->add_option("--fp", fp, "replay false-positive probability");
    app->add_option("--jitter", jitter, "replay box jitter sigma in pixels");
    app->add_option("--conf-floor", floor, "replay minimum confidence");
  }
  void apply(ReplayNoise& n) const {
    if (miss) n.miss_prob = *miss;
    if (fp) n.fp_prob = *fp;
    if (jitter) n.jitter_sigma = *jitter;
    if (floor) n.confidence_floor = *floor;
  }
};

struct CostFlags {
  std::optional<double> c_detect, c_track, c_idle;
  void add(CLI::App* app) {
    app->add_option("--c-detect", c_detect, "modeled seconds per detector call");
    app->add_option("--c-track", c_track, "modeled seconds per tracker update");
    app->add_option("--c-idle", c_idle, "modeled seconds per idle frame");
  }
  void apply(CostModel& c) const {
    if (c_detect) c.c_detect = *c_detect;
    if (c_track) c.c_track = *c_track;
    if (c_idle) c.c_idle = *c_idle;
  }
};

struct ThresholdFlags {
  std::optional<double> accurate, localization;
  void add(CLI::App* app) {
    app->add_option("--iou-accurate", accurate, "IOU at or above which a prediction is accurate");
    app->add_option("--iou-localization", localization, "IOU at or above which a prediction is a localization error");
  }
  void apply(MatchThresholds& t) const {
    if (accurate) t.accurate = *accurate;
    if (localization) t.localization = *localization;
  }
};

// ---------------------------------------------------------------------------
// run

struct RunFlags {
  std::optional<std::string> config, mode, tracker, detector, params, category, seq, out, trace, external_cmd;
  std::optional<double> external_timeout;
  std::optional<std::uint64_t> seed;
  NoiseFlags noise;
  CostFlags cost;
  ThresholdFlags thresholds;
  bool wall_clock = false;
};

int cmd_run(const RunFlags& f) {
  RunConfig cfg;
  if (f.config) apply_json(cfg, nlohmann::json::parse(read_file_text(*f.config), nullptr, true, true));
  if (f.mode) {
    const auto m = run_mode_from_string(*f.mode);
    if (!m) throw UsageError("--mode must be dat, detector_only or tracker_only");
    cfg.mode = *m;
  }
  if (f.tracker) cfg.tracker = *f.tracker;
  if (f.detector) cfg.detector = *f.detector;
  if (f.params) cfg.params = cfg.params.with_rck(*f.params);
  if (f.category) cfg.params.category = parse_category(*f.category);
  if (f.seq) cfg.seq = *f.seq;
  if (f.out) cfg.out = *f.out;
  if (f.trace) cfg.trace = *f.trace;
  if (f.external_cmd) cfg.external_cmd = *f.external_cmd;
  if (f.external_timeout) cfg.external_timeout = *f.external_timeout;
  if (f.seed) cfg.seed = *f.seed;
  cfg.noise.seed = cfg.seed;
  f.noise.apply(cfg.noise);
  f.cost.apply(cfg.cost);
  f.thresholds.apply(cfg.thresholds);
  if (cfg.seq.empty()) throw UsageError("run needs --seq (or 'seq' in --config)");
  if (cfg.out.empty()) throw UsageError("run needs --out (or 'out' in --config)");
  validate(cfg);

  const FrameSequence seq = open_sequence(cfg.seq);
  std::unique_ptr<Detector> detector;
  if (cfg.detector == "replay") {
    detector = std::make_unique<ReplayDetector>(seq.annotations(), seq.canvas(), cfg.noise);
  } else {
    const auto timeout = std::chrono::milliseconds(static_cast<long long>(cfg.external_timeout * 1000.0));
    detector = std::make_unique<ExternalDetector>(cfg.external_cmd, cfg.seq, timeout);
  }

  const auto t0 = std::chrono::steady_clock::now();
  const Trace trace = dat_run(seq, *detector, tracker_factory(cfg.tracker), cfg.params, cfg.mode);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (auto* ext = dynamic_cast<ExternalDetector*>(detector.get())) ext->shutdown();

  EvaluationReport report = score_trace(trace, seq.annotations(), cfg.params.category, cfg.thresholds, cfg.cost);
  if (f.wall_clock && seconds > 0.0) report.wall_fps = static_cast<double>(trace.size()) / seconds;

  nlohmann::ordered_json doc;
  doc["command"] = "run";
  doc["config"] = to_json(cfg);
  doc["config"]["trace"] = trace_path_for(cfg).generic_string();
  doc["metrics"] = to_json(report);
  write_file_atomic(trace_path_for(cfg), emit_trace(trace));
  write_file_atomic(cfg.out, dump(doc));
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthFlags {
  std::optional<std::string> spec;
  std::optional<std::size_t> bench;
  std::uint64_t suite_seed = 2024;
  std::size_t frames = 900;
  std::string out;
  std::uint64_t seed = 1;
};

int cmd_synth(const SynthFlags& f) {
  if (f.spec.has_value() == f.bench.has_value()) throw UsageError("synth needs exactly one of --spec or --bench");
  const SynthSpec spec =
      f.spec ? synth_spec_from_json(nlohmann::json::parse(read_file_text(*f.spec), nullptr, true, true))
             : occlusion_benchmark_spec(*f.bench, f.suite_seed, f.frames);
  const GeneratedSequence g = generate_sequence(spec, f.seed);
  const fs::path dir(f.out);
  // Drop frames left over from an earlier, longer sequence.
  if (fs::is_directory(dir))
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto name = e.path().filename().string();
      if (name.starts_with("frame_") && name.ends_with(".pgm")) {
        const auto idx = text::parse_int(std::string_view(name).substr(6, name.size() - 10));
        if (idx && *idx >= 0 && static_cast<std::size_t>(*idx) >= spec.n_frames) fs::remove(e.path());
      }
    }
  write_sequence(dir, g.sequence);
  nlohmann::ordered_json meta;
  meta["seed"] = f.seed;
  meta["spec"] = to_json(spec);
  write_file_atomic(dir / "synth.json", dump(meta));
  return 0;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepFlags {
  std::vector<std::string> seqs;
  std::optional<std::size_t> bench;
  std::uint64_t suite_seed = 2024;
  std::size_t frames = 900;
  std::string tracker = "mf";
  std::vector<std::size_t> grid_r, grid_c, grid_k;
  std::uint64_t seed = 1;
  std::optional<unsigned> jobs;
  std::string out;
  NoiseFlags noise;
  CostFlags cost;
  ThresholdFlags thresholds;
};

unsigned default_jobs() {
  if (const char* env = std::getenv("DAT_KIT_JOBS")) {
    const auto v = text::parse_int(env);
    if (!v || *v < 1) throw UsageError(std::string("DAT_KIT_JOBS must be a positive integer, got '") + env + "'");
    return static_cast<unsigned>(*v);
  }
  return 1;
}

int cmd_sweep(const SweepFlags& f) {
  if (f.seqs.empty() == !f.bench.has_value()) throw UsageError("sweep needs --seq directories or --bench N (not both)");
  SweepGrid grid = SweepGrid::defaults();
  if (!f.grid_r.empty()) grid.reset_iterations = f.grid_r;
  if (!f.grid_c.empty()) grid.consecutive_iou = f.grid_c;
  if (!f.grid_k.empty()) grid.check_iterations = f.grid_k;

  std::vector<FrameSequence> sequences;
  if (f.bench) {
    for (auto& g : occlusion_benchmark_suite(*f.bench, f.suite_seed, f.frames)) sequences.push_back(std::move(g.sequence));
  } else {
    for (const auto& s : f.seqs) sequences.push_back(open_sequence(s));
  }

  ReplayNoise noise;
  f.noise.apply(noise);
  if (!noise.valid()) throw ValidationError("invalid replay noise parameters");
  SweepOptions opt;
  f.cost.apply(opt.cost);
  f.thresholds.apply(opt.thresholds);
  opt.jobs = f.jobs ? *f.jobs : default_jobs();
  if (opt.jobs < 1) throw UsageError("--jobs must be at least 1");

  // Folds are participants; sequences without one form their own fold.
  std::set<std::string> participants;
  for (const auto& s : sequences)
    if (!s.participant_id().empty()) participants.insert(s.participant_id());
  std::vector<SweepCase> cases;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& s = sequences[i];
    const int fold = s.participant_id().empty()
                         ? static_cast<int>(participants.size() + i)
                         : static_cast<int>(std::distance(participants.begin(), participants.find(s.participant_id())));
    for (Category cat : {Category::L, Category::R}) {
      if (std::none_of(s.annotations().begin(), s.annotations().end(), [cat](const auto& r) { return r.category == cat; }))
        continue;
      ReplayNoise n = noise;
      n.seed = hash_combine(f.seed, cases.size());
      const FrameSequence* sp = &s;
      cases.push_back({sp, cat, fold, [sp, n] { return std::make_unique<ReplayDetector>(sp->annotations(), sp->canvas(), n); }});
    }
  }
  if (cases.empty()) throw ValidationError("no sequence has L or R ground truth to sweep over");

  const auto rows = sweep_parameters(grid, cases, tracker_factory(f.tracker), opt);
  write_file_atomic(f.out, emit_sweep_csv(rows));

  nlohmann::ordered_json cfg;
  cfg["command"] = "sweep";
  cfg["tracker"] = f.tracker;
  cfg["sequences"] = f.bench ? nlohmann::ordered_json{{"bench", *f.bench}, {"suite_seed", f.suite_seed}, {"frames", f.frames}}
                             : nlohmann::ordered_json(f.seqs);
  cfg["grid"] = {{"R", grid.reset_iterations}, {"C", grid.consecutive_iou}, {"K", grid.check_iterations}};
  cfg["seed"] = f.seed;
  cfg["miss_prob"] = noise.miss_prob;
  cfg["fp_prob"] = noise.fp_prob;
  cfg["jitter_sigma"] = noise.jitter_sigma;
  cfg["confidence_floor"] = noise.confidence_floor;
  cfg["c_detect"] = opt.cost.c_detect;
  cfg["c_track"] = opt.cost.c_track;
  cfg["c_idle"] = opt.cost.c_idle;
  cfg["iou_accurate"] = opt.thresholds.accurate;
  cfg["iou_localization"] = opt.thresholds.localization;
  fs::path side(f.out);
  side.replace_extension(".config.json");
  write_file_atomic(side, dump(cfg));
  return 0;
}

// ---------------------------------------------------------------------------
// score

struct ScoreFlags {
  std::string pred;
  std::optional<std::string> gt, seq, out;
  std::string category = "L";
  std::optional<std::size_t> frames;
  std::uint64_t seed = 1;
  CostFlags cost;
  ThresholdFlags thresholds;
};

int cmd_score(const ScoreFlags& f) {
  if (f.gt.has_value() == f.seq.has_value()) throw UsageError("score needs exactly one of --gt or --seq");
  const Category cat = parse_category(f.category);
  std::vector<AnnotationRecord> gt;
  std::optional<std::size_t> frames = f.frames;
  if (f.seq) {
    const FrameSequence seq = open_sequence(*f.seq);
    gt = seq.annotations();
    if (!frames) frames = seq.size();
  } else {
    gt = parse_annotations(read_file_text(*f.gt));
  }
  CostModel cost;
  f.cost.apply(cost);
  MatchThresholds th;
  f.thresholds.apply(th);

  const std::string text_in = read_file_text(f.pred);
  const auto rows = text::lines(text_in);
  const bool empty = std::all_of(rows.begin(), rows.end(), [](auto r) { return text::trim(r).empty(); });
  std::string format;
  EvaluationReport report;
  auto frames_from_gt = [&](std::size_t at_least) {
    std::size_t n = at_least;
    for (const auto& r : gt) n = std::max(n, r.frame_index + 1);
    return n;
  };

  if (!empty && text::trim(rows[0]) == kTraceHeader) {
    format = "trace";
    const Trace trace = parse_trace(text_in);
    if (frames && *frames != trace.size())
      throw ValidationError("trace has " + std::to_string(trace.size()) + " frames but " + std::to_string(*frames) +
                            " were expected");
    report = score_trace(trace, gt, cat, th, cost);
  } else {
    std::vector<AnnotationRecord> preds;
    if (!empty) {
      if (text::trim(rows[0]) != kAnnotationHeader)
        throw FormatError("prediction file must start with '" + std::string(kTraceHeader) + "' or '" +
                          std::string(kAnnotationHeader) + "'");
      preds = parse_annotations(text_in);
      format = "annotations";
    } else {
      format = "empty";
    }
    std::size_t pred_extent = 0;
    for (const auto& p : preds) pred_extent = std::max(pred_extent, p.frame_index + 1);
    const std::size_t n = frames ? *frames : frames_from_gt(pred_extent);
    if (pred_extent > n)
      throw ValidationError("frame range mismatch: predictions reach frame " + std::to_string(pred_extent - 1) +
                            " but only " + std::to_string(n) + " frames are scored");
    std::vector<std::optional<BoundingBox>> track(n);
    for (const auto& p : preds)
      if (p.category == cat) track[p.frame_index] = p.box;
    report = score_predictions(track, gt, cat, th);
  }

  nlohmann::ordered_json doc;
  doc["command"] = "score";
  nlohmann::ordered_json cfg;
  cfg["pred"] = f.pred;
  cfg["pred_format"] = format;
  if (f.gt) cfg["gt"] = *f.gt;
  if (f.seq) cfg["seq"] = *f.seq;
  cfg["category"] = to_string(cat);
  cfg["seed"] = f.seed;
  cfg["c_detect"] = cost.c_detect;
  cfg["c_track"] = cost.c_track;
  cfg["c_idle"] = cost.c_idle;
  cfg["iou_accurate"] = th.accurate;
  cfg["iou_localization"] = th.localization;
  doc["config"] = cfg;
  doc["metrics"] = to_json(report);
  if (f.out) write_file_atomic(*f.out, dump(doc));
  else std::cout << dump(doc);
  return 0;
}

// ---------------------------------------------------------------------------
// split

struct SplitFlags {
  std::string participants;
  std::size_t groups = 3;
  std::optional<std::string> out;
  std::uint64_t seed = 1;
};

int cmd_split(const SplitFlags& f) {
  const auto records = parse_participants(read_file_text(f.participants));
  const ParticipantSplit split = split_participants(records, f.groups);
  nlohmann::ordered_json doc;
  doc["command"] = "split";
  doc["config"] = {{"participants", f.participants}, {"groups", f.groups}, {"seed", f.seed}};
  doc["search"] = split.exhaustive ? "exhaustive" : "greedy";
  doc["groups"] = split.groups;
  doc["group_mean_uems"] = split.group_mean_uems;
  doc["objective"] = split.objective;
  if (split.anova) {
    const auto& a = *split.anova;
    doc["anova"] = {{"f", a.infinite_f ? nlohmann::ordered_json("inf") : nlohmann::ordered_json(a.f_statistic)},
                    {"df_between", a.df_between},
                    {"df_within", a.df_within},
                    {"p", a.p_value}};
  } else {
    doc["anova"] = nullptr;
  }
  if (f.out) write_file_atomic(*f.out, dump(doc));
  else std::cout << dump(doc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detector-assisted tracking experiments"};
  app.name("dat-kit");
  app.require_subcommand(1);

  RunFlags rf;
  auto* run = app.add_subcommand("run", "run one sequence and write a report + trace");
  run->add_option("--config", rf.config, "JSON config; command-line flags take precedence");
  run->add_option("--mode", rf.mode, "dat | detector_only | tracker_only");
  run->add_option("--tracker", rf.tracker, "mf | kcf");
  run->add_option("--detector", rf.detector, "replay | external");
  run->add_option("--params", rf.params, "DAT parameters as R/C/K");
  run->add_option("--category", rf.category, "L | R");
  run->add_option("--seq", rf.seq, "sequence directory");
  run->add_option("--out", rf.out, "report JSON path");
  run->add_option("--trace", rf.trace, "trace CSV path (default: <out> with extension .trace.csv)");
  run->add_option("--external-cmd", rf.external_cmd, "external detector command line");
  run->add_option("--external-timeout", rf.external_timeout, "seconds to wait per external response");
  run->add_option("--seed", rf.seed, "replay noise seed");
  run->add_flag("--wall-clock", rf.wall_clock, "also report measured frames per second");
  rf.noise.add(run);
  rf.cost.add(run);
  rf.thresholds.add(run);

  SynthFlags yf;
  auto* synth = app.add_subcommand("synth", "generate a synthetic sequence directory");
  synth->add_option("--spec", yf.spec, "synth spec JSON");
  synth->add_option("--bench", yf.bench, "generate benchmark sequence N instead of a spec");
  synth->add_option("--suite-seed", yf.suite_seed, "benchmark suite seed");
  synth->add_option("--frames", yf.frames, "benchmark sequence length");
  synth->add_option("--out", yf.out, "output directory")->required();
  synth->add_option("--seed", yf.seed, "generation seed");

  SweepFlags sf;
  auto* sweep = app.add_subcommand("sweep", "evaluate DAT over an R/C/K grid");
  sweep->add_option("--seq", sf.seqs, "sequence directories");
  sweep->add_option("--bench", sf.bench, "use N generated benchmark sequences");
  sweep->add_option("--suite-seed", sf.suite_seed, "benchmark suite seed");
  sweep->add_option("--frames", sf.frames, "benchmark sequence length");
  sweep->add_option("--tracker", sf.tracker, "mf | kcf");
  sweep->add_option("--grid-r", sf.grid_r, "reset iterations")->delimiter(',');
  sweep->add_option("--grid-c", sf.grid_c, "consecutive IOU counts")->delimiter(',');
  sweep->add_option("--grid-k", sf.grid_k, "check iterations")->delimiter(',');
  sweep->add_option("--seed", sf.seed, "replay noise seed");
  sweep->add_option("--jobs", sf.jobs, "parallel grid cells (default: DAT_KIT_JOBS or 1)");
  sweep->add_option("--out", sf.out, "sweep CSV path")->required();
  sf.noise.add(sweep);
  sf.cost.add(sweep);
  sf.thresholds.add(sweep);

  ScoreFlags cf;
  auto* score = app.add_subcommand("score", "score a prediction CSV against ground truth");
  score->add_option("--pred", cf.pred, "trace CSV, annotation-style CSV or empty file")->required();
  score->add_option("--gt", cf.gt, "ground-truth annotation CSV");
  score->add_option("--seq", cf.seq, "sequence directory holding the ground truth");
  score->add_option("--category", cf.category, "L | R");
  score->add_option("--frames", cf.frames, "number of frames scored");
  score->add_option("--out", cf.out, "report JSON path (default: stdout)");
  score->add_option("--seed", cf.seed, "recorded for provenance; scoring is deterministic");
  cf.cost.add(score);
  cf.thresholds.add(score);

  SplitFlags pf;
  auto* split = app.add_subcommand("split", "balance participants into groups by UEMS");
  split->add_option("--participants", pf.participants, "CSV with id,uems,frames")->required();
  split->add_option("--groups", pf.groups, "number of groups");
  split->add_option("--out", pf.out, "output JSON path (default: stdout)");
  split->add_option("--seed", pf.seed, "recorded for provenance; the split is deterministic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(rf);
    if (*synth) return cmd_synth(yf);
    if (*sweep) return cmd_sweep(sf);
    if (*score) return cmd_score(cf);
    if (*split) return cmd_split(pf);
  } catch (const UsageError& e) {
    std::cerr << "dat-kit: " << e.what() << "\n";
    return 1;
  } catch (const ExternalDetectorError& e) {
    std::cerr << "dat-kit: external detector: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "dat-kit: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "dat-kit: invalid JSON: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "dat-kit: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
