#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <json.hpp>

#include "datkit/datkit.hpp"
#include "support/tempdir.hpp"

using namespace datkit;
using datkit::testing::TempDir;
namespace fs = std::filesystem;

namespace {

int dat_kit(const std::string& args, const fs::path& stdout_to = "/dev/null") {
  const std::string cmd = std::string(DAT_KIT_BINARY) + " " + args + " >" + stdout_to.string() + " 2>/dev/null";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

nlohmann::json load(const fs::path& p) { return nlohmann::json::parse(read_file_text(p)); }

// One small benchmark sequence shared by the tests in this file.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir;
    ASSERT_EQ(dat_kit("synth --bench 0 --frames 240 --out " + q(seq())), 0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path seq() { return *dir_ / "seq"; }
  static fs::path tmp(const std::string& name) { return *dir_ / name; }

  static TempDir* dir_;
};
TempDir* Cli::dir_ = nullptr;

}  // namespace

TEST_F(Cli, SynthWritesReadableSequence) {
  const FrameSequence s = open_sequence(seq());
  EXPECT_EQ(s.size(), 240u);
  EXPECT_FALSE(s.annotations().empty());
  EXPECT_TRUE(fs::exists(seq() / "synth.json"));
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(dat_kit(""), 1);
  EXPECT_EQ(dat_kit("bogus"), 1);
  EXPECT_EQ(dat_kit("run --out " + q(tmp("x.json"))), 1);  // no --seq
  EXPECT_EQ(dat_kit("synth --out " + q(tmp("s"))), 1);      // neither --spec nor --bench
  EXPECT_EQ(dat_kit("run --seq " + q(seq()) + " --out " + q(tmp("x.json")) + " --mode sideways"), 1);
  EXPECT_EQ(dat_kit("score --pred " + q(tmp("x"))), 1);
}

TEST_F(Cli, ValidationAndIoErrorsExitTwo) {
  EXPECT_EQ(dat_kit("run --seq " + q(seq()) + " --out " + q(tmp("x.json")) + " --params 1/2"), 2);
  EXPECT_EQ(dat_kit("run --seq " + q(tmp("missing")) + " --out " + q(tmp("x.json"))), 2);
  write_file_atomic(tmp("bad.json"), "{\"mode\": ");
  EXPECT_EQ(dat_kit("run --config " + q(tmp("bad.json")) + " --seq " + q(seq()) + " --out " + q(tmp("x.json"))), 2);
  write_file_atomic(tmp("typo.json"), "{\"reset_iterations\": 5}");
  EXPECT_EQ(dat_kit("run --config " + q(tmp("typo.json")) + " --seq " + q(seq()) + " --out " + q(tmp("x.json"))), 2);
  write_file_atomic(tmp("people.csv"), "id,uems,frames\nA,99,1\n");
  EXPECT_EQ(dat_kit("split --participants " + q(tmp("people.csv"))), 2);
}

TEST_F(Cli, ExternalDetectorFailureExitsThree) {
  const std::string base = "run --seq " + q(seq()) + " --out " + q(tmp("ext.json")) + " --detector external";
  EXPECT_EQ(dat_kit(base + " --external-cmd '" FAKE_DETECTOR_BINARY " malformed'"), 3);
  EXPECT_EQ(dat_kit(base + " --external-cmd '" FAKE_DETECTOR_BINARY " no-hello'"), 3);
}

TEST_F(Cli, ExternalDetectorRunMatchesNoiselessReplay) {
  const std::string ext = std::string(FAKE_DETECTOR_BINARY) + " normal " + (seq() / "annotations.csv").string();
  ASSERT_EQ(dat_kit("run --seq " + q(seq()) + " --out " + q(tmp("ext.json")) + " --detector external --external-cmd '" +
                    ext + "' --params 40/3/10"),
            0);
  ASSERT_EQ(dat_kit("run --seq " + q(seq()) + " --out " + q(tmp("rep.json")) +
                    " --miss 0 --fp 0 --jitter 0 --params 40/3/10"),
            0);
  EXPECT_EQ(read_file_text(tmp("ext.trace.csv")), read_file_text(tmp("rep.trace.csv")));
}

TEST_F(Cli, FlagsOverrideConfig) {
  write_file_atomic(tmp("cfg.json"), R"({"params": "50/2/7", "tracker": "kcf", "miss_prob": 0.3, "seed": 9})");
  ASSERT_EQ(dat_kit("run --config " + q(tmp("cfg.json")) + " --seq " + q(seq()) + " --out " + q(tmp("cfg-run.json")) +
                    " --params 60/1/5"),
            0);
  const auto doc = load(tmp("cfg-run.json"));
  EXPECT_EQ(doc["config"]["params"], "60/1/5");
  EXPECT_EQ(doc["config"]["tracker"], "kcf");
  EXPECT_EQ(doc["config"]["miss_prob"], 0.3);
  EXPECT_EQ(doc["config"]["seed"], 9);
  EXPECT_TRUE(doc["metrics"]["wall_fps"].is_null());
}

TEST_F(Cli, ScoringTheTraceReproducesRunMetrics) {
  ASSERT_EQ(dat_kit("run --seq " + q(seq()) + " --out " + q(tmp("r.json")) + " --params 50/3/20"), 0);
  ASSERT_EQ(dat_kit("score --pred " + q(tmp("r.trace.csv")) + " --seq " + q(seq()) + " --out " + q(tmp("s.json"))),
            0);
  const auto run = load(tmp("r.json"))["metrics"], score = load(tmp("s.json"))["metrics"];
  EXPECT_EQ(run, score);
  const auto& m = run;
  EXPECT_EQ(m["frames"], 240);
  EXPECT_EQ(m["detector_calls"].get<int>() + m["idle_frames"].get<int>() <= 240, true);
}

TEST_F(Cli, ScoresAnnotationStyleAndEmptyPredictions) {
  // Ground truth scored against itself is perfect.
  ASSERT_EQ(dat_kit("score --pred " + q(seq() / "annotations.csv") + " --seq " + q(seq()), tmp("self.json")), 0);
  const auto self = load(tmp("self.json"));
  EXPECT_EQ(self["config"]["pred_format"], "annotations");
  EXPECT_EQ(self["metrics"]["f1"], 1.0);

  write_file_atomic(tmp("empty.csv"), "");
  ASSERT_EQ(dat_kit("score --pred " + q(tmp("empty.csv")) + " --seq " + q(seq()), tmp("empty.json")), 0);
  const auto empty = load(tmp("empty.json"));
  EXPECT_EQ(empty["metrics"]["precision"], 0.0);
  EXPECT_GT(empty["metrics"]["misses"].get<int>(), 0);

  EXPECT_EQ(dat_kit("score --pred " + q(seq() / "annotations.csv") + " --seq " + q(seq()) + " --frames 3"), 2);
}

TEST_F(Cli, BaselinesRun) {
  ASSERT_EQ(dat_kit("run --seq " + q(seq()) + " --out " + q(tmp("det.json")) + " --mode detector_only"), 0);
  EXPECT_EQ(load(tmp("det.json"))["metrics"]["detector_calls"], 240);
  ASSERT_EQ(dat_kit("run --seq " + q(seq()) + " --out " + q(tmp("trk.json")) + " --mode tracker_only"), 0);
  EXPECT_EQ(load(tmp("trk.json"))["metrics"]["detector_calls"], 0);
}

TEST_F(Cli, SweepWritesSortedCsvAndSidecar) {
  ASSERT_EQ(dat_kit("sweep --seq " + q(seq()) + " --grid-r 20,40 --grid-c 1,3 --grid-k 10 --jobs 2 --out " +
                    q(tmp("sweep.csv"))),
            0);
  const auto rows = text::lines(read_file_text(tmp("sweep.csv")));
  std::size_t data_rows = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) data_rows += !text::trim(rows[i]).empty();
  EXPECT_EQ(data_rows, 4u);
  EXPECT_EQ(load(tmp("sweep.config.json"))["grid"]["R"], (std::vector<int>{20, 40}));
}

TEST_F(Cli, SplitReportsAnova) {
  write_file_atomic(tmp("people.csv"), "id,uems,frames\nA,10,1\nB,20,1\nC,30,1\nD,12,1\nE,25,1\nF,31,1\n");
  ASSERT_EQ(dat_kit("split --participants " + q(tmp("people.csv")) + " --groups 2", tmp("split.json")), 0);
  const auto doc = load(tmp("split.json"));
  EXPECT_EQ(doc["search"], "exhaustive");
  EXPECT_EQ(doc["groups"].size(), 2u);
  EXPECT_EQ(doc["anova"]["df_between"], 1);
  EXPECT_EQ(doc["anova"]["df_within"], 4);
}

TEST_F(Cli, RerunsAreByteIdentical) {
  for (int i = 0; i < 2; ++i)
    ASSERT_EQ(dat_kit("run --seq " + q(seq()) + " --out " + q(tmp("d" + std::to_string(i) + ".json")) + " --seed 4"), 0);
  const std::string a = read_file_text(tmp("d0.trace.csv")), b = read_file_text(tmp("d1.trace.csv"));
  EXPECT_EQ(a, b);
  // Reports differ only in the output paths they record.
  auto strip = [](nlohmann::json j) {
    j["config"].erase("out");
    j["config"].erase("trace");
    return j.dump();
  };
  EXPECT_EQ(strip(load(tmp("d0.json"))), strip(load(tmp("d1.json"))));
}
