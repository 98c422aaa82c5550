#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "lithohod/lithohod.hpp"

using namespace lithohod;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(LITHOHOD_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, SelftestPasses) { EXPECT_EQ(run_cli("selftest"), 0); }

TEST(Cli, ExitCodes) {
  const auto dir = fixture::scratch("cli_codes");
  EXPECT_EQ(run_cli("no-such-command"), 2);
  EXPECT_EQ(run_cli("train"), 2);  // --out is required
  EXPECT_EQ(run_cli("gen-data --set data.no_such_key=1 --out " + (dir / "x").string()), 2);
  EXPECT_EQ(run_cli("gen-data --set data.clip_size=100 --out " + (dir / "x").string()), 2);
  EXPECT_EQ(run_cli("gen-data --config " + (dir / "missing.ini").string()), 3);
  EXPECT_EQ(run_cli("eval --checkpoint " + (dir / "none.bin").string() + " --out " + dir.string()), 3);
  EXPECT_EQ(run_cli("eval --out " + dir.string()), 2);
  std::ofstream(dir / "bad.ini") << "[train]\nspeed = 3\n";
  EXPECT_EQ(run_cli("train --config " + (dir / "bad.ini").string() + " --out " + dir.string()), 2);
}

TEST(Cli, LithoSimWritesResistAndDeformation) {
  const auto dir = fixture::scratch("cli_sim");
  Raster r(64, 64);
  for (int y = 20; y < 44; ++y) {
    for (int x = 10; x < 54; ++x) r(y, x) = 1;
  }
  write_raster_png(dir / "clip.png", r);
  ASSERT_EQ(run_cli("litho-sim --input " + (dir / "clip.png").string() + " --resist " + (dir / "r.png").string() +
                    " --deformation " + (dir / "d.bin").string() + " --aerial " + (dir / "a.png").string()),
            0);
  const auto sim = LithoSimulator().simulate(r);
  EXPECT_EQ(read_raster_png(dir / "r.png"), sim.resist);
  EXPECT_EQ(read_deformation(dir / "d.bin").magnitude, sim.deformation.magnitude);
  EXPECT_TRUE(fs::exists(dir / "a.png"));
  EXPECT_EQ(run_cli("litho-sim --input " + (dir / "nope.png").string() + " --resist x --deformation y"), 3);
}

TEST(Cli, PipelineProducesReports) {
  const auto dir = fixture::scratch("cli_pipeline");
  auto cfg = fixture::tiny_config(dir / "data");
  cfg.train.epochs = 1;
  write_text(dir / "tiny.ini", to_ini(cfg));
  const std::string conf = " --config " + (dir / "tiny.ini").string();
  ASSERT_EQ(run_cli("gen-data" + conf), 0);
  EXPECT_EQ(slurp(dir / "data" / "config.ini"), to_ini(cfg));
  EXPECT_EQ(read_annotations(dir / "data" / "train" / "annotations.jsonl").size(), 8u);
  ASSERT_EQ(run_cli("train" + conf + " --out " + (dir / "run").string()), 0);
  ASSERT_EQ(run_cli("eval" + conf + " --checkpoint " + (dir / "run" / "checkpoint.bin").string() + " --out " +
                    (dir / "eval").string() + " --plot"),
            0);
  const auto report = nlohmann::json::parse(slurp(dir / "eval" / "report.json"));
  for (const char* k : {"recall", "fa", "fn", "ap", "curve", "auc"}) EXPECT_TRUE(report.contains(k)) << k;
  EXPECT_TRUE(nlohmann::json::parse(slurp(dir / "eval" / "runtime.json")).contains("runtime_s"));
  EXPECT_TRUE(fs::exists(dir / "eval" / "curve.csv"));
  EXPECT_TRUE(fs::exists(dir / "eval" / "curve.png"));

  ASSERT_EQ(run_cli("detect" + conf + " --checkpoint " + (dir / "run" / "checkpoint.bin").string() + " --out " +
                    (dir / "dets.jsonl").string()),
            0);
  EXPECT_TRUE(fs::exists(dir / "dets.jsonl"));
}

TEST(Cli, EvalOfGroundTruthDetectionsIsPerfect) {
  const auto dir = fixture::scratch("cli_perfect");
  auto cfg = fixture::tiny_config(dir / "data");
  write_text(dir / "tiny.ini", to_ini(cfg));
  const std::string conf = " --config " + (dir / "tiny.ini").string();
  ASSERT_EQ(run_cli("gen-data" + conf), 0);
  std::vector<Detection> dets;
  std::size_t total = 0;
  for (const auto& a : read_annotations(dir / "data" / "test" / "annotations.jsonl")) {
    for (auto b : a.boxes) {
      b.score = 0.9;
      dets.push_back({b, 3, a.id});
      ++total;
    }
  }
  ASSERT_GT(total, 0u);
  write_detections(dir / "gt.jsonl", dets);
  ASSERT_EQ(run_cli("eval" + conf + " --detections " + (dir / "gt.jsonl").string() + " --out " +
                    (dir / "eval").string()),
            0);
  const auto report = nlohmann::json::parse(slurp(dir / "eval" / "report.json"));
  EXPECT_EQ(report["recall"].get<double>(), 1.0);
  EXPECT_EQ(report["fa"].get<int>(), 0);
  EXPECT_EQ(report["auc"].get<double>(), 1.0);
}
