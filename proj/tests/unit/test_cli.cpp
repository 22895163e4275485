#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stabscore/image_io.hpp"
#include "stabscore/records.hpp"
#include "stabscore/scene.hpp"
#include "test_util.hpp"

using namespace stabscore;
using stabscore::testing::tmp_path;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int status;
  std::string out;
  std::string err;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CliRun run(const std::string& args, const std::string& env = "") {
  const std::string out = tmp_path("cli_stdout.txt"), err = tmp_path("cli_stderr.txt");
  const std::string cmd = env + " " + STABSCORE_CLI + " " + args + " >" + out + " 2>" + err;
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

const std::string& scene_png() {
  static const std::string path = [] {
    const auto p = tmp_path("cli_scene.png");
    save_png(p, synthetic_scene(11, SceneOptions{160, 120, 20, 3, 0.7}));
    return p;
  }();
  return path;
}

}  // namespace

TEST(Cli, DetectWritesCsvAndBinary) {
  const auto out = tmp_path("cli_det/d.csv");
  const CliRun r = run("detect --image " + scene_png() + " --n 20 --m 16 --out " + out);
  ASSERT_EQ(r.status, 0) << r.err;
  const auto csv = read_keypoints_csv(out);
  const auto bin = read_detections_binary(tmp_path("cli_det/d.bin"));
  ASSERT_EQ(csv.size(), 20u);
  ASSERT_EQ(bin.size(), 20u);
  for (std::size_t i = 0; i < bin.size(); ++i) EXPECT_NEAR((csv[i].pos - bin[i].pos).norm(), 0.0, 1e-6);
  EXPECT_NE(r.out.find("20 keypoints"), std::string::npos);
}

TEST(Cli, OutputsIndependentOfThreadCount) {
  const std::string base = "detect --image " + scene_png() + " --n 40 --m 32 --seed 5 --out ";
  ASSERT_EQ(run(base + tmp_path("cli_t1.csv"), "STABSCORE_THREADS=1").status, 0);
  ASSERT_EQ(run(base + tmp_path("cli_t4.csv") + " --threads 4").status, 0);
  EXPECT_EQ(slurp(tmp_path("cli_t1.csv")), slurp(tmp_path("cli_t4.csv")));
  EXPECT_EQ(slurp(tmp_path("cli_t1.bin")), slurp(tmp_path("cli_t4.bin")));
}

TEST(Cli, MissingImageIsUsageError) {
  const CliRun r = run("detect --image /no/such/image.png");
  EXPECT_EQ(r.status, 2);
  EXPECT_NE(r.err.find("/no/such/image.png"), std::string::npos);
}

TEST(Cli, BadConfigurationIsUsageError) {
  EXPECT_EQ(run("detect --image " + scene_png() + " --beta 0.5").status, 2);
  EXPECT_EQ(run("detect --image " + scene_png() + " --variant bogus").status, 2);
  EXPECT_EQ(run("detect --image " + scene_png() + " --n 0").status, 2);
  EXPECT_EQ(run("frobnicate").status, 2);
  std::ofstream(tmp_path("cli_bad.toml")) << "unknown_key = 1\n";
  EXPECT_EQ(run("--config " + tmp_path("cli_bad.toml") + " detect --image " + scene_png()).status, 2);
  EXPECT_EQ(run("--config " + tmp_path("cli_missing.toml") + " detect --image " + scene_png()).status, 2);
}

TEST(Cli, CommandLineOverridesConfigFile) {
  std::ofstream(tmp_path("cli_cfg.toml")) << "n = 7\nm = 16\n";
  const std::string base = "--config " + tmp_path("cli_cfg.toml") + " detect --image " + scene_png() + " --out ";
  ASSERT_EQ(run(base + tmp_path("cli_cfg_a.csv")).status, 0);
  EXPECT_EQ(read_keypoints_csv(tmp_path("cli_cfg_a.csv")).size(), 7u);
  ASSERT_EQ(run(base + tmp_path("cli_cfg_b.csv") + " --n 3").status, 0);
  EXPECT_EQ(read_keypoints_csv(tmp_path("cli_cfg_b.csv")).size(), 3u);
}

TEST(Cli, ShortageExitsNonzeroOnlyWhenStrict) {
  const auto flat = tmp_path("cli_flat.png");
  save_png(flat, ImageGray(64, 64, 0.5));
  const CliRun lax = run("detect --image " + flat + " --n 5 --m 16 --out " + tmp_path("cli_flat.csv"));
  EXPECT_EQ(lax.status, 0);
  EXPECT_NE(lax.err.find("warning"), std::string::npos);
  EXPECT_EQ(run("detect --strict --image " + flat + " --n 5 --m 16 --out " + tmp_path("cli_flat.csv")).status, 3);
}

TEST(Cli, GroundTruthExportUsesDefaultThresholds) {
  const CliRun r = run("gt-export --image " + scene_png() + " --n 5 --m 16 --out " + tmp_path("cli_gt.csv"));
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("t_salient=0.01"), std::string::npos);
  EXPECT_NE(r.out.find("t_noise=0.0001"), std::string::npos);
  const std::string text = slurp(tmp_path("cli_gt.csv"));
  EXPECT_EQ(text.substr(0, text.find('\n')), "x,y,s,target_eta,class");
}

TEST(Cli, ScoreEstimatesGivenKeypoints) {
  std::ofstream(tmp_path("cli_kps.csv")) << "x,y\n80,60\n1,1\n";
  const CliRun r = run("score --image " + scene_png() + " --m 16 --keypoints " + tmp_path("cli_kps.csv") + " --out " +
                    tmp_path("cli_est.csv"));
  ASSERT_EQ(r.status, 0) << r.err;
  EXPECT_NE(r.out.find("1 of 2 keypoints scored"), std::string::npos);
}

TEST(Cli, PairEvaluationAndErrors) {
  const auto dir = tmp_path("cli_pairs");
  fs::remove_all(dir);
  ASSERT_EQ(run("synth-pairs --synthetic 2 --width 160 --height 120 --out " + dir).status, 0);
  const CliRun rep = run("eval-rep --pairs " + dir + " --n 60 --m 16 --out " + tmp_path("cli_rep"));
  ASSERT_EQ(rep.status, 0) << rep.err;
  const auto json = nlohmann::json::parse(slurp(tmp_path("cli_rep.json")));
  EXPECT_TRUE(json.contains("metadata"));
  EXPECT_TRUE(json["metadata"].contains("timestamp"));
  EXPECT_EQ(slurp(tmp_path("cli_rep.csv")).find("timestamp"), std::string::npos);

  fs::create_directories(tmp_path("cli_empty"));
  EXPECT_EQ(run("experiment beta-sweep --pairs " + tmp_path("cli_empty")).status, 1);

  std::ofstream(dir + "/synthetic1/H_ab.txt") << "1 0 0\n0 1\n";
  const CliRun bad = run("bench-h --pairs " + dir + " --n 60 --m 16 --out " + tmp_path("cli_bench"));
  EXPECT_NE(bad.status, 0);
  EXPECT_NE(bad.err.find("synthetic1/H_ab.txt"), std::string::npos);
}
