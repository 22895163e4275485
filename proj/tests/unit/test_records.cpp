#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "stabscore/records.hpp"
#include "test_util.hpp"

using namespace stabscore;
using stabscore::testing::tmp_path;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Keypoint> sample_keypoints() {
  std::vector<Keypoint> kps;
  Keypoint a;
  a.pos = Point2(10.5, 20.25);
  a.s = 0.0123;
  a.eme = summarize(std::vector<Point2>{Point2(0, 0), Point2(2, 0)}, 1, kFailureDistance);
  a.eta = std::sqrt(a.eme->second_moment);
  a.score = std::exp(-*a.eta);
  kps.push_back(a);
  Keypoint b;
  b.pos = Point2(1.0 / 3.0, 7);
  b.s = 1e-7;
  kps.push_back(b);
  return kps;
}

}  // namespace

TEST(Records, NumberFormatting) {
  EXPECT_EQ(fmt_num(0.5), "0.5");
  EXPECT_EQ(fmt_num(std::nan("")), "nan");
  EXPECT_EQ(fmt_num(-INFINITY), "-inf");
  EXPECT_EQ(fmt_num(1.0 / 3.0), "0.3333333333");
}

TEST(Records, DetectionsCsv) {
  const auto path = tmp_path("det.csv");
  const auto kps = sample_keypoints();
  write_detections_csv(path, kps);
  const std::string text = slurp(path);
  EXPECT_EQ(text.substr(0, text.find('\n')), "x,y,s,eta,score");
  EXPECT_NE(text.find("0.3333333333,7,1e-07,nan,nan"), std::string::npos);
  const auto back = read_keypoints_csv(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].pos, Point2(10.5, 20.25));
  EXPECT_DOUBLE_EQ(back[0].s, 0.0123);
}

TEST(Records, DetectionsBinaryIsExact) {
  const auto path = tmp_path("det.bin");
  const auto kps = sample_keypoints();
  write_detections_binary(path, kps);
  const std::string bytes = slurp(path);
  EXPECT_EQ(bytes.size(), 12u + 2u * 40u);
  EXPECT_EQ(bytes.substr(0, 4), "STKP");
  const auto back = read_detections_binary(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].pos, kps[0].pos);
  EXPECT_EQ(*back[0].eta, *kps[0].eta);
  EXPECT_EQ(*back[0].score, *kps[0].score);
  EXPECT_EQ(back[1].pos, kps[1].pos);
  EXPECT_FALSE(back[1].score.has_value());
  std::ofstream(tmp_path("junk.bin")) << "XXXX";
  EXPECT_THROW(read_detections_binary(tmp_path("junk.bin")), IoError);
  std::ofstream(tmp_path("short.bin"), std::ios::binary) << bytes.substr(0, 30);
  EXPECT_THROW(read_detections_binary(tmp_path("short.bin")), IoError);
}

TEST(Records, EstimatesAndGroundTruthCsv) {
  const auto kps = sample_keypoints();
  write_estimates_csv(tmp_path("est.csv"), kps);
  const auto rows = detail::read_numeric_csv(tmp_path("est.csv"));
  ASSERT_EQ(rows.size(), 1u);
  ASSERT_EQ(rows[0].size(), 9u);
  EXPECT_NEAR(rows[0][3], kps[0].eme->mean_dist, 1e-9);
  EXPECT_EQ(rows[0][7], 1.0);

  const std::vector<GroundTruthRecord> gt{{Point2(1, 2), 0.5, 0.7, GtClass::kSalient},
                                          {Point2(3, 4), 1e-6, kMaxEta, GtClass::kNoise}};
  write_ground_truth_csv(tmp_path("gt.csv"), gt);
  const std::string text = slurp(tmp_path("gt.csv"));
  EXPECT_EQ(text, "x,y,s,target_eta,class\n1,2,0.5,0.7,salient\n3,4,1e-06," + fmt_num(kMaxEta) + ",noise\n");
}

TEST(Records, CorrespondencesRoundTrip) {
  std::vector<Correspondence> c(2);
  c[0].k = Point2(1, 2);
  c[0].k_prime = Point2(3, 4);
  c[1].k = Point2(5, 6);
  c[1].k_prime = Point2(7, 8);
  c[1].sigma << 2, 0.5, 0.5, 3;
  write_correspondences_csv(tmp_path("corr.csv"), c);
  const auto back = read_correspondences_csv(tmp_path("corr.csv"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].k, c[0].k);
  EXPECT_EQ(back[0].k_prime, c[0].k_prime);
  EXPECT_EQ(back[1].sigma, c[1].sigma);
  std::ofstream(tmp_path("corr4.csv")) << "x1,y1,x2,y2\n1,2,3,4\n";
  EXPECT_EQ(read_correspondences_csv(tmp_path("corr4.csv"))[0].sigma, Eigen::Matrix2d::Identity());
  std::ofstream(tmp_path("corr_bad.csv")) << "1,2,3\n";
  EXPECT_THROW(read_correspondences_csv(tmp_path("corr_bad.csv")), IoError);
  std::ofstream(tmp_path("corr_nan.csv")) << "1,2,x,4\n";
  try {
    read_correspondences_csv(tmp_path("corr_nan.csv"));
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("corr_nan.csv:1"), std::string::npos);
  }
}

TEST(Records, ReportJsonKeepsMetadataSeparate) {
  ExperimentReport rep;
  rep.experiment = "beta-sweep";
  TrialRecord r;
  r.task = "t";
  r.beta = 2.0;
  r.variant = "sqrt-second-moment";
  r.corner_error = std::numeric_limits<double>::infinity();
  r.repeatability = 0.5;
  rep.records.push_back(r);
  rep.aggregates = aggregate(rep.records);
  rep.summary = {{"spearman_beta_repeatability", 0.25}};
  const auto a = report_json(rep, {{"timestamp", "2026-01-01T00:00:00Z"}});
  const auto b = report_json(rep, {{"timestamp", "2027-06-30T12:00:00Z"}});
  auto strip = [](nlohmann::json j) {
    j.erase("metadata");
    return j.dump();
  };
  EXPECT_EQ(strip(a), strip(b));
  EXPECT_EQ(a["summary"]["spearman_beta_repeatability"], 0.25);
  EXPECT_EQ(a["aggregates"][0]["corner_error"]["median"], "inf");
  EXPECT_EQ(a["trials"], 1);
  write_report_csv(tmp_path("rep.csv"), rep);
  EXPECT_EQ(slurp(tmp_path("rep.csv")),
            "trial,task,beta,variant,corner_error,repeatability,mma,inliers,correspondences\n"
            "0,t,2,sqrt-second-moment,inf,0.5,nan,0,0\n");
}
