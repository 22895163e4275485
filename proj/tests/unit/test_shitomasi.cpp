#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "stabscore/rng.hpp"
#include "stabscore/shitomasi.hpp"
#include "test_util.hpp"

using namespace stabscore;
using stabscore::testing::crossing;
using stabscore::testing::tmp_path;

namespace {

// Direct evaluation: full 2-D Gaussian window, clamped indices, eigen-solver minimum.
double brute_response(const ImageGray& img, int x, int y, double sigma = 1.0) {
  const int r = static_cast<int>(std::ceil(3 * sigma));
  double norm = 0.0;
  for (int i = -r; i <= r; ++i) norm += std::exp(-0.5 * i * i / (sigma * sigma));
  Eigen::Matrix2d m = Eigen::Matrix2d::Zero();
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const double w = std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma)) / (norm * norm);
      const int px = std::clamp(x + dx, 0, img.width() - 1), py = std::clamp(y + dy, 0, img.height() - 1);
      const double gx = 0.5 * (img.clamped(px + 1, py) - img.clamped(px - 1, py));
      const double gy = 0.5 * (img.clamped(px, py + 1) - img.clamped(px, py - 1));
      Eigen::Vector2d g(gx, gy);
      m += w * g * g.transpose();
    }
  return std::max(0.0, Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(m).eigenvalues()(0));
}

ImageGray random_image(int w, int h, std::uint64_t seed) {
  Stream s(seed, 77);
  return gaussian_blur(ImageGray::from_function(w, h, [&](int, int) { return s.uniform(); }), 0.8);
}

ScoreMap quadratic_map(int w, int h, double a, double b, double c, double x0, double y0) {
  std::vector<double> v;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x - x0, dy = y - y0;
      v.push_back(5.0 - (a * dx * dx + 2 * b * dx * dy + c * dy * dy));
    }
  return ScoreMap(w, h, std::move(v));
}

}  // namespace

TEST(MinEigenvalue, ClosedForm) {
  EXPECT_DOUBLE_EQ(min_eigenvalue(2, 0, 5), 2.0);
  EXPECT_NEAR(min_eigenvalue(2, 1, 2), 1.0, 1e-15);
  EXPECT_EQ(min_eigenvalue(1, 1, 1), 0.0);
}

TEST(Response, MatchesBruteForceOnRandomImages) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ImageGray img = random_image(17 + static_cast<int>(seed), 13, seed);
    const ScoreMap s = response(img);
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) ASSERT_NEAR(s(x, y), brute_response(img, x, y), 1e-9);
  }
}

TEST(Response, OtherWindowSigma) {
  const ImageGray img = random_image(20, 20, 11);
  const ScoreMap s = response(img, 1.6);
  for (int y = 0; y < 20; y += 3)
    for (int x = 0; x < 20; x += 3) EXPECT_NEAR(s(x, y), brute_response(img, x, y, 1.6), 1e-9);
}

TEST(Response, ConstantImageIsZero) {
  const ScoreMap s = response(ImageGray(12, 9, 0.4));
  for (double v : s.values()) EXPECT_EQ(v, 0.0);
}

TEST(Response, StraightEdgeIsNearZero) {
  const ImageGray edge = ImageGray::from_function(21, 21, [](int x, int) { return x < 10 ? 0.0 : 1.0; });
  for (double v : response(edge).values()) EXPECT_LT(v, 1e-12);
}

TEST(Response, NonNegativeAndTransposeInvariant) {
  const ImageGray img = random_image(15, 11, 4);
  const ImageGray t = ImageGray::from_function(11, 15, [&](int x, int y) { return img(y, x); });
  const ScoreMap a = response(img), b = response(t);
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 15; ++x) {
      EXPECT_GE(a(x, y), 0.0);
      EXPECT_NEAR(a(x, y), b(y, x), 1e-15);
    }
}

TEST(Response, ScalesQuadraticallyWithContrast) {
  const ImageGray img = random_image(13, 13, 9);
  const ImageGray scaled = map_pixels(img, [](double v) { return 3.0 * v; });
  const ScoreMap a = response(img), b = response(scaled);
  for (std::size_t i = 0; i < a.values().size(); ++i) EXPECT_NEAR(b.values()[i], 9.0 * a.values()[i], 1e-12);
}

TEST(Response, RejectsTinyImages) { EXPECT_THROW(response(ImageGray(6, 10)), DomainError); }

TEST(Response, CrossingPeaksAtJunction) {
  const ImageGray img = crossing(31, 31, 15, 15);
  const ScoreMap s = response(img);
  const auto c = nms_candidates(s, 2, 1e-6);
  ASSERT_FALSE(c.empty());
  EXPECT_EQ(c.front().x, 15);
  EXPECT_EQ(c.front().y, 15);
}

TEST(Nms, StrictMaximaAndOrdering) {
  // clang-format off
  const ScoreMap s(5, 4, {0, 0, 0, 0, 0,
                          0, 3, 0, 2, 0,
                          0, 0, 0, 0, 0,
                          0, 3, 0, 0, 1});
  // clang-format on
  const auto c = nms_candidates(s, 1, 0.5);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c[0], (Candidate{1, 1, 3}));
  EXPECT_EQ(c[1], (Candidate{1, 3, 3}));
  EXPECT_EQ(c[2], (Candidate{3, 1, 2}));
  EXPECT_EQ(c[3], (Candidate{4, 3, 1}));
  EXPECT_EQ(nms_candidates(s, 1, 2.5).size(), 2u);
  EXPECT_EQ(nms_candidates(s, 1, 0.5, 1).size(), 2u);
  EXPECT_TRUE(nms_candidates(s, 2, 0.5).empty());
}

TEST(Nms, PlateausProduceNoCandidates) {
  const ScoreMap s(4, 4, std::vector<double>(16, 1.0));
  EXPECT_TRUE(nms_candidates(s, 1, 0.0).empty());
}

TEST(Refine, ExactOnQuadratics) {
  const ScoreMap s = quadratic_map(5, 5, 1, 0, 1, 2.3, 2.2);
  const auto r = refine(s, 2, 2);
  ASSERT_TRUE(r.is_refined());
  EXPECT_NEAR(r.point().x(), 2.3, 1e-12);
  EXPECT_NEAR(r.point().y(), 2.2, 1e-12);
  Stream rng(2, 2);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(0.5, 2), c = rng.uniform(0.5, 2), b = rng.uniform(-0.3, 0.3);
    const double x0 = 4 + rng.uniform(-0.4, 0.4), y0 = 4 + rng.uniform(-0.4, 0.4);
    const auto q = refine(quadratic_map(9, 9, a, b, c, x0, y0), 4, 4);
    ASSERT_TRUE(q.is_refined());
    EXPECT_NEAR(q.point().x(), x0, 1e-12);
    EXPECT_NEAR(q.point().y(), y0, 1e-12);
  }
}

TEST(Refine, FailsOnFlatAndFarPeaks) {
  EXPECT_FALSE(refine(ScoreMap(5, 5, std::vector<double>(25, 2.0)), 2, 2).is_refined());
  EXPECT_FALSE(refine(quadratic_map(5, 5, 1, 0, 1, 2.7, 2.0), 2, 2).is_refined());
  EXPECT_FALSE(refine(quadratic_map(5, 5, 1, 0, 1, 2.0, 1.3), 2, 2).is_refined());
  // A ridge: singular Hessian.
  EXPECT_FALSE(refine(quadratic_map(5, 5, 1, 0, 0, 2.0, 2.0), 2, 2).is_refined());
}

TEST(Refine, BorderCandidatesThrow) {
  const ScoreMap s(5, 5, std::vector<double>(25, 0.0));
  EXPECT_THROW(refine(s, 0, 2), RangeError);
  EXPECT_THROW(refine(s, 2, 4), RangeError);
  EXPECT_NO_THROW(refine(s, 1, 3));
}

TEST(Measure, FlatPatchFails) { EXPECT_FALSE(measure(ImageGray(13, 13, 0.5)).is_refined()); }

TEST(Measure, EdgePatchFails) {
  const ImageGray edge = ImageGray::from_function(13, 13, [](int x, int) { return x < 6 ? 0.1 : 0.9; });
  EXPECT_FALSE(measure(edge).is_refined());
}

TEST(Measure, LocatesCrossing) {
  const auto r = measure(crossing(13, 13, 6, 6));
  ASSERT_TRUE(r.is_refined());
  EXPECT_LT((r.point() - Point2(6, 6)).norm(), 0.1);
  const auto off = measure(crossing(13, 13, 6.3, 5.8));
  ASSERT_TRUE(off.is_refined());
  EXPECT_LT((off.point() - Point2(6.3, 5.8)).norm(), 0.15);
}

TEST(Measure, InvariantToContrastScaling) {
  const ImageGray p = crossing(13, 13, 6.2, 5.9, 1.5);
  const auto a = measure(p);
  const auto b = measure(map_pixels(p, [](double v) { return 0.5 * v; }));
  ASSERT_TRUE(a.is_refined());
  ASSERT_TRUE(b.is_refined());
  EXPECT_NEAR((a.point() - b.point()).norm(), 0.0, 1e-9);
}

TEST(Measure, RejectsEvenOrSmallPatches) {
  EXPECT_THROW(measure(ImageGray(12, 13)), DomainError);
  EXPECT_THROW(measure(ImageGray(5, 5)), DomainError);
}

TEST(ScoreMapIo, RoundTripsAsFloat32) {
  const ScoreMap s = response(random_image(10, 8, 1));
  const auto path = tmp_path("score.bin");
  save_score_map(path, s);
  const ScoreMap back = load_score_map(path);
  ASSERT_EQ(back.width(), 10);
  ASSERT_EQ(back.height(), 8);
  for (std::size_t i = 0; i < s.values().size(); ++i)
    EXPECT_EQ(back.values()[i], static_cast<double>(static_cast<float>(s.values()[i])));
  EXPECT_THROW(load_score_map(tmp_path("does-not-exist.bin")), IoError);
}
