#include <gtest/gtest.h>

#include <cmath>

#include "stabscore/stability.hpp"
#include "stabscore/stats.hpp"
#include "test_util.hpp"

using namespace stabscore;
using stabscore::testing::crossing;

TEST(Summarize, WorkedExample) {
  const std::vector<Point2> offs{Point2(0, 0), Point2(2, 0)};
  const auto e = summarize(offs, 0, kFailureDistance);
  EXPECT_DOUBLE_EQ(e.mean_dist, 1.0);
  EXPECT_DOUBLE_EQ(e.second_moment, 2.0);
  EXPECT_NEAR(bound_value(e, EmeVariant::kSqrtSecondMoment), 1.41421356, 1e-8);
  EXPECT_DOUBLE_EQ(e.cov_trace, 1.0);
  EXPECT_DOUBLE_EQ(e.delta_sq, 1.0);
  EXPECT_DOUBLE_EQ(e.spectral_2x, 2.0);
  EXPECT_EQ(e.m_total, 2);
  EXPECT_EQ(e.m_refined(), 2);
}

TEST(Summarize, AllZeroOffsets) {
  const std::vector<Point2> offs(10, Point2::Zero());
  const auto e = summarize(offs, 0, kFailureDistance);
  EXPECT_EQ(e.mean_dist, 0.0);
  EXPECT_EQ(e.second_moment, 0.0);
  EXPECT_EQ(e.cov_trace, 0.0);
  EXPECT_EQ(e.delta_sq, 0.0);
  EXPECT_EQ(stability_score(bound_value(e, EmeVariant::kMeanDist)), 1.0);
}

TEST(Summarize, FailuresChargedAtFailureDistance) {
  const std::vector<Point2> offs{Point2(1, 0)};
  const auto e = summarize(offs, 3, 5.0);
  EXPECT_DOUBLE_EQ(e.mean_dist, (1.0 + 15.0) / 4.0);
  EXPECT_DOUBLE_EQ(e.second_moment, (1.0 + 75.0) / 4.0);
  EXPECT_EQ(e.cov_trace, 0.0);
  EXPECT_EQ(e.m_failed, 3);
  const auto all_failed = summarize({}, 4, kFailureDistance);
  EXPECT_DOUBLE_EQ(all_failed.mean_dist, kFailureDistance);
  EXPECT_THROW(summarize({}, 0, 1.0), DomainError);
  EXPECT_THROW(summarize(offs, -1, 1.0), DomainError);
}

TEST(Summarize, OrderingAndDecompositionProperties) {
  Stream s(4, 4);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 1 + static_cast<int>(s.below(40));
    const double spread = s.uniform(0.01, 5.0);
    const Point2 bias(s.uniform(-2, 2), s.uniform(-2, 2));
    std::vector<Point2> offs;
    for (int i = 0; i < n; ++i) offs.push_back(bias + spread * Point2(s.normal(), s.normal()));
    const auto e = summarize(offs, 0, kFailureDistance);
    ASSERT_LE(e.mean_dist, std::sqrt(e.second_moment) * (1 + 1e-12));
    ASSERT_NEAR(e.cov_trace + e.delta_sq, e.second_moment, 1e-9 * std::max(1.0, e.second_moment));
    ASSERT_LE(e.cov_trace, e.spectral_2x * (1 + 1e-12));
    ASSERT_GE(e.cov_trace, 0.0);
  }
}

TEST(Variants, NamesRoundTrip) {
  for (auto v : {EmeVariant::kMeanDist, EmeVariant::kSecondMoment, EmeVariant::kSqrtSecondMoment,
                 EmeVariant::kSpectralBound})
    EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_FALSE(parse_variant("bogus").has_value());
}

TEST(StabilityScore, Values) {
  EXPECT_EQ(stability_score(0.0), 1.0);
  EXPECT_NEAR(stability_score(std::log(2.0)), 0.5, 1e-15);
  EXPECT_NEAR(stability_score(kMaxEta), 1.02e-4, 0.01e-4);
  EXPECT_NEAR(kMaxEta, 9.19, 0.01);
  EXPECT_THROW(stability_score(-0.1), DomainError);
  EXPECT_THROW(stability_score(std::nan("")), DomainError);
}

TEST(Estimate, BetaOneHasNoSpread) {
  const ImageGray img = crossing(60, 60, 30.3, 29.8, 1.2);
  EstimateOptions opt;
  opt.beta = BetaConfig{1.0, 6.0};
  opt.samples = 16;
  const auto e = estimate(img, Point2(30, 30), opt);
  ASSERT_TRUE(e.has_value());
  EXPECT_EQ(e->m_failed, 0);
  EXPECT_NEAR(e->cov_trace, 0.0, 1e-20);
  EXPECT_NEAR(e->mean_dist * e->mean_dist, e->second_moment, 1e-12);
}

TEST(Estimate, FlatRegionSaturates) {
  const ImageGray img(60, 60, 0.5);
  EstimateOptions opt;
  opt.samples = 32;
  const auto e = estimate(img, Point2(30, 30), opt);
  ASSERT_TRUE(e.has_value());
  EXPECT_EQ(e->m_failed, 32);
  EXPECT_DOUBLE_EQ(e->mean_dist, kFailureDistance);
  EXPECT_DOUBLE_EQ(bound_value(*e, EmeVariant::kSqrtSecondMoment), kFailureDistance);
}

TEST(Estimate, CrossingIsStableAndDeterministic) {
  const ImageGray img = crossing(80, 80, 40, 40, 0.5);
  EstimateOptions opt;
  opt.seed = 17;
  auto d = sample_distances(img, Point2(40, 40), opt);
  EXPECT_LT(stats::median(d), 0.5);
  const auto a = estimate(img, Point2(40, 40), opt);
  const auto b = estimate(img, Point2(40, 40), opt);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->mean_dist, b->mean_dist);
  EXPECT_EQ(a->second_moment, b->second_moment);
  EXPECT_LT(a->mean_dist, 2.0);
  EXPECT_LT(a->m_failed, 16);
  opt.seed = 18;
  const auto c = estimate(img, Point2(40, 40), opt);
  EXPECT_NE(a->second_moment, c->second_moment);
}

TEST(Estimate, BoundarySkip) {
  const ImageGray img = crossing(60, 60, 30, 30);
  EstimateOptions opt;
  const double margin = estimate_margin(opt);
  EXPECT_FALSE(estimate(img, Point2(margin - 0.5, 30), opt).has_value());
  EXPECT_TRUE(estimate(img, Point2(margin, 30), opt).has_value());
  EXPECT_FALSE(estimate(img, Point2(30, 59 - margin + 0.5), opt).has_value());
  opt.samples = 1;
  EXPECT_THROW(estimate(img, Point2(30, 30), opt), DomainError);
}

TEST(Estimate, SmallSampleAgreesWithLargeSample) {
  const ImageGray img = gaussian_blur(stabscore::testing::checkerboard(90, 90, 9.0, 0.5, 0.6), 0.7);
  EstimateOptions small, large;
  large.samples = 4096;
  int within = 0, total = 0;
  for (const Point2 k : {Point2(45.5, 45.5), Point2(36.5, 45.5), Point2(45.5, 36.5), Point2(54.5, 54.5)}) {
    const auto d = sample_distances(img, k, small);
    const double se = stats::stddev(d) / std::sqrt(static_cast<double>(d.size()));
    const auto e_small = estimate(img, k, small);
    const auto e_large = estimate(img, k, large);
    ASSERT_TRUE(e_small && e_large);
    EXPECT_NEAR(e_small->mean_dist, stats::mean(d), 1e-12);
    ++total;
    if (std::abs(e_small->mean_dist - e_large->mean_dist) <= 3 * se + 1e-12) ++within;
  }
  EXPECT_EQ(within, total);
}
