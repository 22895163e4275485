#pragma once

// Two-view homography estimation: transfer-error log-likelihood, normalized DLT,
// damped Gauss-Newton (Levenberg-Marquardt) refinement, RANSAC and corner error.
//
// Convention: a correspondence pairs a measured point k in view 1 with a point k' in
// view 2, and a homography H maps view 2 onto view 1, k ≈ H·k'.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "stabscore/homography.hpp"
#include "stabscore/rng.hpp"

namespace stabscore {

struct Correspondence {
  Point2 k = Point2::Zero();        ///< view-1 measurement
  Point2 k_prime = Point2::Zero();  ///< view-2 point, treated as noise-free
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Identity();
};

namespace detail {

/// Whitening matrix W with ‖W·e‖² = eᵀΣ⁻¹e. Throws for non-positive-definite Σ.
inline Eigen::Matrix2d whitening(const Eigen::Matrix2d& sigma) {
  if (!sigma.allFinite() || std::abs(sigma(0, 1) - sigma(1, 0)) > 1e-12 * sigma.cwiseAbs().maxCoeff())
    throw DomainError("covariance must be finite and symmetric");
  Eigen::LLT<Eigen::Matrix2d> llt(sigma);
  if (llt.info() != Eigen::Success || sigma.determinant() <= 0.0) throw DomainError("covariance is singular");
  return llt.matrixL().solve(Eigen::Matrix2d::Identity());
}

}  // namespace detail

/// −½ Σ (k − H·k')ᵀ Σ⁻¹ (k − H·k').
inline double transfer_log_likelihood(std::span<const Correspondence> corrs, const Homography& h) {
  if (corrs.empty()) throw DomainError("transfer_log_likelihood: no correspondences");
  double sum = 0.0;
  for (const auto& c : corrs) {
    const Eigen::Vector2d e = c.k - project(h, c.k_prime);
    sum += (detail::whitening(c.sigma) * e).squaredNorm();
  }
  return -0.5 * sum;
}

namespace detail {

// Similarity taking the points to zero centroid and mean distance √2.
inline Eigen::Matrix3d hartley_normalizer(std::span<const Point2> pts) {
  Point2 c = Point2::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - c).norm();
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > 0.0)) throw GeometryError("dlt: coincident points");
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

}  // namespace detail

/// Hartley-normalized DLT for H with k ≈ H·k'. Exact for four noise-free correspondences.
inline Homography estimate_dlt(std::span<const Correspondence> corrs) {
  const std::size_t n = corrs.size();
  if (n < 4) throw GeometryError("dlt: need at least 4 correspondences");
  std::vector<Point2> src(n), dst(n);
  for (std::size_t i = 0; i < n; ++i) src[i] = corrs[i].k_prime, dst[i] = corrs[i].k;
  if (n == 4) {
    std::array<Point2, 4> s4{src[0], src[1], src[2], src[3]}, d4{dst[0], dst[1], dst[2], dst[3]};
    if (detail::has_collinear_triple(s4) || detail::has_collinear_triple(d4))
      throw GeometryError("dlt: degenerate minimal configuration");
  }
  const Eigen::Matrix3d ts = detail::hartley_normalizer(src);
  const Eigen::Matrix3d td = detail::hartley_normalizer(dst);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d p = ts * Eigen::Vector3d(src[i].x(), src[i].y(), 1.0);
    const Eigen::Vector3d q = td * Eigen::Vector3d(dst[i].x(), dst[i].y(), 1.0);
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(), q.y();
    a.row(r + 1) << p.x(), p.y(), 1, 0, 0, 0, -q.x() * p.x(), -q.x() * p.y(), -q.x();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv.size() >= 8 && sv(7) <= 1e-10 * sv(0)) throw GeometryError("dlt: degenerate configuration");
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  return Homography(td.inverse() * hn * ts);
}

struct RefineResult {
  Homography h;
  double objective = 0.0;          ///< log-likelihood at h
  double initial_objective = 0.0;  ///< log-likelihood at the input
  int iterations = 0;
  bool failed = false;  ///< objective became non-finite; h is the input
};

inline constexpr int kRefineMaxIterations = 100;
inline constexpr double kRefineRelativeTolerance = 1e-10;

/// Maximizes the transfer log-likelihood over the 8 free entries of H (h33 fixed to 1) with
/// Levenberg-Marquardt damping: λ starts at 1e-3, ×10 on rejection, ÷10 on acceptance.
/// Only improving steps are accepted, so the returned objective is never below the input's.
inline RefineResult refine(const Homography& h0, std::span<const Correspondence> corrs) {
  if (corrs.empty()) throw DomainError("refine: no correspondences");
  std::vector<Eigen::Matrix2d> w(corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i) w[i] = detail::whitening(corrs[i].sigma);

  using Vec8 = Eigen::Matrix<double, 8, 1>;
  using Mat8 = Eigen::Matrix<double, 8, 8>;
  auto to_params = [](const Eigen::Matrix3d& m) {
    Vec8 p;
    p << m(0, 0), m(0, 1), m(0, 2), m(1, 0), m(1, 1), m(1, 2), m(2, 0), m(2, 1);
    return p;
  };
  auto cost_of = [&](const Vec8& p) {
    double sum = 0.0;
    for (std::size_t i = 0; i < corrs.size(); ++i) {
      const Point2& x = corrs[i].k_prime;
      const double u = p(0) * x.x() + p(1) * x.y() + p(2);
      const double v = p(3) * x.x() + p(4) * x.y() + p(5);
      const double d = p(6) * x.x() + p(7) * x.y() + 1.0;
      if (d == 0.0) return std::numeric_limits<double>::infinity();
      const Eigen::Vector2d e = corrs[i].k - Eigen::Vector2d(u / d, v / d);
      sum += (w[i] * e).squaredNorm();
    }
    return sum;
  };

  RefineResult res{h0, 0.0, 0.0, 0, false};
  const double objective0 = transfer_log_likelihood(corrs, h0);
  res.objective = res.initial_objective = objective0;
  if (h0.matrix()(2, 2) == 0.0) {
    res.failed = true;
    return res;
  }
  Vec8 p = to_params(h0.unit_h33());
  double cost = cost_of(p);
  if (!std::isfinite(cost)) {
    res.failed = true;
    return res;
  }
  double lambda = 1e-3;
  for (int it = 0; it < kRefineMaxIterations && cost > 0.0; ++it) {
    res.iterations = it + 1;
    Mat8 jtj = Mat8::Zero();
    Vec8 jtr = Vec8::Zero();
    for (std::size_t i = 0; i < corrs.size(); ++i) {
      const Point2& x = corrs[i].k_prime;
      const double u = p(0) * x.x() + p(1) * x.y() + p(2);
      const double v = p(3) * x.x() + p(4) * x.y() + p(5);
      const double d = p(6) * x.x() + p(7) * x.y() + 1.0;
      Eigen::Matrix<double, 2, 8> dp = Eigen::Matrix<double, 2, 8>::Zero();
      dp(0, 0) = x.x() / d, dp(0, 1) = x.y() / d, dp(0, 2) = 1.0 / d;
      dp(1, 3) = x.x() / d, dp(1, 4) = x.y() / d, dp(1, 5) = 1.0 / d;
      dp(0, 6) = -u * x.x() / (d * d), dp(0, 7) = -u * x.y() / (d * d);
      dp(1, 6) = -v * x.x() / (d * d), dp(1, 7) = -v * x.y() / (d * d);
      const Eigen::Matrix<double, 2, 8> j = -(w[i] * dp);
      const Eigen::Vector2d r = w[i] * (corrs[i].k - Eigen::Vector2d(u / d, v / d));
      jtj += j.transpose() * j;
      jtr += j.transpose() * r;
    }
    bool accepted = false;
    while (!accepted && lambda < 1e16) {
      Mat8 a = jtj;
      a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
      const Vec8 step = a.ldlt().solve(-jtr);
      const Vec8 candidate = p + step;
      const double c = step.allFinite() ? cost_of(candidate) : std::numeric_limits<double>::quiet_NaN();
      if (std::isfinite(c) && c < cost) {
        const double improvement = (cost - c) / cost;
        p = candidate;
        cost = c;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (improvement < kRefineRelativeTolerance) it = kRefineMaxIterations;
      } else {
        lambda *= 10.0;
      }
    }
    if (!accepted) break;
  }
  Eigen::Matrix3d m;
  m << p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7), 1.0;
  try {
    const Homography refined(m);
    const double objective = transfer_log_likelihood(corrs, refined);
    if (!std::isfinite(objective)) {
      res.failed = true;
      return res;
    }
    if (objective >= objective0) {
      res.h = refined;
      res.objective = objective;
    }
  } catch (const GeometryError&) {
    res.failed = true;
  }
  return res;
}

struct RansacOptions {
  double threshold = 3.0;  ///< inlier distance in pixels
  double confidence = 0.9999;
  int max_iterations = 200000;
  std::uint64_t seed = 0;
};

struct RansacResult {
  std::optional<Homography> h;
  std::vector<bool> inliers;
  int num_inliers = 0;
  int iterations = 0;

  bool success() const { return h.has_value(); }
};

namespace detail {

inline int count_inliers(std::span<const Correspondence> corrs, const Homography& h, double threshold,
                         std::vector<bool>* mask) {
  int count = 0;
  if (mask) mask->assign(corrs.size(), false);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    bool in = false;
    try {
      in = (corrs[i].k - project(h, corrs[i].k_prime)).norm() <= threshold;
    } catch (const GeometryError&) {
    }
    if (in) {
      ++count;
      if (mask) (*mask)[i] = true;
    }
  }
  return count;
}

inline int ransac_iteration_bound(double inlier_ratio, double confidence, int max_iterations) {
  if (inlier_ratio >= 1.0) return 1;
  const double p_good = std::pow(inlier_ratio, 4);
  if (p_good <= 0.0) return max_iterations;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - p_good);
  if (!std::isfinite(n) || n > max_iterations) return max_iterations;
  return std::max(1, static_cast<int>(std::ceil(n)));
}

}  // namespace detail

/// 4-point hypothesize-and-verify with an adaptive iteration bound, then DLT + refine on the
/// consensus set. Sample t is drawn from its own counter stream, and ties in inlier count
/// keep the earlier hypothesis.
inline RansacResult ransac(std::span<const Correspondence> corrs, const RansacOptions& opt) {
  RansacResult res;
  res.inliers.assign(corrs.size(), false);
  const auto n = static_cast<std::uint32_t>(corrs.size());
  if (n < 4) return res;
  if (!(opt.threshold > 0.0) || !(opt.confidence > 0.0 && opt.confidence < 1.0) || opt.max_iterations < 1)
    throw DomainError("ransac: invalid options");

  std::optional<Homography> best;
  int best_count = 0;
  int bound = opt.max_iterations;
  const std::uint64_t stream_id = purpose_stream_id(StreamPurpose::kRansac, 0);
  int t = 0;
  for (; t < bound; ++t) {
    Stream stream(opt.seed, stream_id, static_cast<std::uint32_t>(t));
    std::array<std::uint32_t, 4> idx{};
    for (int i = 0; i < 4; ++i) {
      bool fresh;
      do {
        idx[i] = stream.below(n);
        fresh = std::find(idx.begin(), idx.begin() + i, idx[i]) == idx.begin() + i;
      } while (!fresh);
    }
    std::array<Point2, 4> src, dst;
    for (int i = 0; i < 4; ++i) src[i] = corrs[idx[i]].k_prime, dst[i] = corrs[idx[i]].k;
    std::optional<Homography> hyp;
    try {
      hyp = solve_4pt(src, dst);
    } catch (const GeometryError&) {
      continue;
    }
    const int count = detail::count_inliers(corrs, *hyp, opt.threshold, nullptr);
    if (count > best_count) {
      best_count = count;
      best = hyp;
      bound = std::min(bound, detail::ransac_iteration_bound(static_cast<double>(count) / n, opt.confidence,
                                                             opt.max_iterations));
    }
  }
  res.iterations = t;
  if (!best || best_count < 4) return res;

  std::vector<bool> mask;
  detail::count_inliers(corrs, *best, opt.threshold, &mask);
  Homography model = *best;
  for (int round = 0; round < 2; ++round) {
    std::vector<Correspondence> in;
    for (std::size_t i = 0; i < corrs.size(); ++i)
      if (mask[i]) in.push_back(corrs[i]);
    if (in.size() < 4) break;
    try {
      const Homography fitted = refine(estimate_dlt(in), in).h;
      std::vector<bool> new_mask;
      const int count = detail::count_inliers(corrs, fitted, opt.threshold, &new_mask);
      if (count < 4 || count < best_count) break;
      model = fitted;
      best_count = count;
      if (new_mask == mask) break;
      mask = std::move(new_mask);
    } catch (const GeometryError&) {
      break;
    }
  }
  res.num_inliers = detail::count_inliers(corrs, model, opt.threshold, &res.inliers);
  res.h = model;
  return res;
}

/// Mean distance between the image corners (0,0), (w,0), (w,h), (0,h) mapped by both homographies.
inline double corner_error(const Homography& h_est, const Homography& h_gt, int width, int height) {
  const std::array<Point2, 4> corners{Point2(0, 0), Point2(width, 0), Point2(width, height), Point2(0, height)};
  double sum = 0.0;
  for (const auto& c : corners) sum += (project(h_est, c) - project(h_gt, c)).norm();
  return sum / 4.0;
}

}  // namespace stabscore
