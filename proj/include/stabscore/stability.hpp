#pragma once

// Monte-Carlo beta-EME estimation, the bound family over it, and the stability score.

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stabscore/homography.hpp"
#include "stabscore/image.hpp"
#include "stabscore/rng.hpp"
#include "stabscore/shitomasi.hpp"

namespace stabscore {

/// Distance charged to a failed measurement: half the diagonal of a 13×13 patch. Also the
/// saturation value of beta-EME for structures whose measurements always fail.
inline const double kFailureDistance = kDefaultPatchSize * std::numbers::sqrt2 / 2.0;
inline const double kMaxEta = kFailureDistance;
inline constexpr int kDefaultSamples = 128;

/// Summary of m synthetic re-detections of one keypoint. Distances and covariances are
/// in pixels / pixels²; covariance statistics use only the refined samples.
struct BetaEmeEstimate {
  double mean_dist = 0.0;              ///< mean of d_j, failures counted at d_fail
  double second_moment = 0.0;          ///< mean of d_j², failures counted at d_fail²
  double cov_trace = 0.0;              ///< tr Σ̂, population covariance of refined projections
  double spectral_2x = 0.0;            ///< 2·‖Σ̂‖₂
  double delta_sq = 0.0;               ///< δ̂ᵀδ̂, δ̂ = k − mean refined projection
  double refined_second_moment = 0.0;  ///< mean of d_j² over refined samples only
  int m_total = 0;
  int m_failed = 0;

  int m_refined() const { return m_total - m_failed; }
};

/// Builds an estimate from refined projection offsets (projection − k) plus a failure count.
inline BetaEmeEstimate summarize(std::span<const Point2> offsets, int failures, double d_fail) {
  if (failures < 0) throw DomainError("failure count must be >= 0");
  if (!(d_fail >= 0.0) || !std::isfinite(d_fail)) throw DomainError("d_fail must be finite and >= 0");
  BetaEmeEstimate e;
  e.m_failed = failures;
  e.m_total = static_cast<int>(offsets.size()) + failures;
  if (e.m_total == 0) throw DomainError("estimate needs at least one sample");
  double sum_d = 0.0, sum_d2 = 0.0;
  Point2 mean = Point2::Zero();
  for (const Point2& p : offsets) {
    const double d2 = p.squaredNorm();
    sum_d += std::sqrt(d2);
    sum_d2 += d2;
    mean += p;
  }
  if (!offsets.empty()) {
    const double r = static_cast<double>(offsets.size());
    mean /= r;
    double cxx = 0.0, cxy = 0.0, cyy = 0.0;
    for (const Point2& p : offsets) {
      const Point2 c = p - mean;
      cxx += c.x() * c.x();
      cxy += c.x() * c.y();
      cyy += c.y() * c.y();
    }
    cxx /= r, cxy /= r, cyy /= r;
    e.cov_trace = cxx + cyy;
    const double half_diff = 0.5 * (cxx - cyy);
    e.spectral_2x = 2.0 * (0.5 * (cxx + cyy) + std::sqrt(half_diff * half_diff + cxy * cxy));
    e.delta_sq = mean.squaredNorm();
    e.refined_second_moment = sum_d2 / r;
  }
  const double m = e.m_total;
  e.mean_dist = (sum_d + failures * d_fail) / m;
  e.second_moment = (sum_d2 + failures * d_fail * d_fail) / m;
  return e;
}

enum class EmeVariant { kMeanDist, kSecondMoment, kSqrtSecondMoment, kSpectralBound };

inline std::string_view to_string(EmeVariant v) {
  switch (v) {
    case EmeVariant::kMeanDist: return "mean-dist";
    case EmeVariant::kSecondMoment: return "second-moment";
    case EmeVariant::kSqrtSecondMoment: return "sqrt-second-moment";
    case EmeVariant::kSpectralBound: return "spectral-bound";
  }
  return "unknown";
}

inline std::optional<EmeVariant> parse_variant(std::string_view name) {
  for (auto v : {EmeVariant::kMeanDist, EmeVariant::kSecondMoment, EmeVariant::kSqrtSecondMoment,
                 EmeVariant::kSpectralBound})
    if (to_string(v) == name) return v;
  return std::nullopt;
}

inline double bound_value(const BetaEmeEstimate& e, EmeVariant v) {
  switch (v) {
    case EmeVariant::kMeanDist: return e.mean_dist;
    case EmeVariant::kSecondMoment: return e.second_moment;
    case EmeVariant::kSqrtSecondMoment: return std::sqrt(e.second_moment);
    case EmeVariant::kSpectralBound: return e.spectral_2x;
  }
  return e.mean_dist;
}

/// e^(−eta): 1 at eta = 0, strictly decreasing.
inline double stability_score(double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw DomainError("stability_score: eta must be finite and >= 0");
  return std::exp(-eta);
}

struct EstimateOptions {
  BetaConfig beta;
  int samples = kDefaultSamples;
  double d_fail = kFailureDistance;
  int patch_size = kDefaultPatchSize;
  std::uint64_t seed = 0;
};

/// Pixels that must stay inside the image around a keypoint so every warped sample has support.
inline double estimate_margin(const EstimateOptions& opt) {
  return std::max(opt.beta.half_extent, static_cast<double>(opt.patch_size / 2)) + opt.beta.max_displacement() +
         2.0;
}

inline bool estimate_fits(const ImageGray& img, const Point2& k, const EstimateOptions& opt) {
  const double margin = estimate_margin(opt);
  return k.x() - margin >= 0.0 && k.y() - margin >= 0.0 && k.x() + margin <= img.width() - 1 &&
         k.y() + margin <= img.height() - 1;
}

/// One synthetic re-detection: sample `index` of the keypoint's stream. Returns the projection
/// offset from k, or nullopt if the measurement failed.
inline std::optional<Point2> sample_projection(const ImageGray& img, const Point2& k, const EstimateOptions& opt,
                                               std::uint32_t index) {
  Stream stream(opt.seed, keypoint_stream_id(k.x(), k.y()), index);
  const Homography h = generate(stream, opt.beta);
  const WarpedPatch wp = warp_patch(img, PatchSpec{k, opt.patch_size}, h);
  const MeasurementOutcome outcome = measure(wp.patch);
  if (!outcome) return std::nullopt;
  const double r = opt.patch_size / 2;
  try {
    return project(h, outcome.point() - Point2(r, r));
  } catch (const GeometryError&) {
    return std::nullopt;
  }
}

/// Monte-Carlo beta-EME of keypoint k. Returns nullopt (boundary skip) when the keypoint is
/// too close to the image border for the warped patches to have full support.
inline std::optional<BetaEmeEstimate> estimate(const ImageGray& img, const Point2& k, const EstimateOptions& opt) {
  opt.beta.validate();
  if (opt.samples < 2) throw DomainError("estimate needs at least 2 samples");
  if (!estimate_fits(img, k, opt)) return std::nullopt;
  std::vector<Point2> offsets;
  offsets.reserve(opt.samples);
  int failures = 0;
  for (int j = 0; j < opt.samples; ++j) {
    if (auto p = sample_projection(img, k, opt, static_cast<std::uint32_t>(j)))
      offsets.push_back(*p);
    else
      ++failures;
  }
  return summarize(offsets, failures, opt.d_fail);
}

/// Distances d_j of every sample, failures reported as d_fail (for standard errors).
inline std::vector<double> sample_distances(const ImageGray& img, const Point2& k, const EstimateOptions& opt) {
  std::vector<double> d(opt.samples);
  for (int j = 0; j < opt.samples; ++j) {
    const auto p = sample_projection(img, k, opt, static_cast<std::uint32_t>(j));
    d[j] = p ? p->norm() : opt.d_fail;
  }
  return d;
}

}  // namespace stabscore
