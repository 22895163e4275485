#pragma once

// Keypoint detection ranked by stability score, ground-truth export for learning an
// approximation of beta-EME, and the supervision loss over such ground truth.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "stabscore/parallel.hpp"
#include "stabscore/stability.hpp"

namespace stabscore {

struct Keypoint {
  Point2 pos = Point2::Zero();
  double s = 0.0;  ///< Shi-Tomasi response at the candidate pixel
  std::optional<BetaEmeEstimate> eme;
  std::optional<double> eta;    ///< bound_value(eme, variant)
  std::optional<double> score;  ///< e^(−eta)
};

inline constexpr int kDefaultBudget = 2048;
inline constexpr int kOversample = 4;

struct DetectOptions {
  int n = kDefaultBudget;
  BetaConfig beta;
  EmeVariant variant = EmeVariant::kSqrtSecondMoment;
  int samples = kDefaultSamples;
  std::uint64_t seed = 0;
  int oversample = kOversample;
  int nms_radius = kImageNmsRadius;
  double threshold = kPatchResponseThreshold;
  int threads = 1;

  EstimateOptions estimate_options() const { return {beta, samples, kFailureDistance, kDefaultPatchSize, seed}; }
};

struct DetectResult {
  std::vector<Keypoint> keypoints;
  bool shortage = false;  ///< fewer than n keypoints survived
};

/// Shi-Tomasi NMS candidates far enough from the border for Monte-Carlo scoring, ordered by
/// response. Each sits at the refined subpixel maximum of the response, or on its pixel when
/// refinement fails.
inline std::vector<Keypoint> candidate_keypoints(const ImageGray& img, const DetectOptions& opt) {
  const int border = static_cast<int>(std::ceil(estimate_margin(opt.estimate_options()))) + 1;
  if (img.width() <= 2 * border || img.height() <= 2 * border || img.width() < 7 || img.height() < 7) return {};
  const ScoreMap score = response(img);
  std::vector<Keypoint> out;
  for (const auto& c : nms_candidates(score, opt.nms_radius, opt.threshold, border)) {
    const MeasurementOutcome r = refine(score, c);
    out.push_back({r ? r.point() : Point2(c.x, c.y), c.score, {}, {}, {}});
  }
  return out;
}

namespace detail {

inline bool keypoint_before(const Keypoint& a, const Keypoint& b) {
  const double sa = a.score.value_or(0.0), sb = b.score.value_or(0.0);
  if (sa != sb) return sa > sb;
  if (a.s != b.s) return a.s > b.s;
  if (a.pos.y() != b.pos.y()) return a.pos.y() < b.pos.y();
  return a.pos.x() < b.pos.x();
}

}  // namespace detail

/// Scores every keypoint in place with the Monte-Carlo estimate and the chosen bound.
/// Keypoints too close to the border are dropped.
inline std::vector<Keypoint> score_keypoints(const ImageGray& img, std::vector<Keypoint> kps,
                                             const DetectOptions& opt) {
  const EstimateOptions eo = opt.estimate_options();
  std::vector<std::optional<BetaEmeEstimate>> est(kps.size());
  parallel_for(kps.size(), opt.threads, [&](std::size_t i) { est[i] = estimate(img, kps[i].pos, eo); });
  std::vector<Keypoint> out;
  out.reserve(kps.size());
  for (std::size_t i = 0; i < kps.size(); ++i) {
    if (!est[i]) continue;
    Keypoint k = kps[i];
    k.eme = est[i];
    k.eta = bound_value(*est[i], opt.variant);
    k.score = stability_score(*k.eta);
    out.push_back(std::move(k));
  }
  return out;
}

/// Shi-Tomasi candidates → top oversample·n by response → beta-EME → e^(−bound) → ranked
/// by score, then response, then position; truncated to n.
inline DetectResult detect(const ImageGray& img, const DetectOptions& opt) {
  if (opt.n < 1) throw DomainError("detect: budget n must be >= 1");
  if (opt.oversample < 1) throw DomainError("detect: oversample must be >= 1");
  auto kps = candidate_keypoints(img, opt);
  const std::size_t pool = static_cast<std::size_t>(opt.n) * opt.oversample;
  if (kps.size() > pool) kps.resize(pool);
  kps = score_keypoints(img, std::move(kps), opt);
  std::sort(kps.begin(), kps.end(), detail::keypoint_before);
  DetectResult res;
  res.shortage = kps.size() < static_cast<std::size_t>(opt.n);
  if (!res.shortage) kps.resize(opt.n);
  res.keypoints = std::move(kps);
  return res;
}

/// Baseline ranking by raw Shi-Tomasi response over the same candidate pool (no scoring).
inline DetectResult detect_shi_tomasi(const ImageGray& img, const DetectOptions& opt) {
  if (opt.n < 1) throw DomainError("detect: budget n must be >= 1");
  DetectResult res;
  res.keypoints = candidate_keypoints(img, opt);
  if (res.keypoints.size() > static_cast<std::size_t>(opt.n)) res.keypoints.resize(opt.n);
  res.shortage = res.keypoints.size() < static_cast<std::size_t>(opt.n);
  return res;
}

struct Thresholds {
  double t_salient = 0.01;
  double t_noise = 1e-4;

  void validate() const {
    if (!(t_noise > 0.0) || !(t_salient > t_noise) || !std::isfinite(t_salient))
      throw DomainError("thresholds must satisfy 0 < t_noise < t_salient");
  }
};

enum class GtClass { kSalient, kNoise };

inline std::string_view to_string(GtClass c) { return c == GtClass::kSalient ? "salient" : "noise"; }

/// Salient iff s > t_salient, Noise iff s < t_noise, otherwise excluded.
inline std::optional<GtClass> classify(double s, const Thresholds& th) {
  if (s > th.t_salient) return GtClass::kSalient;
  if (s < th.t_noise) return GtClass::kNoise;
  return std::nullopt;
}

struct GroundTruthRecord {
  Point2 pos = Point2::Zero();
  double s = 0.0;
  double target_eta = 0.0;
  GtClass cls = GtClass::kSalient;
};

struct GroundTruthOptions {
  int n = kDefaultBudget;  ///< cap per class
  BetaConfig beta;
  Thresholds thresholds;
  int samples = kDefaultSamples;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// Salient candidates get the sqrt-second-moment bound of their estimate as target; noise
/// candidates get the saturation value without sampling; the rest are excluded. Output order:
/// salient by descending response, then noise by descending response.
inline std::vector<GroundTruthRecord> export_ground_truth(const ImageGray& img, const GroundTruthOptions& opt) {
  opt.thresholds.validate();
  if (opt.n < 1) throw DomainError("export_ground_truth: n must be >= 1");
  DetectOptions dopt;
  dopt.beta = opt.beta;
  dopt.samples = opt.samples;
  dopt.seed = opt.seed;
  dopt.threads = opt.threads;
  dopt.threshold = 0.0;
  dopt.variant = EmeVariant::kSqrtSecondMoment;
  std::vector<Keypoint> salient;
  std::vector<GroundTruthRecord> noise;
  for (auto& c : candidate_keypoints(img, dopt)) {
    const auto cls = classify(c.s, opt.thresholds);
    if (cls == GtClass::kSalient && salient.size() < static_cast<std::size_t>(opt.n))
      salient.push_back(std::move(c));
    else if (cls == GtClass::kNoise && noise.size() < static_cast<std::size_t>(opt.n))
      noise.push_back({c.pos, c.s, kMaxEta, GtClass::kNoise});
  }
  std::vector<GroundTruthRecord> out;
  for (const auto& k : score_keypoints(img, std::move(salient), dopt))
    out.push_back({k.pos, k.s, *k.eta, GtClass::kSalient});
  out.insert(out.end(), noise.begin(), noise.end());
  return out;
}

/// Mean squared error of predictions against the per-record targets.
inline double supervision_loss(std::span<const double> pred, std::span<const GroundTruthRecord> gt) {
  if (pred.size() != gt.size()) throw DomainError("supervision_loss: prediction/record length mismatch");
  if (gt.empty()) throw DomainError("supervision_loss: no records");
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double target = gt[i].cls == GtClass::kNoise ? kMaxEta : gt[i].target_eta;
    sum += (pred[i] - target) * (pred[i] - target);
  }
  return sum / static_cast<double>(gt.size());
}

}  // namespace stabscore
