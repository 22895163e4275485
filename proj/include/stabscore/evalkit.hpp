#pragma once

// Evaluation: repeatability, NCC matching, matching accuracy, and the desk-scale
// experiments built on them (EME vs. homography accuracy, beta sweep, detector comparison).

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stabscore/detector.hpp"
#include "stabscore/geometry.hpp"
#include "stabscore/image_io.hpp"
#include "stabscore/parallel.hpp"
#include "stabscore/scene.hpp"
#include "stabscore/stats.hpp"

namespace stabscore {

struct Extent {
  int width = 0;
  int height = 0;

  bool contains(const Point2& p) const {
    return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width - 1 && p.y() <= height - 1;
  }
};

inline std::vector<Point2> positions(std::span<const Keypoint> kps) {
  std::vector<Point2> out;
  out.reserve(kps.size());
  for (const auto& k : kps) out.push_back(k.pos);
  return out;
}

/// Greedy one-to-one assignment: all pairs with ‖H·a − b‖ <= threshold, taken in order of
/// increasing distance (ties by indices). Returns (index in a, index in b) pairs.
inline std::vector<std::pair<std::size_t, std::size_t>> greedy_assignment(std::span<const Point2> a,
                                                                          std::span<const Point2> b,
                                                                          const Homography& h_ab, double threshold) {
  struct Pair {
    double d;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  std::vector<Point2> proj(a.size());
  std::vector<bool> valid(a.size(), true);
  for (std::size_t i = 0; i < a.size(); ++i) {
    try {
      proj[i] = project(h_ab, a[i]);
    } catch (const GeometryError&) {
      valid[i] = false;
    }
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!valid[i]) continue;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = (proj[i] - b[j]).norm();
      if (d <= threshold) pairs.push_back({d, i, j});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    if (x.d != y.d) return x.d < y.d;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& p : pairs) {
    if (used_a[p.i] || used_b[p.j]) continue;
    used_a[p.i] = used_b[p.j] = true;
    out.emplace_back(p.i, p.j);
  }
  return out;
}

/// Keypoints of `a` whose projection by H lands inside `extent_other`.
inline std::vector<Point2> visible(std::span<const Point2> a, const Homography& h, const Extent& extent_other) {
  std::vector<Point2> out;
  for (const auto& p : a) {
    try {
      if (extent_other.contains(project(h, p))) out.push_back(p);
    } catch (const GeometryError&) {
    }
  }
  return out;
}

/// One-to-one repeated keypoints within `threshold` px, divided by min(|A_vis|, |B_vis|).
/// NaN when either visible set is empty.
inline double repeatability(std::span<const Point2> a, std::span<const Point2> b, const Homography& h_ab,
                            double threshold, const Extent& extent_a, const Extent& extent_b) {
  if (!(threshold > 0.0)) throw DomainError("repeatability: threshold must be > 0");
  const auto va = visible(a, h_ab, extent_b);
  const auto vb = visible(b, h_ab.inverse(), extent_a);
  if (va.empty() || vb.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto matched = greedy_assignment(va, vb, h_ab, threshold);
  return static_cast<double>(matched.size()) / static_cast<double>(std::min(va.size(), vb.size()));
}

struct NccOptions {
  int window = 11;
  double ratio = 0.95;
};

struct PointMatch {
  std::size_t ia = 0;
  std::size_t ib = 0;
  Point2 a = Point2::Zero();
  Point2 b = Point2::Zero();
  double ncc = 0.0;
};

namespace detail {

// Zero-mean, unit-norm window around p, or empty if out of image or textureless.
inline std::vector<double> ncc_descriptor(const ImageGray& img, const Point2& p, int window) {
  const int r = window / 2;
  if (p.x() - r < 0.0 || p.y() - r < 0.0 || p.x() + r > img.width() - 1 || p.y() + r > img.height() - 1) return {};
  std::vector<double> d(static_cast<std::size_t>(window) * window);
  double mean = 0.0;
  for (int v = -r; v <= r; ++v)
    for (int u = -r; u <= r; ++u) {
      const double s = bilinear_unchecked(img, p.x() + u, p.y() + v);
      d[static_cast<std::size_t>(v + r) * window + (u + r)] = s;
      mean += s;
    }
  mean /= static_cast<double>(d.size());
  double norm = 0.0;
  for (double& s : d) {
    s -= mean;
    norm += s * s;
  }
  norm = std::sqrt(norm);
  if (norm < 1e-9 * std::sqrt(static_cast<double>(d.size()))) return {};
  for (double& s : d) s /= norm;
  return d;
}

}  // namespace detail

/// Zero-mean NCC over window² patches; mutual nearest neighbours that also pass the ratio test
/// (1 − ncc_best) < ratio·(1 − ncc_second). Keypoints without a valid window are skipped.
inline std::vector<PointMatch> match_ncc(const ImageGray& img_a, std::span<const Point2> kps_a, const ImageGray& img_b,
                                         std::span<const Point2> kps_b, const NccOptions& opt = {}) {
  if (opt.window < 7 || opt.window % 2 == 0) throw DomainError("match_ncc: window must be odd and >= 7");
  std::vector<std::vector<double>> da(kps_a.size()), db(kps_b.size());
  for (std::size_t i = 0; i < kps_a.size(); ++i) da[i] = detail::ncc_descriptor(img_a, kps_a[i], opt.window);
  for (std::size_t j = 0; j < kps_b.size(); ++j) db[j] = detail::ncc_descriptor(img_b, kps_b[j], opt.window);

  const double kNone = -std::numeric_limits<double>::infinity();
  std::vector<double> best_a(kps_a.size(), kNone), second_a(kps_a.size(), kNone);
  std::vector<std::size_t> arg_a(kps_a.size(), 0);
  std::vector<double> best_b(kps_b.size(), kNone);
  std::vector<std::size_t> arg_b(kps_b.size(), 0);
  for (std::size_t i = 0; i < da.size(); ++i) {
    if (da[i].empty()) continue;
    for (std::size_t j = 0; j < db.size(); ++j) {
      if (db[j].empty()) continue;
      double s = 0.0;
      for (std::size_t t = 0; t < da[i].size(); ++t) s += da[i][t] * db[j][t];
      if (s > best_a[i]) {
        second_a[i] = best_a[i];
        best_a[i] = s;
        arg_a[i] = j;
      } else if (s > second_a[i]) {
        second_a[i] = s;
      }
      if (s > best_b[j]) {
        best_b[j] = s;
        arg_b[j] = i;
      }
    }
  }
  std::vector<PointMatch> out;
  for (std::size_t i = 0; i < da.size(); ++i) {
    if (best_a[i] == kNone) continue;
    const std::size_t j = arg_a[i];
    if (arg_b[j] != i) continue;
    const double second = second_a[i] == kNone ? -1.0 : second_a[i];
    if (!((1.0 - best_a[i]) < opt.ratio * (1.0 - second))) continue;
    out.push_back({i, j, kps_a[i], kps_b[j], best_a[i]});
  }
  return out;
}

/// Fraction of matches with ‖H·a − b‖ <= threshold; NaN for no matches.
inline double mma(std::span<const PointMatch> matches, const Homography& h_ab, double threshold) {
  if (matches.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t good = 0;
  for (const auto& m : matches) {
    try {
      if ((project(h_ab, m.a) - m.b).norm() <= threshold) ++good;
    } catch (const GeometryError&) {
    }
  }
  return static_cast<double>(good) / static_cast<double>(matches.size());
}

/// Correspondences for estimating H_ab: view 1 is image b (k = b), view 2 is image a (k' = a).
inline std::vector<Correspondence> to_correspondences(std::span<const PointMatch> matches) {
  std::vector<Correspondence> out;
  out.reserve(matches.size());
  for (const auto& m : matches) out.push_back({m.b, m.a, Eigen::Matrix2d::Identity()});
  return out;
}

struct ImagePairTask {
  ImageGray a;
  ImageGray b;
  Homography h_ab;  ///< maps a → b
  std::string name;
};

/// Loads `dir/<name>/{a.png,b.png,H_ab.txt}` for every subdirectory, sorted by name.
inline std::vector<ImagePairTask> load_pairs(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError(dir + ": pairs directory not found");
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) subdirs.push_back(e.path());
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<ImagePairTask> tasks;
  for (const auto& d : subdirs) {
    auto pick = [&](const char* stem) {
      for (const char* ext : {".png", ".pgm"}) {
        const fs::path p = d / (std::string(stem) + ext);
        if (fs::exists(p)) return p.string();
      }
      throw IoError((d / stem).string() + ".png: missing image");
    };
    tasks.push_back({load_image(pick("a")), load_image(pick("b")), load_homography((d / "H_ab.txt").string()),
                     d.filename().string()});
  }
  return tasks;
}

inline void save_pair(const std::string& dir, const ImagePairTask& task) {
  namespace fs = std::filesystem;
  const fs::path d = fs::path(dir) / task.name;
  fs::create_directories(d);
  save_png((d / "a.png").string(), task.a, 16);
  save_png((d / "b.png").string(), task.b, 16);
  save_homography((d / "H_ab.txt").string(), task.h_ab);
}

/// Warps `src` by a generated whole-image homography; both views get independent noise.
inline ImagePairTask make_synthetic_pair(const ImageGray& src, double beta_pair, double noise_sigma,
                                         std::uint64_t seed, std::uint64_t index, std::string name) {
  Stream stream(seed, purpose_stream_id(StreamPurpose::kTrialHomography, index));
  const Homography h = generate_image_homography(stream, beta_pair, src.width(), src.height());
  const ImageGray warped = warp_image(src, h, src.width(), src.height());
  const std::uint64_t noise_id = purpose_stream_id(StreamPurpose::kNoise, index);
  return {add_noise(src, noise_sigma, seed, combine_ids(noise_id, 0)),
          add_noise(warped, noise_sigma, seed, combine_ids(noise_id, 1)), h, std::move(name)};
}

struct TrialRecord {
  int trial = 0;
  std::string task;
  double beta = 0.0;
  std::string variant;
  double corner_error = std::numeric_limits<double>::quiet_NaN();
  double repeatability = std::numeric_limits<double>::quiet_NaN();
  double mma = std::numeric_limits<double>::quiet_NaN();
  int inliers = 0;
  int correspondences = 0;
};

struct Aggregate {
  double beta = 0.0;
  std::string variant;
  int count = 0;
  double corner_error_median = 0.0, corner_error_mean = 0.0, corner_error_iqr = 0.0;
  double repeatability_median = 0.0, repeatability_mean = 0.0, repeatability_iqr = 0.0;
  double mma_median = 0.0, mma_mean = 0.0, mma_iqr = 0.0;
};

struct ExperimentReport {
  std::string experiment;
  std::vector<TrialRecord> records;
  std::vector<Aggregate> aggregates;
  std::vector<std::pair<std::string, double>> summary;
  int skipped = 0;

  double summary_value(const std::string& key) const {
    for (const auto& [k, v] : summary)
      if (k == key) return v;
    return std::numeric_limits<double>::quiet_NaN();
  }
};

/// Per-(beta, variant) medians/means/IQRs over records; NaN entries are ignored, and a failed
/// estimate (infinite corner error) counts in the median but not in the mean.
inline std::vector<Aggregate> aggregate(std::span<const TrialRecord> records) {
  std::map<std::pair<double, std::string>, std::vector<const TrialRecord*>> groups;
  for (const auto& r : records) groups[{r.beta, r.variant}].push_back(&r);
  std::vector<Aggregate> out;
  for (const auto& [key, recs] : groups) {
    Aggregate a;
    a.beta = key.first;
    a.variant = key.second;
    a.count = static_cast<int>(recs.size());
    auto collect = [&](auto member, bool finite_only) {
      std::vector<double> v;
      for (const auto* r : recs) {
        const double x = r->*member;
        if (std::isnan(x) || (finite_only && !std::isfinite(x))) continue;
        v.push_back(x);
      }
      return v;
    };
    auto fill = [&](auto member, double& med, double& mean, double& iqr) {
      const auto all = collect(member, false);
      const auto finite = collect(member, true);
      med = stats::median(all);
      iqr = stats::iqr(all);
      mean = stats::mean(finite);
    };
    fill(&TrialRecord::corner_error, a.corner_error_median, a.corner_error_mean, a.corner_error_iqr);
    fill(&TrialRecord::repeatability, a.repeatability_median, a.repeatability_mean, a.repeatability_iqr);
    fill(&TrialRecord::mma, a.mma_median, a.mma_mean, a.mma_iqr);
    out.push_back(a);
  }
  return out;
}

struct ExperimentOptions {
  DetectOptions detect;           ///< budget, beta, variant, samples, seed, threads
  double beta_pair = 2.828;       ///< difficulty of the generated evaluation pairs
  double noise_sigma = 0.005;     ///< per-view sensor noise for synthetic pairs
  double threshold = 3.0;         ///< px, for repeatability / MMA / verified correspondences
  NccOptions ncc;
  RansacOptions ransac;
};

namespace detail {

struct PipelineOutcome {
  double corner_error = std::numeric_limits<double>::infinity();
  double mma = std::numeric_limits<double>::quiet_NaN();
  int inliers = 0;
  int matches = 0;
};

inline PipelineOutcome match_and_estimate(const ImagePairTask& task, std::span<const Point2> a,
                                          std::span<const Point2> b, const ExperimentOptions& opt) {
  PipelineOutcome out;
  const auto matches = match_ncc(task.a, a, task.b, b, opt.ncc);
  out.matches = static_cast<int>(matches.size());
  out.mma = mma(matches, task.h_ab, opt.threshold);
  const auto corrs = to_correspondences(matches);
  const RansacResult rr = ransac(corrs, opt.ransac);
  out.inliers = rr.num_inliers;
  if (rr.success()) {
    try {
      out.corner_error = corner_error(*rr.h, task.h_ab, task.a.width(), task.a.height());
    } catch (const GeometryError&) {
    }
  }
  return out;
}

}  // namespace detail

/// For every beta: detect with stability scoring in both views of every task, then record
/// repeatability, MMA (NCC matching) and RANSAC corner error. Summary holds the Spearman
/// correlation between beta and mean repeatability.
inline ExperimentReport run_beta_sweep(std::span<const ImagePairTask> tasks, std::span<const double> betas,
                                       const ExperimentOptions& opt) {
  if (betas.empty()) throw DomainError("run_beta_sweep: empty beta grid");
  ExperimentReport rep;
  rep.experiment = "beta-sweep";
  const std::size_t jobs = tasks.size() * betas.size();
  std::vector<TrialRecord> recs(jobs);
  DetectOptions inner = opt.detect;
  inner.threads = 1;
  parallel_for(jobs, opt.detect.threads, [&](std::size_t job) {
    const auto& task = tasks[job / betas.size()];
    const double beta = betas[job % betas.size()];
    DetectOptions d = inner;
    d.beta.beta = beta;
    const auto ka = positions(detect(task.a, d).keypoints);
    const auto kb = positions(detect(task.b, d).keypoints);
    TrialRecord& r = recs[job];
    r.trial = static_cast<int>(job / betas.size());
    r.task = task.name;
    r.beta = beta;
    r.variant = std::string(to_string(d.variant));
    r.repeatability = repeatability(ka, kb, task.h_ab, opt.threshold, {task.a.width(), task.a.height()},
                                    {task.b.width(), task.b.height()});
    const auto pipe = detail::match_and_estimate(task, ka, kb, opt);
    r.mma = pipe.mma;
    r.corner_error = pipe.corner_error;
    r.inliers = pipe.inliers;
    r.correspondences = pipe.matches;
  });
  rep.records = std::move(recs);
  rep.aggregates = aggregate(rep.records);
  std::vector<double> bs, reps;
  for (const auto& a : rep.aggregates) bs.push_back(a.beta), reps.push_back(a.repeatability_mean);
  rep.summary.emplace_back("spearman_beta_repeatability", bs.size() >= 2 ? stats::spearman(bs, reps) : 0.0);
  return rep;
}

/// Same pairs, same budget: keypoints ranked by stability score vs. by raw Shi-Tomasi response,
/// each matched by NCC and fed to RANSAC + refine. Summary holds medians and a one-sided sign
/// test for "stability has lower corner error".
inline ExperimentReport run_detector_comparison(std::span<const ImagePairTask> tasks, const ExperimentOptions& opt) {
  ExperimentReport rep;
  rep.experiment = "detector-comparison";
  std::vector<TrialRecord> recs(2 * tasks.size());
  DetectOptions inner = opt.detect;
  inner.threads = 1;
  parallel_for(2 * tasks.size(), opt.detect.threads, [&](std::size_t job) {
    const auto& task = tasks[job / 2];
    const bool stable = job % 2 == 0;
    auto run = [&](const ImageGray& img) {
      return positions(stable ? detect(img, inner).keypoints : detect_shi_tomasi(img, inner).keypoints);
    };
    const auto ka = run(task.a), kb = run(task.b);
    TrialRecord& r = recs[job];
    r.trial = static_cast<int>(job / 2);
    r.task = task.name;
    r.beta = inner.beta.beta;
    r.variant = stable ? "stability" : "shi-tomasi";
    r.repeatability = repeatability(ka, kb, task.h_ab, opt.threshold, {task.a.width(), task.a.height()},
                                    {task.b.width(), task.b.height()});
    const auto pipe = detail::match_and_estimate(task, ka, kb, opt);
    r.mma = pipe.mma;
    r.corner_error = pipe.corner_error;
    r.inliers = pipe.inliers;
    r.correspondences = pipe.matches;
  });
  rep.records = std::move(recs);
  rep.aggregates = aggregate(rep.records);
  int wins = 0, losses = 0;
  std::vector<double> es, et;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const double s = rep.records[2 * t].corner_error, b = rep.records[2 * t + 1].corner_error;
    es.push_back(s), et.push_back(b);
    if (s < b) ++wins;
    if (s > b) ++losses;
  }
  rep.summary = {{"median_corner_error_stability", stats::median(es)},
                 {"median_corner_error_shi_tomasi", stats::median(et)},
                 {"wins", wins},
                 {"losses", losses},
                 {"sign_test_p", stats::sign_test_p(wins, losses)}};
  return rep;
}

/// Per trial: a random H_gt warps a source image; stability-scored detections in both views are
/// paired by ground truth (one-to-one within the threshold); the lowest and highest quartiles of
/// summed mean distance each give an H by DLT + refine, and their corner errors are recorded as
/// variants "low-eta" / "high-eta". Trial t uses source t mod |sources|.
inline ExperimentReport run_eme_vs_accuracy(std::span<const ImageGray> sources, int trials,
                                            const ExperimentOptions& opt) {
  if (sources.empty()) throw DomainError("run_eme_vs_accuracy: no source images");
  if (trials < 1) throw DomainError("run_eme_vs_accuracy: trials must be >= 1");
  ExperimentReport rep;
  rep.experiment = "eme-accuracy";
  DetectOptions inner = opt.detect;
  inner.threads = 1;
  const std::uint64_t seed = opt.detect.seed;

  std::vector<std::vector<Keypoint>> det_src(sources.size());
  parallel_for(sources.size(), opt.detect.threads, [&](std::size_t i) {
    det_src[i] = detect(add_noise(sources[i], opt.noise_sigma, seed, combine_ids(i, 0xA)), inner).keypoints;
  });

  struct Trial {
    bool ok = false;
    TrialRecord low, high;
  };
  std::vector<Trial> out(static_cast<std::size_t>(trials));
  parallel_for(out.size(), opt.detect.threads, [&](std::size_t t) {
    const std::size_t si = t % sources.size();
    const ImageGray& src = sources[si];
    const auto& ka = det_src[si];
    Stream stream(seed, purpose_stream_id(StreamPurpose::kTrialHomography, t));
    const Homography h = generate_image_homography(stream, opt.beta_pair, src.width(), src.height());
    const ImageGray b = add_noise(warp_image(src, h, src.width(), src.height()), opt.noise_sigma, seed,
                                  purpose_stream_id(StreamPurpose::kNoise, t));
    const auto kb = detect(b, inner).keypoints;
    const auto pa = positions(ka), pb = positions(kb);
    const auto pairs = greedy_assignment(pa, pb, h, opt.threshold);
    struct Scored {
      double eta;
      Correspondence c;
    };
    std::vector<Scored> scored;
    for (const auto& [i, j] : pairs)
      scored.push_back({ka[i].eme->mean_dist + kb[j].eme->mean_dist, {pb[j], pa[i], Eigen::Matrix2d::Identity()}});
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& x, const Scored& y) { return x.eta < y.eta; });
    const std::size_t q = scored.size() / 4;
    if (q < 8) return;
    auto fit = [&](std::size_t from) {
      std::vector<Correspondence> set;
      for (std::size_t k = from; k < from + q; ++k) set.push_back(scored[k].c);
      try {
        const Homography est = refine(estimate_dlt(set), set).h;
        return corner_error(est, h, src.width(), src.height());
      } catch (const GeometryError&) {
        return std::numeric_limits<double>::infinity();
      }
    };
    Trial& tr = out[t];
    tr.ok = true;
    tr.low = {static_cast<int>(t), "source" + std::to_string(si), inner.beta.beta, "low-eta", fit(0),
              std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(), 0,
              static_cast<int>(q)};
    tr.high = tr.low;
    tr.high.variant = "high-eta";
    tr.high.corner_error = fit(scored.size() - q);
  });
  std::vector<double> lo, hi;
  int wins = 0, losses = 0;
  for (const auto& tr : out) {
    if (!tr.ok) {
      ++rep.skipped;
      continue;
    }
    rep.records.push_back(tr.low);
    rep.records.push_back(tr.high);
    lo.push_back(tr.low.corner_error);
    hi.push_back(tr.high.corner_error);
    if (tr.low.corner_error < tr.high.corner_error) ++wins;
    if (tr.low.corner_error > tr.high.corner_error) ++losses;
  }
  rep.aggregates = aggregate(rep.records);
  rep.summary = {{"median_corner_error_low_eta", stats::median(lo)},
                 {"median_corner_error_high_eta", stats::median(hi)},
                 {"wins", wins},
                 {"losses", losses},
                 {"sign_test_p", stats::sign_test_p(wins, losses)},
                 {"skipped", rep.skipped}};
  return rep;
}

}  // namespace stabscore
