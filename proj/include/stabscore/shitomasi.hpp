#pragma once

// Shi-Tomasi corner response, non-maximum suppression, second-order subpixel
// refinement and the complete patch measurement procedure.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stabscore/image.hpp"

namespace stabscore {

/// Per-pixel minimum eigenvalue of the windowed structure tensor.
class ScoreMap {
 public:
  ScoreMap() = default;
  ScoreMap(int width, int height, std::vector<double> values)
      : width_(width), height_(height), values_(std::move(values)) {
    if (width < 1 || height < 1 || values_.size() != static_cast<std::size_t>(width) * height)
      throw DomainError("score map size mismatch");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::span<const double> values() const { return values_; }
  double operator()(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

inline constexpr double kDefaultWindowSigma = 1.0;
inline constexpr int kImageNmsRadius = 2;
inline constexpr int kPatchNmsRadius = 1;
inline constexpr double kPatchResponseThreshold = 1e-6;
inline constexpr int kDefaultPatchSize = 13;

/// Smaller eigenvalue of [[a, b], [b, c]], clamped at 0 against rounding.
inline double min_eigenvalue(double a, double b, double c) {
  const double half_diff = 0.5 * (a - c);
  return std::max(0.0, 0.5 * (a + c) - std::sqrt(half_diff * half_diff + b * b));
}

namespace detail {

struct ResponseScratch {
  std::vector<double> ixx, ixy, iyy, tmp_xx, tmp_xy, tmp_yy;
};

inline const std::vector<double>& cached_kernel(double sigma) {
  static const std::vector<double> unit = gaussian_kernel(kDefaultWindowSigma);
  if (sigma == kDefaultWindowSigma) return unit;
  thread_local std::vector<double> other;
  thread_local double other_sigma = -1.0;
  if (sigma != other_sigma) {
    other = gaussian_kernel(sigma);
    other_sigma = sigma;
  }
  return other;
}

// Writes the response of `src` (w×h, row-major) into `out`.
inline void response_into(std::span<const double> src, int w, int h, double sigma, std::vector<double>& out,
                          ResponseScratch& s) {
  const std::size_t n = static_cast<std::size_t>(w) * h;
  s.ixx.resize(n), s.ixy.resize(n), s.iyy.resize(n);
  s.tmp_xx.resize(n), s.tmp_xy.resize(n), s.tmp_yy.resize(n);
  out.resize(n);
  for (int y = 0; y < h; ++y) {
    const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
    for (int x = 0; x < w; ++x) {
      const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
      const double gx = 0.5 * (src[y * w + xp] - src[y * w + xm]);
      const double gy = 0.5 * (src[yp * w + x] - src[ym * w + x]);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      s.ixx[i] = gx * gx;
      s.ixy[i] = gx * gy;
      s.iyy[i] = gy * gy;
    }
  }
  const auto& k = cached_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  for (int y = 0; y < h; ++y) {
    const std::size_t row = static_cast<std::size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      double axx = 0.0, axy = 0.0, ayy = 0.0;
      for (int t = -r; t <= r; ++t) {
        const std::size_t j = row + std::clamp(x + t, 0, w - 1);
        axx += k[t + r] * s.ixx[j];
        axy += k[t + r] * s.ixy[j];
        ayy += k[t + r] * s.iyy[j];
      }
      s.tmp_xx[row + x] = axx;
      s.tmp_xy[row + x] = axy;
      s.tmp_yy[row + x] = ayy;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double axx = 0.0, axy = 0.0, ayy = 0.0;
      for (int t = -r; t <= r; ++t) {
        const std::size_t j = static_cast<std::size_t>(std::clamp(y + t, 0, h - 1)) * w + x;
        axx += k[t + r] * s.tmp_xx[j];
        axy += k[t + r] * s.tmp_xy[j];
        ayy += k[t + r] * s.tmp_yy[j];
      }
      out[static_cast<std::size_t>(y) * w + x] = min_eigenvalue(axx, axy, ayy);
    }
  }
}

}  // namespace detail

/// Shi-Tomasi response: central-difference gradients, Gaussian window of `sigma_window`
/// truncated at 3σ, clamped borders. Requires at least 7×7 pixels.
inline ScoreMap response(const ImageGray& img, double sigma_window = kDefaultWindowSigma) {
  if (img.width() < 7 || img.height() < 7) throw DomainError("response: image must be at least 7x7");
  std::vector<double> out;
  detail::ResponseScratch scratch;
  detail::response_into(img.data(), img.width(), img.height(), sigma_window, out, scratch);
  return ScoreMap(img.width(), img.height(), std::move(out));
}

struct Candidate {
  int x = 0;
  int y = 0;
  double score = 0.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

namespace detail {

inline bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.y != b.y) return a.y < b.y;
  return a.x < b.x;
}

inline void nms_into(std::span<const double> v, int w, int h, int radius, double threshold, int border,
                     std::vector<Candidate>& out) {
  out.clear();
  for (int y = border; y < h - border; ++y) {
    for (int x = border; x < w - border; ++x) {
      const double c = v[static_cast<std::size_t>(y) * w + x];
      if (!(c >= threshold)) continue;
      bool is_max = true;
      const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
      const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
      for (int yy = y0; yy <= y1 && is_max; ++yy)
        for (int xx = x0; xx <= x1; ++xx)
          if ((xx != x || yy != y) && !(c > v[static_cast<std::size_t>(yy) * w + xx])) {
            is_max = false;
            break;
          }
      if (is_max) out.push_back({x, y, c});
    }
  }
  std::sort(out.begin(), out.end(), candidate_before);
}

}  // namespace detail

/// Strict maxima over the (2r+1)² neighbourhood with score >= threshold, sorted by descending
/// score then (row, col). Pixels closer than `border` to the map edge are not considered.
inline std::vector<Candidate> nms_candidates(const ScoreMap& score, int radius, double threshold, int border = 0) {
  if (radius < 1) throw DomainError("nms radius must be >= 1");
  if (border < 0) throw DomainError("nms border must be >= 0");
  std::vector<Candidate> out;
  detail::nms_into(score.values(), score.width(), score.height(), radius, threshold, border, out);
  return out;
}

/// Outcome of one measurement: a refined subpixel location, or failure.
class MeasurementOutcome {
 public:
  static MeasurementOutcome failed() { return MeasurementOutcome(); }
  static MeasurementOutcome refined(const Point2& p) { return MeasurementOutcome(p); }

  bool is_refined() const { return point_.has_value(); }
  explicit operator bool() const { return is_refined(); }
  const Point2& point() const { return point_.value(); }

 private:
  MeasurementOutcome() = default;
  explicit MeasurementOutcome(const Point2& p) : point_(p) {}
  std::optional<Point2> point_;
};

namespace detail {

inline MeasurementOutcome refine_at(std::span<const double> v, int w, int x, int y) {
  auto s = [&](int dx, int dy) { return v[static_cast<std::size_t>(y + dy) * w + (x + dx)]; };
  const double gx = 0.5 * (s(1, 0) - s(-1, 0));
  const double gy = 0.5 * (s(0, 1) - s(0, -1));
  const double hxx = s(1, 0) - 2.0 * s(0, 0) + s(-1, 0);
  const double hyy = s(0, 1) - 2.0 * s(0, 0) + s(0, -1);
  const double hxy = 0.25 * (s(1, 1) - s(1, -1) - s(-1, 1) + s(-1, -1));
  const double det = hxx * hyy - hxy * hxy;
  const double scale = std::max({std::abs(hxx), std::abs(hyy), std::abs(hxy)});
  if (!(std::abs(det) > 1e-12 * scale * scale)) return MeasurementOutcome::failed();
  const double dx = -(hyy * gx - hxy * gy) / det;
  const double dy = -(hxx * gy - hxy * gx) / det;
  if (!(std::max(std::abs(dx), std::abs(dy)) < 0.5)) return MeasurementOutcome::failed();
  return MeasurementOutcome::refined(Point2(x + dx, y + dy));
}

}  // namespace detail

/// Newton step −Hess⁻¹·grad on the score map at an integer candidate (central differences).
/// Fails when the Hessian is (relatively) singular or the step leaves the ±0.5 px cell.
inline MeasurementOutcome refine(const ScoreMap& score, int x, int y) {
  if (x < 1 || y < 1 || x > score.width() - 2 || y > score.height() - 2)
    throw RangeError("refine: candidate must be at least 1 px from the border");
  return detail::refine_at(score.values(), score.width(), x, y);
}

inline MeasurementOutcome refine(const ScoreMap& score, const Candidate& c) { return refine(score, c.x, c.y); }

/// Measurement on a patch: response, NMS (radius 1, threshold 1e-6), strongest candidate,
/// refinement. The location is returned in patch pixel coordinates.
inline MeasurementOutcome measure(const ImageGray& patch) {
  if (patch.width() < 7 || patch.height() < 7 || patch.width() % 2 == 0 || patch.height() % 2 == 0)
    throw DomainError("measure: patch must be odd-sized and at least 7x7");
  thread_local detail::ResponseScratch scratch;
  thread_local std::vector<double> score;
  thread_local std::vector<Candidate> cands;
  const int w = patch.width(), h = patch.height();
  detail::response_into(patch.data(), w, h, kDefaultWindowSigma, score, scratch);
  detail::nms_into(score, w, h, kPatchNmsRadius, kPatchResponseThreshold, 1, cands);
  if (cands.empty()) return MeasurementOutcome::failed();
  return detail::refine_at(score, w, cands.front().x, cands.front().y);
}

/// Binary dump: little-endian u32 width, u32 height, then float32 values row-major.
inline void save_score_map(const std::string& path, const ScoreMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot write score map");
  auto put_u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  put_u32(static_cast<std::uint32_t>(map.width()));
  put_u32(static_cast<std::uint32_t>(map.height()));
  for (double v : map.values()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(bits);
  }
  if (!out) throw IoError(path + ": write failed");
}

inline ScoreMap load_score_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open score map");
  auto get_u32 = [&]() {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError(path + ": truncated score map");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  };
  const auto w = static_cast<int>(get_u32());
  const auto h = static_cast<int>(get_u32());
  if (w < 1 || h < 1) throw IoError(path + ": invalid score map dimensions");
  std::vector<double> values(static_cast<std::size_t>(w) * h);
  for (double& v : values) {
    const std::uint32_t bits = get_u32();
    float f;
    std::memcpy(&f, &bits, 4);
    v = f;
  }
  return ScoreMap(w, h, std::move(values));
}

}  // namespace stabscore
