#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stabscore/core.hpp"
#include "stabscore/homography.hpp"

namespace stabscore {

/// Single-channel row-major raster. Immutable once built.
class ImageGray {
 public:
  ImageGray() = default;

  ImageGray(int width, int height, double fill = 0.0)
      : ImageGray(width, height, std::vector<double>(checked_area(width, height), fill)) {}

  ImageGray(int width, int height, std::vector<double> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != checked_area(width, height))
      throw DomainError("image data length does not match width*height");
    for (double v : data_)
      if (!std::isfinite(v)) throw DomainError("image data contains non-finite values");
  }

  /// Builds an image from f(x, y).
  template <typename Fn>
  static ImageGray from_function(int width, int height, Fn&& f) {
    std::vector<double> data(checked_area(width, height));
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) data[static_cast<std::size_t>(y) * width + x] = f(x, y);
    return ImageGray(width, height, std::move(data));
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }
  std::span<const double> data() const { return data_; }

  double operator()(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  /// Pixel with indices clamped into the raster (border replication).
  double clamped(int x, int y) const {
    return (*this)(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
  }

  bool contains(const Point2& p) const {
    return p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width_ - 1 && p.y() <= height_ - 1;
  }

  friend bool operator==(const ImageGray&, const ImageGray&) = default;

 private:
  static std::size_t checked_area(int width, int height) {
    if (width < 1 || height < 1) throw DomainError("image dimensions must be >= 1");
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

namespace detail {

// Bilinear blend of the four neighbours of an in-range point; lattice points are exact.
inline double bilinear_unchecked(const ImageGray& img, double x, double y) {
  const int x0 = std::min(static_cast<int>(x), img.width() - 1);
  const int y0 = std::min(static_cast<int>(y), img.height() - 1);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = img(x0, y0) + fx * (img(x1, y0) - img(x0, y0));
  const double bottom = img(x0, y1) + fx * (img(x1, y1) - img(x0, y1));
  return top + fy * (bottom - top);
}

}  // namespace detail

/// Bilinear interpolation. Throws RangeError outside [0, w−1]×[0, h−1].
inline double sample_bilinear(const ImageGray& img, const Point2& p) {
  if (!img.contains(p)) throw RangeError("sample_bilinear: point outside the image");
  return detail::bilinear_unchecked(img, p.x(), p.y());
}

/// Bilinear interpolation with the sample point clamped to the image (border replication).
inline double sample_bilinear_clamped(const ImageGray& img, const Point2& p) {
  const double x = std::clamp(p.x(), 0.0, static_cast<double>(img.width() - 1));
  const double y = std::clamp(p.y(), 0.0, static_cast<double>(img.height() - 1));
  return detail::bilinear_unchecked(img, x, y);
}

/// Square patch of odd side `size` centred at `center` (image coordinates).
struct PatchSpec {
  Point2 center = Point2::Zero();
  int size = 13;

  void validate() const {
    if (size < 3 || size % 2 == 0) throw DomainError("patch size must be odd and >= 3");
    if (!center.allFinite()) throw DomainError("patch center must be finite");
  }
  int radius() const { return size / 2; }
};

/// Patch pixels whose source location fell outside the image above this fraction are flagged.
inline constexpr double kMaxOutOfSupport = 0.2;

struct WarpedPatch {
  ImageGray patch;
  double out_of_support = 0.0;  ///< fraction of pixels sampled outside the image

  bool flagged() const { return out_of_support > kMaxOutOfSupport; }
};

/// Resamples `img` on a patch grid: P(x) = img(center + H·x), with x the patch pixel in
/// patch-centred coordinates (origin at the centre pixel, y down). A point k̃ detected in
/// the patch therefore lies at center + H·k̃ in the image.
inline WarpedPatch warp_patch(const ImageGray& img, const PatchSpec& spec, const Homography& h) {
  spec.validate();
  const int n = spec.size, r = spec.radius();
  const Eigen::Matrix3d& m = h.matrix();
  std::vector<double> out(static_cast<std::size_t>(n) * n);
  int outside = 0;
  for (int v = 0; v < n; ++v) {
    for (int u = 0; u < n; ++u) {
      const double px = u - r, py = v - r;
      const double w = m(2, 0) * px + m(2, 1) * py + m(2, 2);
      Point2 src;
      bool ok = std::abs(w) > 1e-12;
      if (ok) {
        src = spec.center + Point2((m(0, 0) * px + m(0, 1) * py + m(0, 2)) / w,
                                   (m(1, 0) * px + m(1, 1) * py + m(1, 2)) / w);
        ok = img.contains(src);
      } else {
        src = spec.center;
      }
      if (!ok) ++outside;
      out[static_cast<std::size_t>(v) * n + u] = sample_bilinear_clamped(img, src);
    }
  }
  return {ImageGray(n, n, std::move(out)), static_cast<double>(outside) / (n * n)};
}

/// Axis-aligned crop of odd side `size` around an integer centre, border-replicated.
inline ImageGray crop(const ImageGray& img, int cx, int cy, int size) {
  const int r = size / 2;
  return ImageGray::from_function(size, size,
                                  [&](int x, int y) { return img.clamped(cx - r + x, cy - r + y); });
}

/// Full-image warp for a homography mapping source → destination pixels:
/// dst(x) = src(H⁻¹·x). Pixels with no preimage inside the source get `fill`.
inline ImageGray warp_image(const ImageGray& src, const Homography& h_src_to_dst, int width, int height,
                            double fill = 0.0) {
  const Homography inv = h_src_to_dst.inverse();
  return ImageGray::from_function(width, height, [&](int x, int y) {
    try {
      const Point2 p = project(inv, Point2(x, y));
      return src.contains(p) ? detail::bilinear_unchecked(src, p.x(), p.y()) : fill;
    } catch (const GeometryError&) {
      return fill;
    }
  });
}

/// Normalized 1-D Gaussian taps for sigma, truncated at ceil(3·sigma).
inline std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw DomainError("gaussian sigma must be > 0");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  return k;
}

/// Separable Gaussian blur with clamped borders.
inline ImageGray gaussian_blur(const ImageGray& img, double sigma) {
  const auto k = gaussian_kernel(sigma);
  const int r = static_cast<int>(k.size() / 2);
  const int w = img.width(), h = img.height();
  std::vector<double> tmp(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * img.clamped(x + i, y);
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  std::vector<double> out(tmp.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  return ImageGray(w, h, std::move(out));
}

/// Pixelwise map, e.g. intensity scaling.
template <typename Fn>
ImageGray map_pixels(const ImageGray& img, Fn&& f) {
  return ImageGray::from_function(img.width(), img.height(), [&](int x, int y) { return f(img(x, y)); });
}

}  // namespace stabscore
