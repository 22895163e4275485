#pragma once

// Procedural test scenes: shaded background, filled polygons and ellipses with sharp
// corners, and patches of fine random texture, slightly blurred. Used where no natural
// images are available.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "stabscore/image.hpp"
#include "stabscore/rng.hpp"

namespace stabscore {

struct SceneOptions {
  int width = 320;
  int height = 240;
  int shapes = 40;
  int texture_patches = 6;
  double blur_sigma = 0.7;
};

namespace detail {

inline bool inside_polygon(const std::vector<Point2>& poly, double x, double y) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point2 &a = poly[i], &b = poly[j];
    if ((a.y() > y) != (b.y() > y) && x < (b.x() - a.x()) * (y - a.y()) / (b.y() - a.y()) + a.x()) in = !in;
  }
  return in;
}

}  // namespace detail

inline ImageGray synthetic_scene(std::uint64_t seed, const SceneOptions& opt = {}) {
  const int w = opt.width, h = opt.height;
  Stream rng(seed, purpose_stream_id(StreamPurpose::kScene, 0));
  std::vector<double> px(static_cast<std::size_t>(w) * h);
  const double gx = rng.uniform(-0.3, 0.3) / w, gy = rng.uniform(-0.3, 0.3) / h, base = rng.uniform(0.35, 0.65);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) px[static_cast<std::size_t>(y) * w + x] = base + gx * x + gy * y;

  const double scale = std::min(w, h);
  for (int s = 0; s < opt.shapes; ++s) {
    const double cx = rng.uniform(0, w), cy = rng.uniform(0, h);
    const double size = rng.uniform(0.04, 0.18) * scale;
    const double level = rng.uniform(0.0, 1.0);
    const int kind = static_cast<int>(rng.below(3));
    std::vector<Point2> poly;
    double ex = 0, ey = 0, ang = 0;
    if (kind == 2) {
      ex = size, ey = size * rng.uniform(0.4, 1.0), ang = rng.uniform(0, std::numbers::pi);
    } else {
      const int corners = kind == 0 ? 4 : 3;
      const double rot = rng.uniform(0, 2 * std::numbers::pi);
      for (int c = 0; c < corners; ++c) {
        const double a = rot + 2 * std::numbers::pi * c / corners + rng.uniform(-0.35, 0.35);
        const double r = size * rng.uniform(0.6, 1.2);
        poly.emplace_back(cx + r * std::cos(a), cy + r * std::sin(a));
      }
    }
    const int x0 = std::max(0, static_cast<int>(cx - 1.3 * size)), x1 = std::min(w - 1, static_cast<int>(cx + 1.3 * size));
    const int y0 = std::max(0, static_cast<int>(cy - 1.3 * size)), y1 = std::min(h - 1, static_cast<int>(cy + 1.3 * size));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        bool in;
        if (kind == 2) {
          const double dx = x - cx, dy = y - cy;
          const double u = dx * std::cos(ang) + dy * std::sin(ang), v = -dx * std::sin(ang) + dy * std::cos(ang);
          in = (u * u) / (ex * ex) + (v * v) / (ey * ey) <= 1.0;
        } else {
          in = detail::inside_polygon(poly, x + 0.5, y + 0.5);
        }
        if (in) px[static_cast<std::size_t>(y) * w + x] = level;
      }
  }

  for (int t = 0; t < opt.texture_patches; ++t) {
    const int size = static_cast<int>(rng.uniform(0.08, 0.16) * scale);
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint32_t>(std::max(1, w - size))));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint32_t>(std::max(1, h - size))));
    const double amp = rng.uniform(0.05, 0.2);
    for (int y = y0; y < std::min(h, y0 + size); ++y)
      for (int x = x0; x < std::min(w, x0 + size); ++x) px[static_cast<std::size_t>(y) * w + x] += amp * (rng.uniform() - 0.5);
  }

  for (double& v : px) v = std::clamp(v, 0.0, 1.0);
  ImageGray img(w, h, std::move(px));
  return opt.blur_sigma > 0.0 ? gaussian_blur(img, opt.blur_sigma) : img;
}

/// Adds i.i.d. Gaussian noise (clamped to [0, 1]) drawn from the given stream id.
inline ImageGray add_noise(const ImageGray& img, double sigma, std::uint64_t seed, std::uint64_t stream_id) {
  if (sigma <= 0.0) return img;
  Stream rng(seed, stream_id);
  std::vector<double> px(img.data().begin(), img.data().end());
  for (double& v : px) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
  return ImageGray(img.width(), img.height(), std::move(px));
}

}  // namespace stabscore
