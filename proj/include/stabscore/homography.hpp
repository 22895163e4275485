#pragma once

// Projective transforms, exact 4-point solving and the beta-controlled random
// homography generator used to synthesize viewpoint changes.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "stabscore/core.hpp"
#include "stabscore/rng.hpp"

namespace stabscore {

/// Invertible 3x3 projective transform, stored Frobenius-normalized with m(2,2) > 0 when nonzero.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) { normalize(); }

  explicit Homography(const Eigen::Matrix3d& m) : m_(m) {
    if (!m_.allFinite()) throw GeometryError("homography has non-finite entries");
    const double norm = m_.norm();
    if (norm == 0.0) throw GeometryError("homography is the zero matrix");
    // det scales with norm^3; compare on the normalized matrix.
    if (std::abs((m_ / norm).determinant()) < 1e-14) throw GeometryError("homography is singular");
    normalize();
  }

  static Homography identity() { return Homography(); }

  static Homography translation(double tx, double ty) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 2) = tx;
    m(1, 2) = ty;
    return Homography(m);
  }

  /// Rotation by `radians` about the origin (image axes, y down).
  static Homography rotation(double radians) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 0) = std::cos(radians);
    m(0, 1) = -std::sin(radians);
    m(1, 0) = std::sin(radians);
    m(1, 1) = std::cos(radians);
    return Homography(m);
  }

  const Eigen::Matrix3d& matrix() const { return m_; }

  /// Matrix rescaled so that m(2,2) == 1. Requires m(2,2) != 0.
  Eigen::Matrix3d unit_h33() const {
    if (m_(2, 2) == 0.0) throw GeometryError("homography has h33 == 0");
    return m_ / m_(2, 2);
  }

  Homography inverse() const { return Homography(m_.inverse()); }

  /// this ∘ other: first apply `other`, then `this`.
  Homography operator*(const Homography& other) const { return Homography(m_ * other.m_); }

  /// Up-to-scale equality on the normalized representation.
  bool approx_equal(const Homography& other, double tol) const {
    const double plus = (m_ - other.m_).cwiseAbs().maxCoeff();
    const double minus = (m_ + other.m_).cwiseAbs().maxCoeff();
    return std::min(plus, minus) <= tol;
  }

 private:
  void normalize() {
    m_ /= m_.norm();
    if (m_(2, 2) < 0.0) m_ = -m_;
  }

  Eigen::Matrix3d m_;
};

/// Perspective division of H·(p, 1). Throws GeometryError for points mapped to infinity.
inline Point2 project(const Homography& h, const Point2& p) {
  const Eigen::Matrix3d& m = h.matrix();
  const double x = m(0, 0) * p.x() + m(0, 1) * p.y() + m(0, 2);
  const double y = m(1, 0) * p.x() + m(1, 1) * p.y() + m(1, 2);
  const double w = m(2, 0) * p.x() + m(2, 1) * p.y() + m(2, 2);
  const double scale = std::abs(m(2, 0) * p.x()) + std::abs(m(2, 1) * p.y()) + std::abs(m(2, 2));
  if (std::abs(w) <= 1e-12 * scale || w == 0.0) throw GeometryError("point maps to infinity");
  return {x / w, y / w};
}

namespace detail {

inline double cross2(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

inline bool has_collinear_triple(const std::array<Point2, 4>& pts) {
  double extent = 0.0;
  for (const auto& a : pts)
    for (const auto& b : pts) extent = std::max(extent, (a - b).norm());
  if (extent == 0.0) return true;
  const double tol = 1e-10 * extent * extent;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      for (int k = j + 1; k < 4; ++k)
        if (std::abs(cross2(pts[i], pts[j], pts[k])) <= tol) return true;
  return false;
}

/// Projective basis map taking e1,e2,e3,(1,1,1) to the four points.
inline Eigen::Matrix3d basis_to_points(const std::array<Point2, 4>& p) {
  Eigen::Matrix3d a;
  a << p[0].x(), p[1].x(), p[2].x(), p[0].y(), p[1].y(), p[2].y(), 1.0, 1.0, 1.0;
  const Eigen::Vector3d lambda = a.fullPivLu().solve(Eigen::Vector3d(p[3].x(), p[3].y(), 1.0));
  return a * lambda.asDiagonal();
}

}  // namespace detail

/// Homography mapping src[i] to dst[i] for all four points.
inline Homography solve_4pt(const std::array<Point2, 4>& src, const std::array<Point2, 4>& dst) {
  if (detail::has_collinear_triple(src) || detail::has_collinear_triple(dst))
    throw GeometryError("solve_4pt: three of the points are collinear");
  const Eigen::Matrix3d from_src = detail::basis_to_points(src);
  const Eigen::Matrix3d from_dst = detail::basis_to_points(dst);
  return Homography(from_dst * from_src.inverse());
}

/// Difficulty of generated homographies: beta >= 1, square half-side in pixels.
struct BetaConfig {
  double beta = 2.828;
  double half_extent = 6.0;

  void validate() const {
    if (!(beta >= 1.0) || !std::isfinite(beta)) throw DomainError("beta must be >= 1");
    if (!(half_extent > 0.0) || !std::isfinite(half_extent)) throw DomainError("half_extent must be > 0");
  }

  /// Largest displacement of a perturbed corner: half_extent·(1 − 1/beta).
  double max_displacement() const { return half_extent * (1.0 - 1.0 / beta); }
};

/// Corners of the fixed square, ordered top-left, top-right, bottom-right, bottom-left.
inline std::array<Point2, 4> fixed_square(double half_extent) {
  return {Point2(-half_extent, -half_extent), Point2(half_extent, -half_extent),
          Point2(half_extent, half_extent), Point2(-half_extent, half_extent)};
}

/// The four corners after random perturbation. Z1/Z2 move the top-left/top-right corner
/// horizontally (left/right lateral), Z3/Z4 move the bottom-left/bottom-right corner
/// vertically (left/right perspective). Draw order: Z1..Z4, then one sign bit each.
inline std::array<Point2, 4> perturbed_square(Stream& stream, const BetaConfig& cfg) {
  cfg.validate();
  std::array<double, 4> z{};
  for (double& v : z) v = stream.uniform();
  std::array<double, 4> sign{};
  for (double& s : sign) s = stream.coin() ? 1.0 : -1.0;
  const double d = cfg.max_displacement();
  auto pts = fixed_square(cfg.half_extent);
  pts[0].x() += sign[0] * z[0] * d;
  pts[1].x() += sign[1] * z[1] * d;
  pts[3].y() += sign[2] * z[2] * d;
  pts[2].y() += sign[3] * z[3] * d;
  return pts;
}

/// Random homography mapping the fixed square onto its perturbed copy.
inline Homography generate(Stream& stream, const BetaConfig& cfg) {
  const auto moved = perturbed_square(stream, cfg);
  if (cfg.max_displacement() == 0.0) return Homography::identity();
  return solve_4pt(fixed_square(cfg.half_extent), moved);
}

/// Random homography for a whole w×h image: generate() in image-centred coordinates with
/// half_extent = min(w, h)/4, conjugated back to pixel coordinates.
inline Homography generate_image_homography(Stream& stream, double beta, int width, int height) {
  const BetaConfig cfg{beta, 0.25 * std::min(width, height)};
  const Homography centred = generate(stream, cfg);
  const double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
  return Homography::translation(cx, cy) * centred * Homography::translation(-cx, -cy);
}

/// Nine row-major values, one per line.
inline std::string format_homography(const Homography& h) {
  std::ostringstream out;
  out << std::setprecision(17);
  const Eigen::Matrix3d m = h.matrix() / h.matrix()(2, 2);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << m(r, c) << '\n';
  return out.str();
}

/// Parses nine whitespace-separated values (HPatches H files use three rows of three).
inline Homography parse_homography(const std::string& text, const std::string& source = "<string>") {
  std::istringstream in(text);
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) {
    std::string token;
    if (!(in >> token)) throw IoError(source + ": expected 9 values, got " + std::to_string(i));
    try {
      std::size_t used = 0;
      m(i / 3, i % 3) = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::exception&) {
      throw IoError(source + ": malformed value '" + token + "'");
    }
  }
  std::string extra;
  if (in >> extra) throw IoError(source + ": trailing data after 9 values");
  try {
    return Homography(m);
  } catch (const GeometryError& e) {
    throw IoError(source + ": " + e.what());
  }
}

inline Homography load_homography(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open homography file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_homography(buf.str(), path);
}

inline void save_homography(const std::string& path, const Homography& h) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot write homography file");
  out << format_homography(h);
}

}  // namespace stabscore
