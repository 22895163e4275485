#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace stabscore {

using Point2 = Eigen::Vector2d;

/// Argument outside the domain an operation is defined on (out-of-bounds sample, border candidate).
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Degenerate or non-invertible geometric configuration.
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numeric argument outside a function's mathematical domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Unreadable, malformed or unsupported file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stabscore
