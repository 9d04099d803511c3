#pragma once

#include <cmath>

#include "starnet/error.hpp"

namespace starnet {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  Point2 operator+(const Point2& o) const { return {x + o.x, y + o.y}; }
  Point2 operator-(const Point2& o) const { return {x - o.x, y - o.y}; }
  Point2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Point2& o) const { return x == o.x && y == o.y; }

  double norm() const { return std::hypot(x, y); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline double distance(const Point2& a, const Point2& b) { return (a - b).norm(); }

// Wraps an angle into (-pi, pi]. Throws on non-finite input.
double normalize_heading(double theta);

struct Pose {
  Point2 position;
  double heading = 0.0;  // radians, normalized to (-pi, pi]
};

// Rigid 2D motion p -> R(angle) p + translation.
class RigidTransform {
 public:
  RigidTransform() : cos_(1.0), sin_(0.0) {}
  RigidTransform(double angle, Point2 translation)
      : cos_(std::cos(angle)), sin_(std::sin(angle)), t_(translation) {}

  // Transform mapping local coordinates of `pose` into the parent frame.
  static RigidTransform from_pose(const Pose& pose) {
    return RigidTransform(pose.heading, pose.position);
  }

  Point2 apply(const Point2& p) const {
    return {cos_ * p.x - sin_ * p.y + t_.x, sin_ * p.x + cos_ * p.y + t_.y};
  }

  double apply_heading(double heading) const {
    return normalize_heading(heading + angle());
  }

  RigidTransform inverse() const {
    RigidTransform inv;
    inv.cos_ = cos_;
    inv.sin_ = -sin_;
    inv.t_ = {-(cos_ * t_.x + sin_ * t_.y), -(-sin_ * t_.x + cos_ * t_.y)};
    return inv;
  }

  RigidTransform compose(const RigidTransform& inner) const {
    RigidTransform out;
    out.cos_ = cos_ * inner.cos_ - sin_ * inner.sin_;
    out.sin_ = sin_ * inner.cos_ + cos_ * inner.sin_;
    out.t_ = apply(inner.t_);
    return out;
  }

  double angle() const { return std::atan2(sin_, cos_); }

 private:
  double cos_, sin_;
  Point2 t_;
};

}  // namespace starnet
