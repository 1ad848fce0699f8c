#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace precrash {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double k) const { return {x * k, y * k}; }
  constexpr bool operator==(const Vec2&) const = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }
inline Vec2 unit_from_heading(double heading) { return {std::cos(heading), std::sin(heading)}; }

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * kPi);
  return a <= -kPi ? a + 2.0 * kPi : a;
}

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, counter-clockwise from +x (east)

  Vec2 position() const { return {x, y}; }
};

/// Rectangle with arbitrary orientation. `heading` is the direction of the
/// long (length) axis.
struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double half_length = 0.0;
  double half_width = 0.0;

  std::array<Vec2, 4> corners() const;
};

/// Box for a body whose reference point is the middle of its front edge.
OrientedBox box_from_front(const Pose& front, double length, double width);

/// Separating-axis test on the four face normals. Touching boxes overlap
/// (closed-set convention); `eps` widens the contact tolerance.
bool overlaps(const OrientedBox& a, const OrientedBox& b, double eps = 1e-9);

struct Projection {
  double s = 0.0;         // arc length of the closest point
  double lateral = 0.0;   // signed offset, positive to the left of travel
  double distance = 0.0;  // |lateral| unless the point lies beyond an end
  double heading = 0.0;   // direction of the segment holding the closest point
};

/// Piecewise-linear curve with cached cumulative arc length.
class Polyline {
 public:
  Polyline() = default;
  explicit Polyline(std::vector<Vec2> points);

  std::span<const Vec2> points() const { return points_; }
  double length() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  std::size_t segment_count() const { return points_.size() < 2 ? 0 : points_.size() - 1; }

  /// Position and heading at arc length s, clamped to [0, length]. At an
  /// interior vertex the heading is the one of the following segment.
  Pose at(double s) const;
  Projection project(Vec2 p) const;

  /// Polyline shifted sideways by `offset` (positive = left), using mitred
  /// vertices so parallel segments stay exactly `offset` apart.
  Polyline offset(double offset) const;

 private:
  std::vector<Vec2> points_;
  std::vector<double> cumulative_;
};

}  // namespace precrash
