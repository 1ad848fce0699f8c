#include "precrash/geometry.hpp"

#include <algorithm>
#include <limits>

namespace precrash {

std::array<Vec2, 4> OrientedBox::corners() const {
  const Vec2 u = unit_from_heading(heading) * half_length;
  const Vec2 v = Vec2{-std::sin(heading), std::cos(heading)} * half_width;
  return {center + u + v, center + u - v, center - u - v, center - u + v};
}

OrientedBox box_from_front(const Pose& front, double length, double width) {
  const Vec2 dir = unit_from_heading(front.heading);
  return {front.position() - dir * (0.5 * length), front.heading, 0.5 * length, 0.5 * width};
}

namespace {

double radius_along(const OrientedBox& b, Vec2 axis) {
  const Vec2 u = unit_from_heading(b.heading);
  const Vec2 v{-u.y, u.x};
  return b.half_length * std::abs(dot(u, axis)) + b.half_width * std::abs(dot(v, axis));
}

}  // namespace

bool overlaps(const OrientedBox& a, const OrientedBox& b, double eps) {
  const Vec2 d = b.center - a.center;
  const double reach = a.half_length + a.half_width + b.half_length + b.half_width;
  if (dot(d, d) > (reach + eps) * (reach + eps)) return false;

  const Vec2 ua = unit_from_heading(a.heading);
  const Vec2 ub = unit_from_heading(b.heading);
  const std::array<Vec2, 4> axes{ua, Vec2{-ua.y, ua.x}, ub, Vec2{-ub.y, ub.x}};
  for (const Vec2& axis : axes) {
    if (std::abs(dot(d, axis)) > radius_along(a, axis) + radius_along(b, axis) + eps) return false;
  }
  return true;
}

Polyline::Polyline(std::vector<Vec2> points) {
  points_.reserve(points.size());
  for (const Vec2& p : points) {
    if (points_.empty() || !(points_.back() == p)) points_.push_back(p);
  }
  cumulative_.reserve(points_.size());
  double total = 0.0;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (i > 0) total += distance(points_[i - 1], points_[i]);
    cumulative_.push_back(total);
  }
}

Pose Polyline::at(double s) const {
  if (points_.empty()) return {};
  if (points_.size() == 1) return {points_[0].x, points_[0].y, 0.0};
  s = std::clamp(s, 0.0, length());
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
  std::size_t seg = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
  seg = std::min(seg, segment_count() - 1);
  const Vec2 a = points_[seg];
  const Vec2 b = points_[seg + 1];
  const double seg_len = cumulative_[seg + 1] - cumulative_[seg];
  const double f = (s - cumulative_[seg]) / seg_len;
  const Vec2 p = a + (b - a) * f;
  return {p.x, p.y, std::atan2(b.y - a.y, b.x - a.x)};
}

Projection Polyline::project(Vec2 p) const {
  Projection best;
  best.distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
    const Vec2 a = points_[i];
    const Vec2 ab = points_[i + 1] - a;
    const double seg_len = cumulative_[i + 1] - cumulative_[i];
    const double f = std::clamp(dot(p - a, ab) / (seg_len * seg_len), 0.0, 1.0);
    const Vec2 q = a + ab * f;
    const double d = distance(p, q);
    if (d < best.distance) {
      best.distance = d;
      best.s = cumulative_[i] + f * seg_len;
      best.lateral = cross(ab, p - a) / seg_len;
      best.heading = std::atan2(ab.y, ab.x);
    }
  }
  return best;
}

Polyline Polyline::offset(double off) const {
  if (points_.size() < 2 || off == 0.0) return *this;
  const std::size_t n = points_.size();
  std::vector<Vec2> normals;
  normals.reserve(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const Vec2 d = points_[i + 1] - points_[i];
    const double len = norm(d);
    normals.push_back({-d.y / len, d.x / len});
  }
  std::vector<Vec2> out;
  out.reserve(n);
  out.push_back(points_[0] + normals.front() * off);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    Vec2 m = normals[i - 1] + normals[i];
    const double mlen = norm(m);
    if (mlen < 1e-12) {
      out.push_back(points_[i] + normals[i] * off);
      continue;
    }
    m = m * (1.0 / mlen);
    out.push_back(points_[i] + m * (off / dot(m, normals[i])));
  }
  out.push_back(points_[n - 1] + normals.back() * off);
  return Polyline(std::move(out));
}

}  // namespace precrash
