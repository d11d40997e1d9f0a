#pragma once

#include <cmath>

namespace fbgrpo {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double heading_of(Vec2 a) { return std::atan2(a.y, a.x); }
inline Vec2 unit_from_heading(double h) { return {std::cos(h), std::sin(h)}; }
inline Vec2 rotate(Vec2 a, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * a.x - s * a.y, s * a.x + c * a.y};
}

// Maps an angle into (-pi, pi].
double wrap_angle(double a);

// Rigid 2D pose. `apply` maps local coordinates into the parent frame.
struct Pose2 {
  Vec2 origin;
  double heading = 0.0;

  Vec2 apply(Vec2 local) const { return origin + rotate(local, heading); }
  Vec2 apply_direction(Vec2 local) const { return rotate(local, heading); }
  Vec2 to_local(Vec2 world) const { return rotate(world - origin, -heading); }
  Vec2 direction_to_local(Vec2 world) const { return rotate(world, -heading); }
};

struct OrientedBox {
  Vec2 center;
  Vec2 half_extent;  // along (heading, heading + pi/2)
  double heading = 0.0;
};

// Separating-axis test; touching boxes count as overlapping.
bool overlaps(const OrientedBox& a, const OrientedBox& b);

}  // namespace fbgrpo
