#include "fbgrpo/geometry.hpp"

#include <array>
#include <numbers>

namespace fbgrpo {

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

namespace {

double projected_radius(const OrientedBox& box, Vec2 axis) {
  const Vec2 u = unit_from_heading(box.heading);
  const Vec2 v{-u.y, u.x};
  return box.half_extent.x * std::abs(dot(u, axis)) + box.half_extent.y * std::abs(dot(v, axis));
}

}  // namespace

bool overlaps(const OrientedBox& a, const OrientedBox& b) {
  const Vec2 delta = b.center - a.center;
  const Vec2 ua = unit_from_heading(a.heading);
  const Vec2 ub = unit_from_heading(b.heading);
  const std::array<Vec2, 4> axes{ua, Vec2{-ua.y, ua.x}, ub, Vec2{-ub.y, ub.x}};
  for (const Vec2& axis : axes) {
    if (std::abs(dot(delta, axis)) > projected_radius(a, axis) + projected_radius(b, axis)) {
      return false;
    }
  }
  return true;
}

}  // namespace fbgrpo
