#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>

namespace eoscount {

/// Axis-aligned pixel rectangle, top-left origin, half-open extents.
struct Rect {
  int64_t x = 0;
  int64_t y = 0;
  int64_t w = 0;
  int64_t h = 0;

  constexpr int64_t right() const { return x + w; }
  constexpr int64_t bottom() const { return y + h; }
  constexpr int64_t area() const { return w * h; }
  constexpr bool empty() const { return w <= 0 || h <= 0; }

  constexpr bool contains(int64_t px, int64_t py) const {
    return px >= x && px < right() && py >= y && py < bottom();
  }
  constexpr bool contains(const Rect& o) const {
    return o.x >= x && o.y >= y && o.right() <= right() && o.bottom() <= bottom();
  }
  constexpr bool intersects(const Rect& o) const {
    return x < o.right() && o.x < right() && y < o.bottom() && o.y < bottom();
  }

  friend constexpr bool operator==(const Rect&, const Rect&) = default;
};

inline std::optional<Rect> intersect(const Rect& a, const Rect& b) {
  const int64_t x0 = std::max(a.x, b.x);
  const int64_t y0 = std::max(a.y, b.y);
  const int64_t x1 = std::min(a.right(), b.right());
  const int64_t y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  return Rect{x0, y0, x1 - x0, y1 - y0};
}

}  // namespace eoscount
