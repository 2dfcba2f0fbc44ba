#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "eoscount/counter.hpp"
#include "eoscount/geometry.hpp"

namespace eoscount {

struct HpfConfig {
  double hpf_area_mm2 = 0.3;
  int64_t activity_threshold = 15;

  void validate() const;
};

enum class Activity { kInactive, kActive };

const char* to_string(Activity a);
Activity activity_from_string(const std::string& s);

struct PecResult {
  std::string slide_id;
  int64_t peak_count = 0;
  Rect hpf_rect;
  Activity label = Activity::kInactive;

  friend bool operator==(const PecResult&, const PecResult&) = default;
};

/// Side in pixels of a square field of `area_mm2` at the given pitch,
/// rounded to the nearest pixel and at least 1.
int64_t hpf_side_px(double area_mm2, double microns_per_pixel);

struct WindowPeak {
  int64_t count = 0;
  Rect rect;
  friend bool operator==(const WindowPeak&, const WindowPeak&) = default;
};

/// Exact maximum summed multiplicity over every integer placement of a
/// side x side window inside a slide_w x slide_h slide.
///
/// A point p is inside the window at (x, y) when x <= p.x < x + side and
/// y <= p.y < y + side. Placements range over [0, max(0, slide - side)] per
/// axis; a slide smaller than the window yields the single whole-slide window.
/// Ties go to the smallest y, then the smallest x.
///
/// The search sweeps candidate top edges (0 and every p.y - side + 1) in
/// increasing order while a max segment tree over candidate left edges
/// (0 and every p.x - side + 1) holds the count of each window in the current
/// band. Only those candidates can be the first placement reaching a new
/// maximum, so the sweep is exact. O(n log n).
WindowPeak peak_window(std::span<const EosPoint> points, int64_t side, int64_t slide_w, int64_t slide_h);

/// Approximate peak using a summed-area table over a `stride`-pixel density
/// grid, with windows snapped to grid cells. Never exceeds the exact peak.
WindowPeak peak_window_density(std::span<const EosPoint> points, int64_t side, int64_t slide_w, int64_t slide_h,
                               int64_t stride = 16);

Activity classify(int64_t peak_count, const HpfConfig& cfg = {});

/// Descending peak_count, ties by ascending slide_id. Throws InvalidArgument on duplicate ids.
std::vector<PecResult> rank_slides(std::vector<PecResult> results);

}  // namespace eoscount
