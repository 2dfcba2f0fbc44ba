#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "eoscount/bitplane.hpp"
#include "eoscount/geometry.hpp"
#include "eoscount/raster.hpp"

namespace eoscount {

class FusedMask;

/// Area-to-count rule: a region counts 0 up to min_area_px, 1 up to
/// single_max_area_px, and one more per completed increment_area_px beyond.
struct CountingRule {
  int64_t min_area_px = 1800;
  int64_t single_max_area_px = 3000;
  int64_t increment_area_px = 2000;
  int64_t typical_cell_area_px = 2050;

  void validate() const;
};

enum class Connectivity { kFour = 4, kEight = 8 };

struct EosRegion {
  EosClass cls = EosClass::kIntact;
  int64_t area_px = 0;
  Rect bbox;
  double cx = 0.0;
  double cy = 0.0;
  int64_t eos_count = 0;
  /// Member pixels as row runs; filled only when requested.
  std::vector<PixelRun> runs;
};

struct EosPoint {
  double x = 0.0;
  double y = 0.0;
  int64_t multiplicity = 1;
  friend bool operator==(const EosPoint&, const EosPoint&) = default;
};

/// Streaming connected-component labeler over row runs.
///
/// Rows must be pushed top to bottom, runs within a row sorted by x. Each
/// new run either adopts the label of an overlapping run on the previous row
/// or opens a provisional label; labels touching the same run are merged in a
/// union-find forest keyed by the smallest label, so the final components come
/// out in raster order of their first pixel. Only two rows of runs are held at
/// a time, plus per-label statistics.
class RunLabeler {
 public:
  explicit RunLabeler(Connectivity connectivity = Connectivity::kEight, bool keep_runs = false);

  void push_row(int64_t y, std::span<const PixelRun> runs);
  /// Components in raster order of their first pixel; eos_count left at 0.
  std::vector<EosRegion> finish(EosClass cls);

 private:
  struct Stats {
    int64_t area = 0;
    int64_t sum_x = 0;
    int64_t sum_y = 0;
    int64_t x0 = INT64_MAX, y0 = INT64_MAX, x1 = INT64_MIN, y1 = INT64_MIN;
  };

  uint32_t find(uint32_t a);
  uint32_t unite(uint32_t a, uint32_t b);

  Connectivity connectivity_;
  bool keep_runs_;
  int64_t last_y_ = INT64_MIN;
  std::vector<PixelRun> prev_runs_;
  std::vector<uint32_t> prev_labels_;
  std::vector<uint32_t> cur_labels_;
  std::vector<uint32_t> parent_;
  std::vector<Stats> stats_;
  std::vector<std::pair<uint32_t, PixelRun>> all_runs_;
};

std::vector<EosRegion> connected_components(const BinaryMask& channel, Connectivity connectivity = Connectivity::kEight,
                                            EosClass cls = EosClass::kIntact, bool keep_runs = false);

/// Components of one class of a fused slide mask, after intact-wins
/// resolution (not-intact pixels under an intact bit are dropped).
std::vector<EosRegion> connected_components(const FusedMask& fused, EosClass cls,
                                            Connectivity connectivity = Connectivity::kEight, bool keep_runs = false);

int64_t eos_count_of_area(int64_t area_px, const CountingRule& rule = {});

/// Fills eos_count on every region.
void assign_counts(std::vector<EosRegion>& regions, const CountingRule& rule);

/// One point per region with a non-zero count, at the region centroid.
std::vector<EosPoint> points_of(std::span<const EosRegion> regions);

std::vector<EosPoint> extract_eos_points(const ClassMask& mask, EosClass cls, const CountingRule& rule = {},
                                         Connectivity connectivity = Connectivity::kEight);

/// Intact eosinophil count of a patch.
int64_t count_patch(const ClassMask& mask, const CountingRule& rule = {},
                    Connectivity connectivity = Connectivity::kEight);

int64_t total_multiplicity(std::span<const EosPoint> points);

}  // namespace eoscount
