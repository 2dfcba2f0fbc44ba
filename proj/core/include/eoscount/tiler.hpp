#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "eoscount/bitplane.hpp"
#include "eoscount/geometry.hpp"
#include "eoscount/raster.hpp"
#include "eoscount/slide.hpp"

namespace eoscount {

struct TilerConfig {
  int64_t patch_size = 448;
  /// A pixel is background when all three channels are at least this value.
  uint8_t background_pixel_threshold = 200;
  /// Patches whose background fraction reaches this limit are skipped.
  double background_fraction_limit = 0.85;

  void validate() const;
};

/// Evenly spaced patch offsets along one axis of length `length`.
///
/// n = max(1, ceil(L / P)) offsets, offset_i = round(i * (L - P) / (n - 1)).
/// The first offset is 0, the last is max(0, L - P), consecutive offsets are
/// at most P apart, so [offset, offset + P) covers [0, L).
std::vector<int64_t> plan_grid(int64_t length, int64_t patch);

struct GridPlan {
  int64_t patch_size = 0;
  std::vector<int64_t> offsets_x;
  std::vector<int64_t> offsets_y;

  static GridPlan for_raster(int64_t width, int64_t height, int64_t patch_size);
  size_t size() const { return offsets_x.size() * offsets_y.size(); }
  /// Patch rectangles in row-major order, clipped to the raster.
  std::vector<Rect> patches(int64_t width, int64_t height) const;
};

double background_fraction(const RgbRaster& patch, const TilerConfig& cfg);
bool is_informative(double background_fraction, const TilerConfig& cfg);
bool is_informative(const RgbRaster& patch, const TilerConfig& cfg);

/// Pads `patch` on the right and bottom with white to `size` x `size`.
RgbRaster pad_patch(const RgbRaster& patch, int64_t size);

/// Per-class OR accumulation of patch masks into slide-sized bit planes.
/// Safe for concurrent fuse() calls.
class FusedMask final : public LabelSource {
 public:
  FusedMask() = default;
  FusedMask(int64_t width, int64_t height, int64_t heap_limit_bytes = INT64_MAX);

  FusedMask(FusedMask&&) noexcept = default;
  FusedMask& operator=(FusedMask&&) noexcept = default;

  int64_t width() const override { return intact_.width(); }
  int64_t height() const override { return intact_.height(); }

  /// ORs the two channels into the planes with their top-left corner at (x, y).
  /// Throws InvalidArgument when the patch does not fit.
  void fuse(const BinaryMask& intact, const BinaryMask& not_intact, int64_t x, int64_t y);

  const BitPlane& intact() const { return intact_; }
  const BitPlane& not_intact() const { return not_intact_; }

  /// Resolved label with intact precedence.
  Label label_at(int64_t x, int64_t y) const;
  /// Resolved labels of `r`.
  ClassMask labels(const Rect& r) const;
  ClassMask read_labels(const Rect& r) const override { return labels(r); }

 private:
  BitPlane intact_;
  BitPlane not_intact_;
};

struct PatchMask {
  BinaryMask intact;
  BinaryMask not_intact;
  int64_t x = 0;
  int64_t y = 0;
};

/// fuse_masks: OR of all patches; pixels covered by no patch stay 0.
FusedMask fuse_masks(std::span<const PatchMask> patches, int64_t slide_width, int64_t slide_height);

}  // namespace eoscount
