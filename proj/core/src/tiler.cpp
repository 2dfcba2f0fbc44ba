#include "eoscount/tiler.hpp"

#include <cmath>
#include <string>

#include "eoscount/errors.hpp"

namespace eoscount {

void TilerConfig::validate() const {
  if (patch_size < 1) throw InvalidArgument("patch_size must be >= 1");
  if (!(background_fraction_limit > 0.0 && background_fraction_limit <= 1.0)) {
    throw InvalidArgument("background_fraction_limit must lie in (0, 1]");
  }
}

std::vector<int64_t> plan_grid(int64_t length, int64_t patch) {
  if (length < 1 || patch < 1) throw InvalidArgument("plan_grid needs length >= 1 and patch >= 1");
  const int64_t n = std::max<int64_t>(1, (length + patch - 1) / patch);
  std::vector<int64_t> offsets(static_cast<size_t>(n), 0);
  if (n == 1) return offsets;
  const int64_t span = length - patch;  // n > 1 implies length > patch
  const int64_t den = n - 1;
  for (int64_t i = 0; i < n; ++i) {
    // round-half-up of i * span / den in integer arithmetic
    offsets[static_cast<size_t>(i)] = std::max<int64_t>(0, (2 * i * span + den) / (2 * den));
  }
  return offsets;
}

GridPlan GridPlan::for_raster(int64_t width, int64_t height, int64_t patch_size) {
  return {patch_size, plan_grid(width, patch_size), plan_grid(height, patch_size)};
}

std::vector<Rect> GridPlan::patches(int64_t width, int64_t height) const {
  std::vector<Rect> out;
  out.reserve(size());
  for (int64_t oy : offsets_y) {
    for (int64_t ox : offsets_x) {
      out.push_back({ox, oy, std::min(patch_size, width - ox), std::min(patch_size, height - oy)});
    }
  }
  return out;
}

double background_fraction(const RgbRaster& patch, const TilerConfig& cfg) {
  if (patch.empty()) throw InvalidArgument("background_fraction of an empty raster");
  const uint8_t t = cfg.background_pixel_threshold;
  int64_t background = 0;
  for (int64_t y = 0; y < patch.height(); ++y) {
    auto row = patch.row(y);
    for (size_t i = 0; i < row.size(); i += 3) {
      background += (row[i] >= t) & (row[i + 1] >= t) & (row[i + 2] >= t);
    }
  }
  return static_cast<double>(background) / static_cast<double>(patch.pixel_count());
}

bool is_informative(double fraction, const TilerConfig& cfg) { return fraction < cfg.background_fraction_limit; }

bool is_informative(const RgbRaster& patch, const TilerConfig& cfg) {
  return is_informative(background_fraction(patch, cfg), cfg);
}

RgbRaster pad_patch(const RgbRaster& patch, int64_t size) {
  if (patch.width() == size && patch.height() == size) return patch;
  if (patch.width() > size || patch.height() > size) throw InvalidArgument("patch larger than pad size");
  RgbRaster out(size, size, kWhite);
  out.paste(patch, 0, 0);
  return out;
}

FusedMask::FusedMask(int64_t width, int64_t height, int64_t heap_limit_bytes)
    : intact_(width, height, heap_limit_bytes), not_intact_(width, height, heap_limit_bytes) {}

namespace {

void or_channel(BitPlane& plane, const BinaryMask& m, int64_t x, int64_t y) {
  for (int64_t yy = 0; yy < m.height(); ++yy) {
    auto src = m.row(yy);
    uint64_t word = 0;
    int64_t word_index = x >> 6;
    for (int64_t xx = 0; xx < m.width(); ++xx) {
      const int64_t gx = x + xx;
      if ((gx >> 6) != word_index) {
        plane.or_word(y + yy, word_index, word);
        word = 0;
        word_index = gx >> 6;
      }
      if (src[static_cast<size_t>(xx)]) word |= uint64_t{1} << (gx & 63);
    }
    plane.or_word(y + yy, word_index, word);
  }
}

}  // namespace

void FusedMask::fuse(const BinaryMask& intact, const BinaryMask& not_intact, int64_t x, int64_t y) {
  if (intact.width() != not_intact.width() || intact.height() != not_intact.height()) {
    throw InvalidArgument("patch channels differ in size");
  }
  if (x < 0 || y < 0 || x + intact.width() > width() || y + intact.height() > height()) {
    throw InvalidArgument("patch at (" + std::to_string(x) + "," + std::to_string(y) + ") size " +
                          std::to_string(intact.width()) + "x" + std::to_string(intact.height()) +
                          " is out of bounds");
  }
  if (intact.width() == 0 || intact.height() == 0) return;
  or_channel(intact_, intact, x, y);
  or_channel(not_intact_, not_intact, x, y);
}

Label FusedMask::label_at(int64_t x, int64_t y) const {
  if (intact_.test(x, y)) return Label::kIntact;
  if (not_intact_.test(x, y)) return Label::kNotIntact;
  return Label::kNonEos;
}

ClassMask FusedMask::labels(const Rect& r) const {
  if (r.x < 0 || r.y < 0 || r.right() > width() || r.bottom() > height()) {
    throw InvalidArgument("label region out of bounds");
  }
  ClassMask out(r.w, r.h);
  for (int64_t y = 0; y < r.h; ++y) {
    auto in = intact_.row(r.y + y);
    auto ni = not_intact_.row(r.y + y);
    auto dst = out.row(y);
    for (int64_t x = 0; x < r.w; ++x) {
      const int64_t gx = r.x + x;
      const uint64_t bit = uint64_t{1} << (gx & 63);
      const size_t w = static_cast<size_t>(gx >> 6);
      if (in[w] & bit) {
        dst[static_cast<size_t>(x)] = static_cast<uint8_t>(Label::kIntact);
      } else if (ni[w] & bit) {
        dst[static_cast<size_t>(x)] = static_cast<uint8_t>(Label::kNotIntact);
      }
    }
  }
  return out;
}

FusedMask fuse_masks(std::span<const PatchMask> patches, int64_t slide_width, int64_t slide_height) {
  FusedMask fused(slide_width, slide_height);
  for (const PatchMask& p : patches) fused.fuse(p.intact, p.not_intact, p.x, p.y);
  return fused;
}

}  // namespace eoscount
