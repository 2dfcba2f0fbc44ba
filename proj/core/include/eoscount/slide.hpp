#pragma once

// Slide and mask containers.
//
// A container is a directory holding `manifest.json` and a grid of PNG tiles:
//
//   {"id": str, "width_px": int, "height_px": int, "microns_per_pixel": float,
//    "tile_size": int, "tiles": [{"x": int, "y": int, "file": str}, ...]}
//
// Tiles sit at multiples of tile_size and never overlap; edge tiles are
// clipped to the slide. Slide tiles are 8-bit RGB, mask tiles are 8-bit
// grayscale holding labels {0, 1, 2}. Tiles are decoded lazily on first use
// and kept in a bounded LRU cache.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "eoscount/geometry.hpp"
#include "eoscount/raster.hpp"

namespace eoscount {

/// Pixel pitch assumed when a manifest does not carry one. A 0.3 mm^2 field
/// is 2144 px wide at this pitch.
inline constexpr double kDefaultMicronsPerPixel = 0.2555;
inline constexpr int64_t kMaxSlideDimension = int64_t{1} << 20;
inline constexpr int64_t kDefaultTileSize = 1024;

struct SlideMeta {
  std::string id;
  int64_t width_px = 0;
  int64_t height_px = 0;
  double microns_per_pixel = kDefaultMicronsPerPixel;
  int64_t tile_size = kDefaultTileSize;

  Rect bounds() const { return {0, 0, width_px, height_px}; }
  /// Throws InvalidArgument when a field is out of range.
  void validate() const;

  friend bool operator==(const SlideMeta&, const SlideMeta&) = default;
};

struct TileEntry {
  int64_t x = 0;
  int64_t y = 0;
  std::string file;
};

struct Manifest {
  SlideMeta meta;
  std::vector<TileEntry> tiles;
};

/// Parses and validates `dir/manifest.json` (or a path to the manifest file itself).
/// Checks the tile layout is exactly the tile_size grid: no gaps, no overlaps.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& dir);
/// The canonical grid of tile rectangles for a slide, row-major.
std::vector<Rect> tile_grid(const SlideMeta& meta);
/// Tile rectangles of the canonical grid intersecting `r`.
std::vector<Rect> tiles_intersecting(const SlideMeta& meta, const Rect& r);

/// Read-only access to slide pixels. Implementations are safe to share
/// between threads.
class SlideSource {
 public:
  virtual ~SlideSource() = default;
  virtual const SlideMeta& meta() const = 0;
  /// Exactly the pixels in `r`; throws InvalidArgument if `r` leaves the slide.
  virtual RgbRaster read_region(const Rect& r) const = 0;
};

/// Read-only access to per-pixel labels.
class LabelSource {
 public:
  virtual ~LabelSource() = default;
  virtual int64_t width() const = 0;
  virtual int64_t height() const = 0;
  virtual ClassMask read_labels(const Rect& r) const = 0;
};

class InMemorySlide final : public SlideSource {
 public:
  InMemorySlide(SlideMeta meta, RgbRaster pixels);
  const SlideMeta& meta() const override { return meta_; }
  RgbRaster read_region(const Rect& r) const override;
  const RgbRaster& pixels() const { return pixels_; }

 private:
  SlideMeta meta_;
  RgbRaster pixels_;
};

class InMemoryMask final : public LabelSource {
 public:
  explicit InMemoryMask(ClassMask mask) : mask_(std::move(mask)) {}
  int64_t width() const override { return mask_.width(); }
  int64_t height() const override { return mask_.height(); }
  ClassMask read_labels(const Rect& r) const override;

 private:
  ClassMask mask_;
};

namespace detail {
class TileStore;
}

/// Slide container on disk. Opening validates the manifest and each tile
/// header; pixel data is decoded only when a region touching it is read.
class TiledSlide final : public SlideSource {
 public:
  static std::shared_ptr<TiledSlide> open(const std::filesystem::path& path, size_t cache_tiles = 64);
  ~TiledSlide() override;

  const SlideMeta& meta() const override;
  RgbRaster read_region(const Rect& r) const override;

  /// Number of tile decodes performed so far (cache misses).
  int64_t tiles_decoded() const;
  void clear_cache() const;

 private:
  explicit TiledSlide(std::unique_ptr<detail::TileStore> store);
  std::unique_ptr<detail::TileStore> store_;
};

/// Mask container on disk, lazily decoded like TiledSlide.
class TiledMask final : public LabelSource {
 public:
  static std::shared_ptr<TiledMask> open(const std::filesystem::path& path, size_t cache_tiles = 64);
  ~TiledMask() override;

  const SlideMeta& meta() const;
  int64_t width() const override;
  int64_t height() const override;
  ClassMask read_labels(const Rect& r) const override;
  int64_t tiles_decoded() const;

 private:
  explicit TiledMask(std::unique_ptr<detail::TileStore> store);
  std::unique_ptr<detail::TileStore> store_;
};

/// open_slide: alias for TiledSlide::open.
std::shared_ptr<TiledSlide> open_slide(const std::filesystem::path& manifest_path);

/// Reads a whole mask container into memory.
ClassMask read_mask(const std::filesystem::path& path);

/// Writes `mask` as a tiled mask container. Streams one tile at a time.
void write_mask(const ClassMask& mask, const SlideMeta& meta, const std::filesystem::path& out_dir);
/// Streaming variant: pulls one tile at a time from `labels`.
void write_mask(const LabelSource& labels, const SlideMeta& meta, const std::filesystem::path& out_dir);

/// Writes a slide container, pulling one tile at a time from `source`.
void write_slide(const SlideSource& source, const std::filesystem::path& out_dir);

}  // namespace eoscount
