#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "eoscount/geometry.hpp"

namespace eoscount {

struct Rgb {
  uint8_t r = 0;
  uint8_t g = 0;
  uint8_t b = 0;
  friend constexpr bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kWhite{255, 255, 255};

/// 8-bit RGB image, row-major, interleaved channels.
class RgbRaster {
 public:
  RgbRaster() = default;
  RgbRaster(int64_t width, int64_t height, Rgb fill = kWhite);
  RgbRaster(int64_t width, int64_t height, std::vector<uint8_t> interleaved);

  int64_t width() const { return width_; }
  int64_t height() const { return height_; }
  int64_t pixel_count() const { return width_ * height_; }
  bool empty() const { return pixel_count() == 0; }

  Rgb at(int64_t x, int64_t y) const {
    const uint8_t* p = &data_[offset(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int64_t x, int64_t y, Rgb c) {
    uint8_t* p = &data_[offset(x, y)];
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  std::span<const uint8_t> row(int64_t y) const {
    return {data_.data() + static_cast<size_t>(y * width_ * 3), static_cast<size_t>(width_ * 3)};
  }
  std::span<uint8_t> row(int64_t y) {
    return {data_.data() + static_cast<size_t>(y * width_ * 3), static_cast<size_t>(width_ * 3)};
  }
  std::span<const uint8_t> bytes() const { return data_; }
  std::span<uint8_t> bytes() { return data_; }

  /// Copy of the sub-rectangle `r`, which must lie inside the raster.
  RgbRaster crop(const Rect& r) const;
  /// Copies `src` into this raster with its top-left corner at (x, y).
  void paste(const RgbRaster& src, int64_t x, int64_t y);

  friend bool operator==(const RgbRaster&, const RgbRaster&) = default;

 private:
  size_t offset(int64_t x, int64_t y) const { return static_cast<size_t>((y * width_ + x) * 3); }

  int64_t width_ = 0;
  int64_t height_ = 0;
  std::vector<uint8_t> data_;
};

/// Per-pixel tri-class label.
enum class Label : uint8_t { kNonEos = 0, kIntact = 1, kNotIntact = 2 };

/// The two eosinophil classes; used wherever a single foreground channel is meant.
enum class EosClass : uint8_t { kIntact = 1, kNotIntact = 2 };

inline constexpr Label to_label(EosClass c) { return static_cast<Label>(c); }

/// One-byte-per-pixel binary image with values {0, 1}.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int64_t width, int64_t height) : width_(width), height_(height), bits_(static_cast<size_t>(width * height), 0) {}

  int64_t width() const { return width_; }
  int64_t height() const { return height_; }

  bool at(int64_t x, int64_t y) const { return bits_[static_cast<size_t>(y * width_ + x)] != 0; }
  void set(int64_t x, int64_t y, bool v = true) { bits_[static_cast<size_t>(y * width_ + x)] = v ? 1 : 0; }

  std::span<const uint8_t> row(int64_t y) const {
    return {bits_.data() + static_cast<size_t>(y * width_), static_cast<size_t>(width_)};
  }
  std::span<uint8_t> row(int64_t y) {
    return {bits_.data() + static_cast<size_t>(y * width_), static_cast<size_t>(width_)};
  }
  std::span<const uint8_t> bytes() const { return bits_; }

  int64_t count() const;
  BinaryMask crop(const Rect& r) const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int64_t width_ = 0;
  int64_t height_ = 0;
  std::vector<uint8_t> bits_;
};

/// Per-pixel label raster aligned to a slide or patch.
class ClassMask {
 public:
  ClassMask() = default;
  ClassMask(int64_t width, int64_t height, Label fill = Label::kNonEos)
      : width_(width), height_(height), labels_(static_cast<size_t>(width * height), static_cast<uint8_t>(fill)) {}
  /// Takes ownership of raw label bytes; throws FormatError if any value is outside {0,1,2}.
  ClassMask(int64_t width, int64_t height, std::vector<uint8_t> labels);

  int64_t width() const { return width_; }
  int64_t height() const { return height_; }
  int64_t pixel_count() const { return width_ * height_; }

  Label at(int64_t x, int64_t y) const { return static_cast<Label>(labels_[static_cast<size_t>(y * width_ + x)]); }
  void set(int64_t x, int64_t y, Label l) { labels_[static_cast<size_t>(y * width_ + x)] = static_cast<uint8_t>(l); }

  std::span<const uint8_t> row(int64_t y) const {
    return {labels_.data() + static_cast<size_t>(y * width_), static_cast<size_t>(width_)};
  }
  std::span<uint8_t> row(int64_t y) {
    return {labels_.data() + static_cast<size_t>(y * width_), static_cast<size_t>(width_)};
  }
  std::span<const uint8_t> bytes() const { return labels_; }

  /// Binary view of one class. The two channel views never share a pixel.
  BinaryMask channel(EosClass c) const;

  ClassMask crop(const Rect& r) const;
  void paste(const ClassMask& src, int64_t x, int64_t y);

  friend bool operator==(const ClassMask&, const ClassMask&) = default;

 private:
  int64_t width_ = 0;
  int64_t height_ = 0;
  std::vector<uint8_t> labels_;
};

}  // namespace eoscount
