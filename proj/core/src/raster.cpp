#include "eoscount/raster.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "eoscount/errors.hpp"

namespace eoscount {
namespace {

void check_dims(int64_t w, int64_t h) {
  if (w < 0 || h < 0) throw InvalidArgument("raster dimensions must be non-negative");
}

void check_crop(const Rect& r, int64_t w, int64_t h) {
  if (r.x < 0 || r.y < 0 || r.w < 0 || r.h < 0 || r.right() > w || r.bottom() > h) {
    throw InvalidArgument("crop rectangle outside raster");
  }
}

}  // namespace

RgbRaster::RgbRaster(int64_t width, int64_t height, Rgb fill) : width_(width), height_(height) {
  check_dims(width, height);
  data_.resize(static_cast<size_t>(width * height * 3));
  if (fill.r == fill.g && fill.g == fill.b) {
    std::fill(data_.begin(), data_.end(), fill.r);
  } else {
    for (size_t i = 0; i < data_.size(); i += 3) {
      data_[i] = fill.r;
      data_[i + 1] = fill.g;
      data_[i + 2] = fill.b;
    }
  }
}

RgbRaster::RgbRaster(int64_t width, int64_t height, std::vector<uint8_t> interleaved)
    : width_(width), height_(height), data_(std::move(interleaved)) {
  check_dims(width, height);
  if (data_.size() != static_cast<size_t>(width * height * 3)) {
    throw InvalidArgument("pixel buffer size does not match width x height x 3");
  }
}

RgbRaster RgbRaster::crop(const Rect& r) const {
  check_crop(r, width_, height_);
  RgbRaster out(r.w, r.h);
  for (int64_t y = 0; y < r.h; ++y) {
    std::memcpy(out.row(y).data(), row(r.y + y).data() + r.x * 3, static_cast<size_t>(r.w * 3));
  }
  return out;
}

void RgbRaster::paste(const RgbRaster& src, int64_t x, int64_t y) {
  check_crop({x, y, src.width(), src.height()}, width_, height_);
  for (int64_t yy = 0; yy < src.height(); ++yy) {
    std::memcpy(row(y + yy).data() + x * 3, src.row(yy).data(), static_cast<size_t>(src.width() * 3));
  }
}

int64_t BinaryMask::count() const {
  return std::count_if(bits_.begin(), bits_.end(), [](uint8_t b) { return b != 0; });
}

BinaryMask BinaryMask::crop(const Rect& r) const {
  check_crop(r, width_, height_);
  BinaryMask out(r.w, r.h);
  for (int64_t y = 0; y < r.h; ++y) {
    std::memcpy(out.row(y).data(), row(r.y + y).data() + r.x, static_cast<size_t>(r.w));
  }
  return out;
}

ClassMask::ClassMask(int64_t width, int64_t height, std::vector<uint8_t> labels)
    : width_(width), height_(height), labels_(std::move(labels)) {
  check_dims(width, height);
  if (labels_.size() != static_cast<size_t>(width * height)) {
    throw InvalidArgument("label buffer size does not match width x height");
  }
  for (uint8_t v : labels_) {
    if (v > 2) throw FormatError("mask label out of range: " + std::to_string(v));
  }
}

BinaryMask ClassMask::channel(EosClass c) const {
  BinaryMask out(width_, height_);
  const auto want = static_cast<uint8_t>(c);
  for (int64_t y = 0; y < height_; ++y) {
    auto src = row(y);
    auto dst = out.row(y);
    for (int64_t x = 0; x < width_; ++x) dst[x] = src[x] == want ? 1 : 0;
  }
  return out;
}

ClassMask ClassMask::crop(const Rect& r) const {
  check_crop(r, width_, height_);
  ClassMask out(r.w, r.h);
  for (int64_t y = 0; y < r.h; ++y) {
    std::memcpy(out.row(y).data(), row(r.y + y).data() + r.x, static_cast<size_t>(r.w));
  }
  return out;
}

void ClassMask::paste(const ClassMask& src, int64_t x, int64_t y) {
  check_crop({x, y, src.width(), src.height()}, width_, height_);
  for (int64_t yy = 0; yy < src.height(); ++yy) {
    std::memcpy(row(y + yy).data() + x, src.row(yy).data(), static_cast<size_t>(src.width()));
  }
}

}  // namespace eoscount
