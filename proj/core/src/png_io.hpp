#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace eoscount::png {

struct Header {
  int64_t width = 0;
  int64_t height = 0;
  int channels = 0;  // 1 = gray, 3 = RGB
};

struct Image {
  Header header;
  std::vector<uint8_t> pixels;  // row-major, `channels` bytes per pixel
};

Header read_header(const std::filesystem::path& path);
Image read(const std::filesystem::path& path);

/// Writes an 8-bit PNG. `row_at(y)` must return a span of width*channels bytes.
void write(const std::filesystem::path& path, int64_t width, int64_t height, int channels,
           const std::function<std::span<const uint8_t>(int64_t)>& row_at);

void write(const std::filesystem::path& path, int64_t width, int64_t height, int channels,
           std::span<const uint8_t> pixels);

}  // namespace eoscount::png
