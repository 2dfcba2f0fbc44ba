#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

namespace eoscount {

/// Horizontal run of set pixels [x0, x1) on row y.
struct PixelRun {
  int64_t y = 0;
  int64_t x0 = 0;
  int64_t x1 = 0;
  int64_t length() const { return x1 - x0; }
  friend bool operator==(const PixelRun&, const PixelRun&) = default;
};

/// Slide-sized 1-bit-per-pixel plane, rows padded to 64-bit words.
///
/// Writes are OR-only and atomic per word, so several threads may merge
/// overlapping patches concurrently. Planes larger than `heap_limit_bytes`
/// live in an unlinked temporary file mapped into memory, letting the OS page
/// them out.
class BitPlane {
 public:
  BitPlane() = default;
  BitPlane(int64_t width, int64_t height, int64_t heap_limit_bytes = INT64_MAX);
  ~BitPlane();
  BitPlane(BitPlane&&) noexcept;
  BitPlane& operator=(BitPlane&&) noexcept;
  BitPlane(const BitPlane&) = delete;
  BitPlane& operator=(const BitPlane&) = delete;

  int64_t width() const { return width_; }
  int64_t height() const { return height_; }
  int64_t words_per_row() const { return words_per_row_; }
  int64_t byte_size() const { return words_per_row_ * height_ * 8; }
  bool file_backed() const;

  bool test(int64_t x, int64_t y) const {
    return (row(y)[static_cast<size_t>(x >> 6)] >> (x & 63)) & 1u;
  }
  /// Atomically ORs `bits` into word `word` of row `y`.
  void or_word(int64_t y, int64_t word, uint64_t bits);
  /// Atomically sets a single bit.
  void set(int64_t x, int64_t y) { or_word(y, x >> 6, uint64_t{1} << (x & 63)); }

  std::span<const uint64_t> row(int64_t y) const {
    return {words_ + y * words_per_row_, static_cast<size_t>(words_per_row_)};
  }

  int64_t count() const;

 private:
  struct Storage;

  int64_t width_ = 0;
  int64_t height_ = 0;
  int64_t words_per_row_ = 0;
  uint64_t* words_ = nullptr;
  std::unique_ptr<Storage> storage_;
};

/// Appends the runs of set bits of `word_row & ~exclude` to `out`, tagged
/// with row `y`. `exclude` may be empty.
void append_row_runs(std::span<const uint64_t> word_row, std::span<const uint64_t> exclude, int64_t y,
                     std::vector<PixelRun>& out);

}  // namespace eoscount
