#include "eoscount/bitplane.hpp"

#include <sys/mman.h>
#include <unistd.h>

#include <atomic>
#include <bit>
#include <cstdio>
#include <cstring>
#include <vector>

#include "eoscount/errors.hpp"

namespace eoscount {

struct BitPlane::Storage {
  std::vector<uint64_t> heap;
  std::FILE* file = nullptr;
  void* map = nullptr;
  size_t map_bytes = 0;

  ~Storage() {
    if (map) munmap(map, map_bytes);
    if (file) std::fclose(file);
  }
};

BitPlane::BitPlane(int64_t width, int64_t height, int64_t heap_limit_bytes)
    : width_(width), height_(height), words_per_row_((width + 63) / 64), storage_(std::make_unique<Storage>()) {
  if (width < 0 || height < 0) throw InvalidArgument("bit plane dimensions must be non-negative");
  const size_t words = static_cast<size_t>(words_per_row_ * height_);
  if (static_cast<int64_t>(words * 8) <= heap_limit_bytes) {
    storage_->heap.assign(words, 0);
    words_ = storage_->heap.data();
    return;
  }
  // tmpfile() is unlinked on close; ftruncate yields zero-filled pages.
  storage_->file = std::tmpfile();
  if (!storage_->file) throw IoError("cannot create paging file for bit plane");
  storage_->map_bytes = std::max<size_t>(words * 8, 8);
  if (ftruncate(fileno(storage_->file), static_cast<off_t>(storage_->map_bytes)) != 0) {
    throw IoError("cannot size paging file for bit plane");
  }
  storage_->map = mmap(nullptr, storage_->map_bytes, PROT_READ | PROT_WRITE, MAP_SHARED, fileno(storage_->file), 0);
  if (storage_->map == MAP_FAILED) {
    storage_->map = nullptr;
    throw IoError("cannot map paging file for bit plane");
  }
  words_ = static_cast<uint64_t*>(storage_->map);
}

BitPlane::~BitPlane() = default;
BitPlane::BitPlane(BitPlane&&) noexcept = default;
BitPlane& BitPlane::operator=(BitPlane&&) noexcept = default;

bool BitPlane::file_backed() const { return storage_ && storage_->map != nullptr; }

void BitPlane::or_word(int64_t y, int64_t word, uint64_t bits) {
  if (bits == 0) return;
  std::atomic_ref<uint64_t> ref(words_[y * words_per_row_ + word]);
  ref.fetch_or(bits, std::memory_order_relaxed);
}

int64_t BitPlane::count() const {
  int64_t n = 0;
  const size_t words = static_cast<size_t>(words_per_row_ * height_);
  for (size_t i = 0; i < words; ++i) n += std::popcount(words_[i]);
  return n;
}

void append_row_runs(std::span<const uint64_t> word_row, std::span<const uint64_t> exclude, int64_t y,
                     std::vector<PixelRun>& out) {
  int64_t open_start = -1;
  for (size_t w = 0; w < word_row.size(); ++w) {
    uint64_t bits = word_row[w];
    if (!exclude.empty()) bits &= ~exclude[w];
    const int64_t base = static_cast<int64_t>(w) * 64;
    if (bits == 0) {
      if (open_start >= 0) {
        out.push_back({y, open_start, base});
        open_start = -1;
      }
      continue;
    }
    if (bits == ~uint64_t{0}) {
      if (open_start < 0) open_start = base;
      continue;
    }
    int64_t pos = 0;
    while (pos < 64) {
      if (open_start >= 0) {
        // Inside a run: find the next clear bit.
        const uint64_t rest = ~bits >> pos;
        if (rest == 0) break;
        const int zeros = std::countr_zero(rest);
        pos += zeros;
        out.push_back({y, open_start, base + pos});
        open_start = -1;
      } else {
        const uint64_t rest = bits >> pos;
        if (rest == 0) break;
        pos += std::countr_zero(rest);
        open_start = base + pos;
      }
    }
  }
  if (open_start >= 0) out.push_back({y, open_start, static_cast<int64_t>(word_row.size()) * 64});
}

}  // namespace eoscount
