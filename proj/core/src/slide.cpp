#include "eoscount/slide.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <list>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "eoscount/errors.hpp"
#include "png_io.hpp"

namespace eoscount {

namespace fs = std::filesystem;
using nlohmann::json;

void SlideMeta::validate() const {
  if (width_px < 1 || width_px > kMaxSlideDimension || height_px < 1 || height_px > kMaxSlideDimension) {
    throw InvalidArgument("slide dimensions must lie in [1, 2^20], got " + std::to_string(width_px) + "x" +
                          std::to_string(height_px));
  }
  if (!std::isfinite(microns_per_pixel) || microns_per_pixel <= 0.0) {
    throw InvalidArgument("microns_per_pixel must be finite and positive");
  }
  if (tile_size < 1) throw InvalidArgument("tile_size must be >= 1");
}

std::vector<Rect> tile_grid(const SlideMeta& meta) {
  std::vector<Rect> out;
  for (int64_t y = 0; y < meta.height_px; y += meta.tile_size) {
    for (int64_t x = 0; x < meta.width_px; x += meta.tile_size) {
      out.push_back({x, y, std::min(meta.tile_size, meta.width_px - x), std::min(meta.tile_size, meta.height_px - y)});
    }
  }
  return out;
}

std::vector<Rect> tiles_intersecting(const SlideMeta& meta, const Rect& r) {
  std::vector<Rect> out;
  if (r.empty()) return out;
  const int64_t t = meta.tile_size;
  const int64_t tx0 = std::max<int64_t>(0, r.x) / t;
  const int64_t ty0 = std::max<int64_t>(0, r.y) / t;
  const int64_t tx1 = (std::min(r.right(), meta.width_px) - 1) / t;
  const int64_t ty1 = (std::min(r.bottom(), meta.height_px) - 1) / t;
  for (int64_t ty = ty0; ty <= ty1; ++ty) {
    for (int64_t tx = tx0; tx <= tx1; ++tx) {
      const int64_t x = tx * t;
      const int64_t y = ty * t;
      out.push_back({x, y, std::min(t, meta.width_px - x), std::min(t, meta.height_px - y)});
    }
  }
  return out;
}

namespace {

fs::path manifest_file(const fs::path& path) {
  if (fs::is_directory(path)) return path / "manifest.json";
  return path;
}

template <typename T>
T field(const json& j, const char* name) {
  if (!j.contains(name)) throw FormatError(std::string("manifest missing field '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string("manifest field '") + name + "' has the wrong type");
  }
}

}  // namespace

Manifest read_manifest(const fs::path& path) {
  const fs::path file = manifest_file(path);
  std::ifstream in(file);
  if (!in) throw IoError("manifest not found: " + file.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("corrupt manifest " + file.string() + ": " + e.what());
  }
  if (!j.is_object()) throw FormatError("manifest is not a JSON object: " + file.string());

  Manifest m;
  m.meta.id = field<std::string>(j, "id");
  m.meta.width_px = field<int64_t>(j, "width_px");
  m.meta.height_px = field<int64_t>(j, "height_px");
  if (j.contains("microns_per_pixel") && !j.at("microns_per_pixel").is_null()) {
    m.meta.microns_per_pixel = field<double>(j, "microns_per_pixel");
  }
  m.meta.tile_size = field<int64_t>(j, "tile_size");
  try {
    m.meta.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("invalid manifest: ") + e.what());
  }

  const json& tiles = j.contains("tiles") ? j.at("tiles") : json();
  if (!tiles.is_array()) throw FormatError("manifest field 'tiles' must be an array");
  std::set<std::pair<int64_t, int64_t>> seen;
  for (const json& t : tiles) {
    TileEntry e{field<int64_t>(t, "x"), field<int64_t>(t, "y"), field<std::string>(t, "file")};
    if (e.x < 0 || e.y < 0 || e.x >= m.meta.width_px || e.y >= m.meta.height_px) {
      throw FormatError("tile at (" + std::to_string(e.x) + "," + std::to_string(e.y) + ") lies outside the slide");
    }
    if (e.x % m.meta.tile_size != 0 || e.y % m.meta.tile_size != 0) {
      throw FormatError("tile at (" + std::to_string(e.x) + "," + std::to_string(e.y) +
                        ") is not aligned to tile_size (overlapping layout)");
    }
    if (!seen.emplace(e.x, e.y).second) {
      throw FormatError("duplicate tile at (" + std::to_string(e.x) + "," + std::to_string(e.y) + ")");
    }
    m.tiles.push_back(std::move(e));
  }
  const auto grid = tile_grid(m.meta);
  if (seen.size() != grid.size()) {
    throw FormatError("tile layout has gaps: expected " + std::to_string(grid.size()) + " tiles, found " +
                      std::to_string(seen.size()));
  }
  std::sort(m.tiles.begin(), m.tiles.end(),
            [](const TileEntry& a, const TileEntry& b) { return std::tie(a.y, a.x) < std::tie(b.y, b.x); });
  return m;
}

void write_manifest(const Manifest& manifest, const fs::path& dir) {
  json j;
  j["id"] = manifest.meta.id;
  j["width_px"] = manifest.meta.width_px;
  j["height_px"] = manifest.meta.height_px;
  j["microns_per_pixel"] = manifest.meta.microns_per_pixel;
  j["tile_size"] = manifest.meta.tile_size;
  json tiles = json::array();
  for (const auto& t : manifest.tiles) tiles.push_back({{"x", t.x}, {"y", t.y}, {"file", t.file}});
  j["tiles"] = std::move(tiles);
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
}

namespace {

void check_region(const Rect& r, int64_t w, int64_t h) {
  if (r.x < 0 || r.y < 0 || r.w < 1 || r.h < 1 || r.right() > w || r.bottom() > h) {
    throw InvalidArgument("region (" + std::to_string(r.x) + "," + std::to_string(r.y) + "," + std::to_string(r.w) +
                          "," + std::to_string(r.h) + ") is out of bounds");
  }
}

}  // namespace

InMemorySlide::InMemorySlide(SlideMeta meta, RgbRaster pixels) : meta_(std::move(meta)), pixels_(std::move(pixels)) {
  meta_.validate();
  if (pixels_.width() != meta_.width_px || pixels_.height() != meta_.height_px) {
    throw InvalidArgument("raster dimensions differ from slide metadata");
  }
}

RgbRaster InMemorySlide::read_region(const Rect& r) const {
  check_region(r, meta_.width_px, meta_.height_px);
  return pixels_.crop(r);
}

ClassMask InMemoryMask::read_labels(const Rect& r) const {
  check_region(r, mask_.width(), mask_.height());
  return mask_.crop(r);
}

namespace detail {

// Manifest plus an LRU cache of decoded tiles. Decoding happens outside the
// lock; a tile that two threads race to decode is inserted once.
class TileStore {
 public:
  using TilePtr = std::shared_ptr<const std::vector<uint8_t>>;

  TileStore(const fs::path& path, int channels, size_t capacity)
      : dir_(fs::is_directory(path) ? path : path.parent_path()),
        manifest_(read_manifest(path)),
        channels_(channels),
        capacity_(std::max<size_t>(capacity, 1)) {
    const int64_t t = manifest_.meta.tile_size;
    tiles_per_row_ = (manifest_.meta.width_px + t - 1) / t;
    files_.resize(manifest_.tiles.size());
    for (const auto& e : manifest_.tiles) {
      const size_t idx = static_cast<size_t>((e.y / t) * tiles_per_row_ + e.x / t);
      files_[idx] = dir_ / e.file;
      if (!fs::exists(files_[idx])) throw IoError("tile not found: " + files_[idx].string());
      const png::Header h = png::read_header(files_[idx]);
      check_tile(h, e.x, e.y, files_[idx]);
    }
  }

  const SlideMeta& meta() const { return manifest_.meta; }
  int channels() const { return channels_; }
  int64_t decoded() const { return decoded_.load(); }

  void clear() {
    std::lock_guard lock(mu_);
    lru_.clear();
    index_.clear();
  }

  // Copies the pixels of `r` into `dst` (row-major, channels_ bytes per pixel).
  void read(const Rect& r, std::span<uint8_t> dst) {
    check_region(r, manifest_.meta.width_px, manifest_.meta.height_px);
    const int64_t stride = r.w * channels_;
    for (const Rect& tile : tiles_intersecting(manifest_.meta, r)) {
      TilePtr data = get(tile);
      const Rect part = *intersect(tile, r);
      for (int64_t y = part.y; y < part.bottom(); ++y) {
        const uint8_t* src = data->data() + ((y - tile.y) * tile.w + (part.x - tile.x)) * channels_;
        uint8_t* out = dst.data() + (y - r.y) * stride + (part.x - r.x) * channels_;
        std::memcpy(out, src, static_cast<size_t>(part.w * channels_));
      }
    }
  }

 private:
  void check_tile(const png::Header& h, int64_t x, int64_t y, const fs::path& file) const {
    const int64_t t = manifest_.meta.tile_size;
    const int64_t ew = std::min(t, manifest_.meta.width_px - x);
    const int64_t eh = std::min(t, manifest_.meta.height_px - y);
    if (h.width != ew || h.height != eh) {
      throw FormatError("tile dimension mismatch for " + file.string() + ": expected " + std::to_string(ew) + "x" +
                        std::to_string(eh) + ", found " + std::to_string(h.width) + "x" + std::to_string(h.height));
    }
    if (h.channels != channels_) {
      throw FormatError("tile " + file.string() + " has " + std::to_string(h.channels) + " channel(s), expected " +
                        std::to_string(channels_));
    }
  }

  TilePtr get(const Rect& tile) {
    const int64_t t = manifest_.meta.tile_size;
    const int64_t idx = (tile.y / t) * tiles_per_row_ + tile.x / t;
    {
      std::lock_guard lock(mu_);
      if (auto it = index_.find(idx); it != index_.end()) {
        lru_.splice(lru_.begin(), lru_, it->second);
        return it->second->second;
      }
    }
    const fs::path& file = files_[static_cast<size_t>(idx)];
    png::Image img = png::read(file);
    check_tile(img.header, tile.x, tile.y, file);
    if (channels_ == 1) {
      for (uint8_t v : img.pixels) {
        if (v > 2) throw FormatError("mask tile " + file.string() + " holds label " + std::to_string(v));
      }
    }
    decoded_.fetch_add(1);
    auto data = std::make_shared<const std::vector<uint8_t>>(std::move(img.pixels));

    std::lock_guard lock(mu_);
    if (auto it = index_.find(idx); it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
    lru_.emplace_front(idx, data);
    index_[idx] = lru_.begin();
    while (lru_.size() > capacity_) {
      index_.erase(lru_.back().first);
      lru_.pop_back();
    }
    return data;
  }

  fs::path dir_;
  Manifest manifest_;
  int channels_;
  size_t capacity_;
  int64_t tiles_per_row_ = 0;
  std::vector<fs::path> files_;

  std::mutex mu_;
  std::list<std::pair<int64_t, TilePtr>> lru_;
  std::unordered_map<int64_t, std::list<std::pair<int64_t, TilePtr>>::iterator> index_;
  std::atomic<int64_t> decoded_{0};
};

}  // namespace detail

std::shared_ptr<TiledSlide> TiledSlide::open(const fs::path& path, size_t cache_tiles) {
  auto store = std::make_unique<detail::TileStore>(path, 3, cache_tiles);
  return std::shared_ptr<TiledSlide>(new TiledSlide(std::move(store)));
}

TiledSlide::TiledSlide(std::unique_ptr<detail::TileStore> store) : store_(std::move(store)) {}
TiledSlide::~TiledSlide() = default;

const SlideMeta& TiledSlide::meta() const { return store_->meta(); }

RgbRaster TiledSlide::read_region(const Rect& r) const {
  check_region(r, meta().width_px, meta().height_px);
  std::vector<uint8_t> buf(static_cast<size_t>(r.w * r.h * 3));
  store_->read(r, buf);
  return RgbRaster(r.w, r.h, std::move(buf));
}

int64_t TiledSlide::tiles_decoded() const { return store_->decoded(); }
void TiledSlide::clear_cache() const { store_->clear(); }

std::shared_ptr<TiledMask> TiledMask::open(const fs::path& path, size_t cache_tiles) {
  auto store = std::make_unique<detail::TileStore>(path, 1, cache_tiles);
  return std::shared_ptr<TiledMask>(new TiledMask(std::move(store)));
}

TiledMask::TiledMask(std::unique_ptr<detail::TileStore> store) : store_(std::move(store)) {}
TiledMask::~TiledMask() = default;

const SlideMeta& TiledMask::meta() const { return store_->meta(); }
int64_t TiledMask::width() const { return store_->meta().width_px; }
int64_t TiledMask::height() const { return store_->meta().height_px; }
int64_t TiledMask::tiles_decoded() const { return store_->decoded(); }

ClassMask TiledMask::read_labels(const Rect& r) const {
  check_region(r, width(), height());
  std::vector<uint8_t> buf(static_cast<size_t>(r.w * r.h));
  store_->read(r, buf);
  return ClassMask(r.w, r.h, std::move(buf));
}

std::shared_ptr<TiledSlide> open_slide(const fs::path& manifest_path) { return TiledSlide::open(manifest_path); }

ClassMask read_mask(const fs::path& path) {
  auto mask = TiledMask::open(path, 1);
  return mask->read_labels({0, 0, mask->width(), mask->height()});
}

namespace {

std::string tile_name(int64_t x, int64_t y) {
  std::ostringstream s;
  s << "tile_" << y << "_" << x << ".png";
  return s.str();
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

template <typename TileFn>
void write_container(const SlideMeta& meta, const fs::path& out_dir, int channels, TileFn&& tile_bytes) {
  meta.validate();
  prepare_dir(out_dir);
  Manifest m{meta, {}};
  for (const Rect& t : tile_grid(meta)) {
    const std::string name = tile_name(t.x, t.y);
    const std::vector<uint8_t> bytes = tile_bytes(t);
    png::write(out_dir / name, t.w, t.h, channels, bytes);
    m.tiles.push_back({t.x, t.y, name});
  }
  write_manifest(m, out_dir);
}

}  // namespace

void write_mask(const ClassMask& mask, const SlideMeta& meta, const fs::path& out_dir) {
  if (mask.width() != meta.width_px || mask.height() != meta.height_px) {
    throw InvalidArgument("mask dimensions " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
                          " differ from slide " + std::to_string(meta.width_px) + "x" +
                          std::to_string(meta.height_px));
  }
  write_container(meta, out_dir, 1, [&](const Rect& t) {
    std::vector<uint8_t> bytes(static_cast<size_t>(t.w * t.h));
    for (int64_t y = 0; y < t.h; ++y) {
      std::memcpy(bytes.data() + y * t.w, mask.row(t.y + y).data() + t.x, static_cast<size_t>(t.w));
    }
    return bytes;
  });
}

void write_mask(const LabelSource& labels, const SlideMeta& meta, const fs::path& out_dir) {
  if (labels.width() != meta.width_px || labels.height() != meta.height_px) {
    throw InvalidArgument("mask dimensions differ from slide");
  }
  write_container(meta, out_dir, 1, [&](const Rect& t) {
    ClassMask tile = labels.read_labels(t);
    return std::vector<uint8_t>(tile.bytes().begin(), tile.bytes().end());
  });
}

void write_slide(const SlideSource& source, const fs::path& out_dir) {
  write_container(source.meta(), out_dir, 3, [&](const Rect& t) {
    RgbRaster tile = source.read_region(t);
    return std::vector<uint8_t>(tile.bytes().begin(), tile.bytes().end());
  });
}

}  // namespace eoscount
