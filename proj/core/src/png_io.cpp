#include "png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <string>

#include "eoscount/errors.hpp"

namespace eoscount::png {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    if (mode[0] == 'r' && !std::filesystem::exists(path)) {
      throw IoError("tile not found: " + path.string());
    }
    throw IoError("cannot open " + path.string());
  }
  return f;
}

[[noreturn]] void on_png_error(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

// libpng reports errors through longjmp; every function below keeps only
// trivially destructible locals between setjmp and the libpng calls.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), file_(open_file(path, "rb")) {
    uint8_t sig[8];
    if (std::fread(sig, 1, 8, file_.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
      throw FormatError("not a PNG file: " + path.string());
    }
    png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error_, on_png_error, on_png_warning);
    if (!png_) throw Error("png_create_read_struct failed");
    info_ = png_create_info_struct(png_);
    if (!info_) {
      png_destroy_read_struct(&png_, nullptr, nullptr);
      throw Error("png_create_info_struct failed");
    }
    png_init_io(png_, file_.get());
    png_set_sig_bytes(png_, 8);
  }
  ~Reader() { png_destroy_read_struct(&png_, &info_, nullptr); }
  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  Header header() {
    if (setjmp(png_jmpbuf(png_))) fail();
    png_read_info(png_, info_);
    const int color = png_get_color_type(png_, info_);
    const int depth = png_get_bit_depth(png_, info_);
    Header h;
    h.width = png_get_image_width(png_, info_);
    h.height = png_get_image_height(png_, info_);
    if (depth != 8 || (color != PNG_COLOR_TYPE_RGB && color != PNG_COLOR_TYPE_GRAY)) {
      throw FormatError("unsupported PNG layout (need 8-bit RGB or gray): " + path_.string());
    }
    h.channels = color == PNG_COLOR_TYPE_RGB ? 3 : 1;
    return h;
  }

  void rows(const Header& h, std::vector<uint8_t>& out) {
    out.resize(static_cast<size_t>(h.width * h.height * h.channels));
    const size_t stride = static_cast<size_t>(h.width * h.channels);
    if (setjmp(png_jmpbuf(png_))) fail();
    if (png_get_interlace_type(png_, info_) != PNG_INTERLACE_NONE) {
      png_set_interlace_handling(png_);
      png_read_update_info(png_, info_);
    }
    for (int64_t y = 0; y < h.height; ++y) {
      png_read_row(png_, out.data() + static_cast<size_t>(y) * stride, nullptr);
    }
    png_read_end(png_, nullptr);
  }

 private:
  [[noreturn]] void fail() { throw FormatError("corrupt PNG " + path_.string() + ": " + error_); }

  std::filesystem::path path_;
  FilePtr file_;
  std::string error_;
  png_structp png_ = nullptr;
  png_infop info_ = nullptr;
};

}  // namespace

Header read_header(const std::filesystem::path& path) {
  Reader r(path);
  return r.header();
}

Image read(const std::filesystem::path& path) {
  Reader r(path);
  Image img;
  img.header = r.header();
  r.rows(img.header, img.pixels);
  return img;
}

void write(const std::filesystem::path& path, int64_t width, int64_t height, int channels,
           const std::function<std::span<const uint8_t>(int64_t)>& row_at) {
  if (channels != 1 && channels != 3) throw InvalidArgument("PNG channels must be 1 or 3");
  FilePtr file = open_file(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png_create_info_struct failed");
  }
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};

  if (setjmp(png_jmpbuf(png))) {
    throw IoError("failed writing " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, 1);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < height; ++y) {
    std::span<const uint8_t> row = row_at(y);
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  if (std::fflush(file.get()) != 0) throw IoError("failed writing " + path.string());
}

void write(const std::filesystem::path& path, int64_t width, int64_t height, int channels,
           std::span<const uint8_t> pixels) {
  const size_t stride = static_cast<size_t>(width * channels);
  write(path, width, height, channels,
        [&](int64_t y) { return pixels.subspan(static_cast<size_t>(y) * stride, stride); });
}

}  // namespace eoscount::png
