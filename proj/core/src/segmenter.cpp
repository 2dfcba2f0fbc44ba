#include "eoscount/segmenter.hpp"

#include <cmath>

#include "eoscount/errors.hpp"

namespace eoscount {

void ProbMap::validate() const {
  const size_t n = static_cast<size_t>(width * height);
  if (width < 0 || height < 0 || p_intact.size() != n || p_not_intact.size() != n) {
    throw InvalidArgument("probability map size mismatch");
  }
  for (size_t i = 0; i < n; ++i) {
    const float a = p_intact[i];
    const float b = p_not_intact[i];
    if (!(a >= 0.0f && a <= 1.0f) || !(b >= 0.0f && b <= 1.0f)) {
      throw InvalidArgument("probability outside [0, 1] or NaN");
    }
  }
}

void SegmenterConfig::validate() const {
  if (!(prob_threshold > 0.0 && prob_threshold < 1.0)) throw InvalidArgument("prob_threshold must lie in (0, 1)");
}

ProbMap OracleSegmenter::segment(const RgbRaster& patch, const Rect&) const {
  ProbMap out(patch.width(), patch.height());
  size_t i = 0;
  for (int64_t y = 0; y < patch.height(); ++y) {
    auto row = patch.row(y);
    for (size_t k = 0; k < row.size(); k += 3, ++i) {
      const Rgb c{row[k], row[k + 1], row[k + 2]};
      if (c == kIntactColor) {
        out.p_intact[i] = 1.0f;
      } else if (c == kNotIntactColor) {
        out.p_not_intact[i] = 1.0f;
      }
    }
  }
  return out;
}

MaskFileSegmenter::MaskFileSegmenter(std::shared_ptr<const LabelSource> masks, int64_t input_size)
    : masks_(std::move(masks)), input_size_(input_size) {
  if (!masks_) throw InvalidArgument("mask source is null");
}

std::unique_ptr<MaskFileSegmenter> MaskFileSegmenter::open(const std::filesystem::path& container,
                                                           int64_t input_size) {
  return std::make_unique<MaskFileSegmenter>(TiledMask::open(container), input_size);
}

ProbMap MaskFileSegmenter::segment(const RgbRaster& patch, const Rect& source) const {
  if (source.w > patch.width() || source.h > patch.height()) {
    throw InvalidArgument("source rectangle larger than the patch");
  }
  ProbMap out(patch.width(), patch.height());
  if (source.empty()) return out;
  const ClassMask labels = masks_->read_labels(source);
  for (int64_t y = 0; y < source.h; ++y) {
    auto row = labels.row(y);
    for (int64_t x = 0; x < source.w; ++x) {
      const size_t i = static_cast<size_t>(y * patch.width() + x);
      const auto l = static_cast<Label>(row[static_cast<size_t>(x)]);
      if (l == Label::kIntact) out.p_intact[i] = 1.0f;
      if (l == Label::kNotIntact) out.p_not_intact[i] = 1.0f;
    }
  }
  return out;
}

ProbMap segment_patch(const Segmenter& backend, const RgbRaster& patch, const Rect& source) {
  if (patch.width() != backend.input_size() || patch.height() != backend.input_size()) {
    throw InvalidArgument("patch is " + std::to_string(patch.width()) + "x" + std::to_string(patch.height()) +
                          " but backend '" + backend.name() + "' expects " + std::to_string(backend.input_size()) +
                          "x" + std::to_string(backend.input_size()));
  }
  ProbMap p = backend.segment(patch, source);
  if (p.width != patch.width() || p.height != patch.height()) {
    throw Error("backend '" + backend.name() + "' returned a probability map of the wrong size");
  }
  return p;
}

ProbMap segment_patch(const Segmenter& backend, const RgbRaster& patch) {
  return segment_patch(backend, patch, Rect{0, 0, patch.width(), patch.height()});
}

BinaryChannels binarize(const ProbMap& p, const SegmenterConfig& cfg) {
  BinaryChannels out{BinaryMask(p.width, p.height), BinaryMask(p.width, p.height)};
  const auto t = static_cast<float>(cfg.prob_threshold);
  for (int64_t y = 0; y < p.height; ++y) {
    auto a = out.intact.row(y);
    auto b = out.not_intact.row(y);
    for (int64_t x = 0; x < p.width; ++x) {
      const size_t i = static_cast<size_t>(y * p.width + x);
      a[static_cast<size_t>(x)] = p.p_intact[i] >= t;
      b[static_cast<size_t>(x)] = p.p_not_intact[i] >= t;
    }
  }
  return out;
}

ClassMask resolve_overlap(const BinaryMask& intact, const BinaryMask& not_intact, OverlapPrecedence) {
  if (intact.width() != not_intact.width() || intact.height() != not_intact.height()) {
    throw InvalidArgument("channels differ in size");
  }
  ClassMask out(intact.width(), intact.height());
  for (int64_t y = 0; y < intact.height(); ++y) {
    auto a = intact.row(y);
    auto b = not_intact.row(y);
    auto dst = out.row(y);
    for (size_t x = 0; x < dst.size(); ++x) {
      dst[x] = a[x] ? uint8_t{1} : (b[x] ? uint8_t{2} : uint8_t{0});
    }
  }
  return out;
}

}  // namespace eoscount
