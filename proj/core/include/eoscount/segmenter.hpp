#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "eoscount/geometry.hpp"
#include "eoscount/raster.hpp"
#include "eoscount/slide.hpp"

namespace eoscount {

/// Per-pixel foreground probabilities for the two eosinophil classes.
struct ProbMap {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<float> p_intact;
  std::vector<float> p_not_intact;

  ProbMap() = default;
  ProbMap(int64_t w, int64_t h)
      : width(w), height(h), p_intact(static_cast<size_t>(w * h), 0.0f), p_not_intact(static_cast<size_t>(w * h), 0.0f) {}

  /// Throws InvalidArgument on size mismatch, NaN or values outside [0, 1].
  void validate() const;
};

enum class OverlapPrecedence { kIntactWins };

struct SegmenterConfig {
  /// Inclusive: a pixel is foreground when p >= prob_threshold.
  double prob_threshold = 0.5;
  OverlapPrecedence overlap_precedence = OverlapPrecedence::kIntactWins;

  void validate() const;
};

/// Patch segmentation backend. `source` is the slide rectangle the patch was
/// cut from; it may be smaller than the patch when the patch was padded.
/// Implementations must be safe for concurrent calls.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::string name() const = 0;
  virtual int64_t input_size() const = 0;
  virtual ProbMap segment(const RgbRaster& patch, const Rect& source) const = 0;
};

/// Colour-keyed stand-in for a trained network: pure green is intact,
/// pure red is not-intact, everything else is background.
class OracleSegmenter final : public Segmenter {
 public:
  static constexpr Rgb kIntactColor{0, 255, 0};
  static constexpr Rgb kNotIntactColor{255, 0, 0};

  explicit OracleSegmenter(int64_t input_size = 448) : input_size_(input_size) {}
  std::string name() const override { return "oracle"; }
  int64_t input_size() const override { return input_size_; }
  ProbMap segment(const RgbRaster& patch, const Rect& source) const override;

 private:
  int64_t input_size_;
};

/// Loads stored labels from a mask container; probabilities are exactly 0 or 1.
class MaskFileSegmenter final : public Segmenter {
 public:
  MaskFileSegmenter(std::shared_ptr<const LabelSource> masks, int64_t input_size = 448);
  static std::unique_ptr<MaskFileSegmenter> open(const std::filesystem::path& container, int64_t input_size = 448);

  std::string name() const override { return "masks"; }
  int64_t input_size() const override { return input_size_; }
  ProbMap segment(const RgbRaster& patch, const Rect& source) const override;
  const LabelSource& masks() const { return *masks_; }

 private:
  std::shared_ptr<const LabelSource> masks_;
  int64_t input_size_;
};

/// Runs `backend` after checking the patch size against its input size.
ProbMap segment_patch(const Segmenter& backend, const RgbRaster& patch, const Rect& source);
ProbMap segment_patch(const Segmenter& backend, const RgbRaster& patch);

struct BinaryChannels {
  BinaryMask intact;
  BinaryMask not_intact;
};

BinaryChannels binarize(const ProbMap& p, const SegmenterConfig& cfg);

/// Label 1 where intact is set, else 2 where not-intact is set, else 0.
ClassMask resolve_overlap(const BinaryMask& intact, const BinaryMask& not_intact,
                          OverlapPrecedence precedence = OverlapPrecedence::kIntactWins);

}  // namespace eoscount
