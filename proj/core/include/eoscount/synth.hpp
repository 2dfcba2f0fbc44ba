#pragma once

// Synthetic slides with planted eosinophil blobs and exact ground truth.
//
// Blobs are rasterised ellipses drawn in the oracle colour key (pure green
// intact, pure red not-intact) on a noisy pink tissue tone, optionally framed
// by white glass margins. Pixels are rendered on demand from (seed, x, y), so
// slides of any size can be streamed without materialising them.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eoscount/bitplane.hpp"
#include "eoscount/counter.hpp"
#include "eoscount/pec.hpp"
#include "eoscount/slide.hpp"

namespace eoscount {

struct BlobSpec {
  EosClass cls = EosClass::kIntact;
  double cx = 0.0;
  double cy = 0.0;
  int64_t target_area_px = 2050;
  double aspect_ratio = 1.0;  // in [0.5, 2]
  double rotation = 0.0;      // radians
};

struct RasterBlob {
  BlobSpec spec;
  std::vector<PixelRun> runs;  // one per row, top to bottom
  Rect bbox;
  int64_t area_px = 0;
  double cx = 0.0;  // centroid of the rasterised pixels
  double cy = 0.0;
};

/// Rasterises an ellipse whose pixel count is as close as possible to the
/// target. Throws InvalidArgument when the aspect ratio is out of range or a
/// target of at least 500 px cannot be met within 2%.
RasterBlob rasterize_blob(const BlobSpec& spec);

/// Minimum number of background pixels between two blobs, on both axes.
inline constexpr int64_t kMinBlobGap = 2;

struct SynthGroundTruth {
  std::string slide_id;
  /// Intact eosinophils as counted by the active rule, at blob centroids.
  std::vector<EosPoint> points;
  std::vector<EosPoint> not_intact_points;
  int64_t hpf_side_px = 0;
  int64_t planted_pec = 0;
  Rect planted_pec_rect;
  Activity label = Activity::kInactive;
};

/// Tissue tone; green stays below 200 so tissue never reads as background.
inline constexpr Rgb kTissueColor{232, 178, 206};

class SynthSlide final : public SlideSource, public LabelSource {
 public:
  SynthSlide(SlideMeta meta, uint64_t seed, std::vector<RasterBlob> blobs, int64_t margin_px = 0);

  const SlideMeta& meta() const override { return meta_; }
  RgbRaster read_region(const Rect& r) const override;

  int64_t width() const override { return meta_.width_px; }
  int64_t height() const override { return meta_.height_px; }
  ClassMask read_labels(const Rect& r) const override;

  const std::vector<RasterBlob>& blobs() const { return blobs_; }
  int64_t margin_px() const { return margin_; }
  uint64_t seed() const { return seed_; }
  /// Tissue area: the slide minus the glass margin.
  Rect tissue() const { return {margin_, margin_, meta_.width_px - 2 * margin_, meta_.height_px - 2 * margin_}; }

 private:
  SlideMeta meta_;
  uint64_t seed_;
  std::vector<RasterBlob> blobs_;
  int64_t margin_;
};

struct SynthOptions {
  CountingRule rule;
  HpfConfig hpf;
  int64_t margin_px = 0;
  /// brute_force_pec placement guard used for planted_pec.
  int64_t pec_guard = int64_t{1} << 32;
};

struct SynthCase {
  SynthSlide slide;
  SynthGroundTruth truth;
};

/// Builds a slide from explicit blobs. Throws InvalidArgument when a blob
/// leaves the slide or two blobs are closer than kMinBlobGap.
SynthCase generate_slide(uint64_t seed, const SlideMeta& meta, std::span<const BlobSpec> blobs,
                         const SynthOptions& options = {});

/// Exhaustive peak search: evaluates every integer placement, same
/// containment and tie rules as peak_window. Throws InvalidArgument when the
/// number of placements exceeds `guard`.
WindowPeak brute_force_pec(std::span<const EosPoint> points, int64_t side, int64_t slide_w, int64_t slide_h,
                           int64_t guard = 10'000'000);

struct LayoutParams {
  int64_t target_pec = 0;
  /// Intact blobs outside the densest field, re-drawn until they do not change the peak.
  int64_t max_distractors = 4;
  int64_t not_intact_blobs = 6;
  /// Intact blobs below the counting threshold.
  int64_t debris_blobs = 2;
  /// Chance that a cluster eosinophil is planted as one two-cell blob.
  double double_blob_rate = 0.15;
  /// Keep blobs this far from the glass margin (so no blob sits in a background patch).
  int64_t margin_clearance_px = 448;
};

/// Random slide whose planted_pec equals params.target_pec.
SynthCase generate_random_slide(uint64_t seed, const SlideMeta& meta, const LayoutParams& params,
                                const SynthOptions& options = {});

struct CohortParams {
  int64_t width_px = 4096;
  int64_t height_px = 4096;
  double microns_per_pixel = kDefaultMicronsPerPixel;
  int64_t tile_size = kDefaultTileSize;
  int64_t max_pec = 30;
};

/// round(activity_mix * n) slides get planted_pec >= threshold, the rest below.
std::vector<SynthCase> random_cohort(uint64_t seed, int64_t n_slides, double activity_mix,
                                     const CohortParams& params = {}, const SynthOptions& options = {});

/// JSON: {"slide_id", "points": [{"x","y","multiplicity"}], "planted_pec",
/// "rect": {"x","y","w","h"}, "label", "hpf_side_px"}.
std::string ground_truth_json(const SynthGroundTruth& truth);
SynthGroundTruth parse_ground_truth(const std::string& json_text);

/// Writes `dir/slide/`, `dir/mask/` containers and `dir/ground_truth.json`.
void write_synth_case(const SynthCase& c, const std::filesystem::path& dir);

}  // namespace eoscount
