#pragma once

// End-to-end slide analysis: tile, filter, segment, fuse, count, search, classify.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eoscount/counter.hpp"
#include "eoscount/pec.hpp"
#include "eoscount/segmenter.hpp"
#include "eoscount/slide.hpp"
#include "eoscount/tiler.hpp"

namespace eoscount {

inline constexpr int64_t kDefaultMemoryBudget = int64_t{2} << 30;

enum class PeakSearch {
  kExact,    // peak_window
  kDensity,  // peak_window_density, approximate
};

struct PipelineConfig {
  TilerConfig tiler;
  SegmenterConfig segmenter;
  CountingRule counting;
  HpfConfig hpf;
  Connectivity connectivity = Connectivity::kEight;
  PeakSearch peak_search = PeakSearch::kExact;
  /// Overrides the slide's own calibration when set.
  std::optional<double> microns_per_pixel;
  int64_t worker_count = 1;
  int64_t memory_budget_bytes = kDefaultMemoryBudget;

  void validate() const;
  /// Pixel pitch used for `meta`: the override if set, else the slide's.
  double effective_mpp(const SlideMeta& meta) const;
};

struct SlideAnalysis {
  PecResult pec;
  int64_t hpf_side_px = 0;
  double microns_per_pixel = 0.0;
  /// Eosinophils (summed multiplicity) and connected regions per class.
  int64_t intact_total = 0;
  int64_t not_intact_total = 0;
  int64_t intact_regions = 0;
  int64_t not_intact_regions = 0;
  /// Intact eosinophil points in raster order of their regions.
  std::vector<EosPoint> points;
  int64_t patches_total = 0;
  int64_t patches_segmented = 0;
  /// Present when requested through AnalyzeOptions::keep_mask.
  std::shared_ptr<FusedMask> mask;
};

struct AnalyzeOptions {
  bool keep_mask = false;
};

/// Deterministic for any worker_count. A failing patch aborts the slide; the
/// rethrown error keeps its category and names the slide and patch.
SlideAnalysis analyze_slide(const SlideSource& slide, const PipelineConfig& cfg, const Segmenter& backend,
                            const AnalyzeOptions& options = {});

/// One cohort member, opened lazily so a broken slide only fails itself.
struct CohortSlide {
  std::string name;
  std::function<std::shared_ptr<const SlideSource>()> open;
  /// Per-slide backend; the shared backend is used when empty.
  std::function<std::shared_ptr<const Segmenter>()> backend;
};

struct SlideFailure {
  std::string name;
  std::string message;
};

struct CohortAnalysis {
  std::vector<SlideAnalysis> analyses;  // input order, failures omitted
  std::vector<PecResult> ranked;
  std::vector<SlideFailure> failures;
};

CohortAnalysis analyze_cohort(std::span<const CohortSlide> slides, const PipelineConfig& cfg, const Segmenter& backend,
                              const AnalyzeOptions& options = {});

/// Rebuilds the two class planes of a label raster (intact wins on conflict).
FusedMask fused_from_labels(const LabelSource& labels, int64_t heap_limit_bytes = INT64_MAX);

// ---------------------------------------------------------------------------
// Overlay
// ---------------------------------------------------------------------------

/// Slide view with eosinophil pixels tinted 50% towards green (intact) or red
/// (not-intact) and the HPF outlined in red.
class OverlaySlide final : public SlideSource {
 public:
  OverlaySlide(const SlideSource& slide, const LabelSource& mask, const Rect& hpf_rect, int64_t outline_px = 3);

  const SlideMeta& meta() const override { return slide_.meta(); }
  RgbRaster read_region(const Rect& r) const override;

 private:
  const SlideSource& slide_;
  const LabelSource& mask_;
  Rect hpf_;
  int64_t outline_;
};

inline constexpr int64_t kOverlayMaxSide = 4096;

/// Smallest power of two f with ceil(max(w, h) / f) <= max_side.
int64_t overlay_downscale(int64_t width, int64_t height, int64_t max_side = kOverlayMaxSide);

enum class OverlayFormat {
  kImage,  // single PNG, box-filtered down to at most kOverlayMaxSide per side
  kTiled,  // full-resolution tiled container
};

/// Returns the written path: `out` itself for a PNG, `out/manifest.json` for a container.
std::filesystem::path render_overlay(const SlideSource& slide, const LabelSource& mask, const Rect& hpf_rect,
                                     const std::filesystem::path& out, OverlayFormat format = OverlayFormat::kImage);

}  // namespace eoscount
