#include "eoscount/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "eoscount/errors.hpp"
#include "png_io.hpp"

namespace eoscount {

namespace fs = std::filesystem;

void PipelineConfig::validate() const {
  tiler.validate();
  segmenter.validate();
  counting.validate();
  hpf.validate();
  if (worker_count < 1 || worker_count > 1024) throw InvalidArgument("worker_count must lie in [1, 1024]");
  if (memory_budget_bytes < (int64_t{1} << 20)) throw InvalidArgument("memory budget must be at least 1 MiB");
  if (microns_per_pixel && !(std::isfinite(*microns_per_pixel) && *microns_per_pixel > 0.0)) {
    throw InvalidArgument("microns_per_pixel must be positive");
  }
}

double PipelineConfig::effective_mpp(const SlideMeta& meta) const {
  return microns_per_pixel.value_or(meta.microns_per_pixel);
}

namespace {

[[noreturn]] void rethrow_with_context(const std::exception_ptr& e, const std::string& ctx) {
  try {
    std::rethrow_exception(e);
  } catch (const IoError& x) {
    throw IoError(ctx + x.what());
  } catch (const FormatError& x) {
    throw FormatError(ctx + x.what());
  } catch (const InvalidArgument& x) {
    throw InvalidArgument(ctx + x.what());
  } catch (const std::exception& x) {
    throw Error(ctx + x.what());
  } catch (...) {
    throw Error(ctx + "unknown error");
  }
}

// Runs fn(i) for i in [0, n) on `workers` threads. On failure, the error of
// the lowest failing index is rethrown along with that index. Every index
// below it was claimed earlier and runs to completion, so the reported
// failure does not depend on scheduling.
template <typename Fn>
void parallel_for(size_t n, int64_t workers, Fn fn, size_t& failed_index, std::exception_ptr& error) {
  std::atomic<size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mu;
  failed_index = SIZE_MAX;
  auto loop = [&] {
    while (!stop.load(std::memory_order_relaxed)) {
      const size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_index) {
          failed_index = i;
          error = std::current_exception();
        }
        stop = true;
      }
    }
  };
  const auto extra = static_cast<size_t>(std::min<int64_t>(workers - 1, static_cast<int64_t>(n)));
  std::vector<std::jthread> threads;
  threads.reserve(extra);
  for (size_t t = 0; t < extra; ++t) threads.emplace_back(loop);
  loop();
}

}  // namespace

SlideAnalysis analyze_slide(const SlideSource& slide, const PipelineConfig& cfg, const Segmenter& backend,
                            const AnalyzeOptions& options) {
  cfg.validate();
  const SlideMeta& meta = slide.meta();
  meta.validate();
  const std::string ctx = "slide '" + meta.id + "': ";
  if (backend.input_size() != cfg.tiler.patch_size) {
    throw InvalidArgument(ctx + "backend '" + backend.name() + "' expects " + std::to_string(backend.input_size()) +
                          " px patches, tiler produces " + std::to_string(cfg.tiler.patch_size));
  }

  SlideAnalysis out;
  out.microns_per_pixel = cfg.effective_mpp(meta);
  out.hpf_side_px = hpf_side_px(cfg.hpf.hpf_area_mm2, out.microns_per_pixel);

  const int64_t w = meta.width_px, h = meta.height_px;
  const int64_t patch = cfg.tiler.patch_size;
  const std::vector<Rect> patches = GridPlan::for_raster(w, h, patch).patches(w, h);
  out.patches_total = static_cast<int64_t>(patches.size());

  // Two planes share a quarter of the budget; beyond that they page to disk.
  auto mask = std::make_shared<FusedMask>(w, h, cfg.memory_budget_bytes / 8);
  std::atomic<int64_t> segmented{0};
  size_t failed = SIZE_MAX;
  std::exception_ptr error;
  parallel_for(
      patches.size(), cfg.worker_count,
      [&](size_t i) {
        const Rect& r = patches[i];
        const RgbRaster pixels = slide.read_region(r);
        if (!is_informative(pixels, cfg.tiler)) return;
        const ProbMap p = segment_patch(backend, pad_patch(pixels, patch), r);
        BinaryChannels b = binarize(p, cfg.segmenter);
        if (r.w < patch || r.h < patch) {
          const Rect valid{0, 0, r.w, r.h};
          b.intact = b.intact.crop(valid);
          b.not_intact = b.not_intact.crop(valid);
        }
        mask->fuse(b.intact, b.not_intact, r.x, r.y);
        segmented.fetch_add(1, std::memory_order_relaxed);
      },
      failed, error);
  if (error) {
    const Rect& r = patches[failed];
    rethrow_with_context(error, ctx + "patch at (" + std::to_string(r.x) + "," + std::to_string(r.y) + "): ");
  }
  out.patches_segmented = segmented.load();

  std::vector<EosRegion> intact = connected_components(*mask, EosClass::kIntact, cfg.connectivity);
  std::vector<EosRegion> not_intact = connected_components(*mask, EosClass::kNotIntact, cfg.connectivity);
  assign_counts(intact, cfg.counting);
  assign_counts(not_intact, cfg.counting);
  out.points = points_of(intact);
  out.intact_total = total_multiplicity(out.points);
  out.not_intact_total = total_multiplicity(points_of(not_intact));
  out.intact_regions = static_cast<int64_t>(intact.size());
  out.not_intact_regions = static_cast<int64_t>(not_intact.size());

  const WindowPeak peak = cfg.peak_search == PeakSearch::kExact
                              ? peak_window(out.points, out.hpf_side_px, w, h)
                              : peak_window_density(out.points, out.hpf_side_px, w, h);
  out.pec = {meta.id, peak.count, peak.rect, classify(peak.count, cfg.hpf)};
  if (options.keep_mask) out.mask = std::move(mask);
  return out;
}

CohortAnalysis analyze_cohort(std::span<const CohortSlide> slides, const PipelineConfig& cfg, const Segmenter& backend,
                              const AnalyzeOptions& options) {
  cfg.validate();
  CohortAnalysis out;
  std::set<std::string> seen;
  std::vector<PecResult> results;
  for (const CohortSlide& item : slides) {
    try {
      const std::shared_ptr<const SlideSource> slide = item.open();
      if (!slide) throw Error("slide could not be opened");
      if (seen.contains(slide->meta().id)) throw InvalidArgument("duplicate slide_id '" + slide->meta().id + "'");
      std::shared_ptr<const Segmenter> own;
      if (item.backend) own = item.backend();
      SlideAnalysis a = analyze_slide(*slide, cfg, own ? *own : backend, options);
      seen.insert(a.pec.slide_id);
      results.push_back(a.pec);
      out.analyses.push_back(std::move(a));
    } catch (const std::exception& e) {
      out.failures.push_back({item.name, e.what()});
    }
  }
  out.ranked = rank_slides(std::move(results));
  return out;
}

FusedMask fused_from_labels(const LabelSource& labels, int64_t heap_limit_bytes) {
  const int64_t w = labels.width(), h = labels.height();
  FusedMask fused(w, h, heap_limit_bytes);
  constexpr int64_t kBand = 256;
  for (int64_t y0 = 0; y0 < h; y0 += kBand) {
    const int64_t bh = std::min(kBand, h - y0);
    const ClassMask band = labels.read_labels({0, y0, w, bh});
    BinaryMask a(w, bh), b(w, bh);
    for (int64_t y = 0; y < bh; ++y) {
      auto src = band.row(y);
      auto da = a.row(y);
      auto db = b.row(y);
      for (int64_t x = 0; x < w; ++x) {
        const auto l = static_cast<Label>(src[static_cast<size_t>(x)]);
        da[static_cast<size_t>(x)] = l == Label::kIntact;
        db[static_cast<size_t>(x)] = l == Label::kNotIntact;
      }
    }
    fused.fuse(a, b, 0, y0);
  }
  return fused;
}

OverlaySlide::OverlaySlide(const SlideSource& slide, const LabelSource& mask, const Rect& hpf_rect, int64_t outline_px)
    : slide_(slide), mask_(mask), hpf_(hpf_rect), outline_(outline_px) {
  if (mask.width() != slide.meta().width_px || mask.height() != slide.meta().height_px) {
    throw InvalidArgument("mask is " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()) +
                          " but slide is " + std::to_string(slide.meta().width_px) + "x" +
                          std::to_string(slide.meta().height_px));
  }
  if (outline_ < 0) throw InvalidArgument("outline width must be non-negative");
}

RgbRaster OverlaySlide::read_region(const Rect& r) const {
  RgbRaster px = slide_.read_region(r);
  const ClassMask labels = mask_.read_labels(r);
  for (int64_t y = 0; y < r.h; ++y) {
    auto dst = px.row(y);
    auto lab = labels.row(y);
    for (int64_t x = 0; x < r.w; ++x) {
      const auto l = static_cast<Label>(lab[static_cast<size_t>(x)]);
      if (l == Label::kNonEos) continue;
      uint8_t* p = &dst[static_cast<size_t>(x * 3)];
      const Rgb tint = l == Label::kIntact ? Rgb{0, 255, 0} : Rgb{255, 0, 0};
      p[0] = static_cast<uint8_t>((p[0] + tint.r) / 2);
      p[1] = static_cast<uint8_t>((p[1] + tint.g) / 2);
      p[2] = static_cast<uint8_t>((p[2] + tint.b) / 2);
    }
  }
  const std::optional<Rect> box = intersect(r, hpf_);
  if (box && outline_ > 0) {
    for (int64_t y = box->y; y < box->bottom(); ++y) {
      const bool edge_row = y < hpf_.y + outline_ || y >= hpf_.bottom() - outline_;
      for (int64_t x = box->x; x < box->right(); ++x) {
        if (edge_row || x < hpf_.x + outline_ || x >= hpf_.right() - outline_) px.set(x - r.x, y - r.y, {255, 0, 0});
      }
    }
  }
  return px;
}

int64_t overlay_downscale(int64_t width, int64_t height, int64_t max_side) {
  if (width < 1 || height < 1 || max_side < 1) throw InvalidArgument("overlay_downscale needs positive sizes");
  const int64_t side = std::max(width, height);
  int64_t f = 1;
  while ((side + f - 1) / f > max_side) f *= 2;
  return f;
}

fs::path render_overlay(const SlideSource& slide, const LabelSource& mask, const Rect& hpf_rect, const fs::path& out,
                        OverlayFormat format) {
  const SlideMeta& meta = slide.meta();
  if (format == OverlayFormat::kTiled) {
    write_slide(OverlaySlide(slide, mask, hpf_rect), out);
    return out / "manifest.json";
  }

  const int64_t f = overlay_downscale(meta.width_px, meta.height_px);
  // Thick enough that the box survives the box filter as solid red.
  const OverlaySlide view(slide, mask, hpf_rect, 3 * f);
  const int64_t ow = (meta.width_px + f - 1) / f;
  const int64_t oh = (meta.height_px + f - 1) / f;
  RgbRaster image(ow, oh);
  const int64_t band_rows = std::max<int64_t>(1, 1024 / f);
  std::vector<uint32_t> sums(static_cast<size_t>(ow * 3));
  std::vector<uint32_t> counts(static_cast<size_t>(ow));
  for (int64_t oy0 = 0; oy0 < oh; oy0 += band_rows) {
    const int64_t y0 = oy0 * f;
    const int64_t y1 = std::min(meta.height_px, (oy0 + band_rows) * f);
    const RgbRaster band = view.read_region({0, y0, meta.width_px, y1 - y0});
    for (int64_t oy = oy0; oy * f < y1; ++oy) {
      std::fill(sums.begin(), sums.end(), 0);
      std::fill(counts.begin(), counts.end(), 0);
      for (int64_t y = oy * f; y < std::min(y1, (oy + 1) * f); ++y) {
        auto src = band.row(y - y0);
        for (int64_t x = 0; x < meta.width_px; ++x) {
          const auto o = static_cast<size_t>(x / f);
          for (size_t c = 0; c < 3; ++c) sums[o * 3 + c] += src[static_cast<size_t>(x * 3) + c];
          ++counts[o];
        }
      }
      auto dst = image.row(oy);
      for (size_t o = 0; o < counts.size(); ++o) {
        for (size_t c = 0; c < 3; ++c) dst[o * 3 + c] = static_cast<uint8_t>((sums[o * 3 + c] + counts[o] / 2) / counts[o]);
      }
    }
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  png::write(out, ow, oh, 3, image.bytes());
  return out;
}

}  // namespace eoscount
