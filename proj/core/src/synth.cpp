#include "eoscount/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "eoscount/errors.hpp"
#include "rng.hpp"

namespace eoscount {

namespace fs = std::filesystem;
using nlohmann::json;
using detail::Rng;

namespace {

std::vector<PixelRun> ellipse_runs(double cx, double cy, double a, double b, double rot) {
  const double c = std::cos(rot), s = std::sin(rot);
  const double ia = 1.0 / (a * a), ib = 1.0 / (b * b);
  // Q(dx, dy) = (dx c + dy s)^2 / a^2 + (-dx s + dy c)^2 / b^2 <= 1
  const double qa = c * c * ia + s * s * ib;
  const double half_h = std::sqrt(a * a * s * s + b * b * c * c);
  std::vector<PixelRun> runs;
  for (auto y = static_cast<int64_t>(std::ceil(cy - half_h)); y <= static_cast<int64_t>(std::floor(cy + half_h)); ++y) {
    const double dy = static_cast<double>(y) - cy;
    const double qb = 2.0 * dy * c * s * (ia - ib);
    const double qc = dy * dy * (s * s * ia + c * c * ib) - 1.0;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0.0) continue;
    const double root = std::sqrt(disc);
    const auto x0 = static_cast<int64_t>(std::ceil(cx + (-qb - root) / (2.0 * qa)));
    const auto x1 = static_cast<int64_t>(std::floor(cx + (-qb + root) / (2.0 * qa))) + 1;
    if (x1 > x0) runs.push_back({y, x0, x1});
  }
  return runs;
}

int64_t area_of(const std::vector<PixelRun>& runs) {
  int64_t n = 0;
  for (const auto& r : runs) n += r.length();
  return n;
}

bool too_close(const RasterBlob& a, const RasterBlob& b) {
  const int64_t g = kMinBlobGap;
  const Rect grown{a.bbox.x - g, a.bbox.y - g, a.bbox.w + 2 * g, a.bbox.h + 2 * g};
  if (!grown.intersects(b.bbox)) return false;
  for (const PixelRun& ra : a.runs) {
    for (const PixelRun& rb : b.runs) {
      if (std::abs(ra.y - rb.y) > g) continue;
      if (ra.x0 - g < rb.x1 && rb.x0 < ra.x1 + g) return true;
    }
  }
  return false;
}

bool inside(const RasterBlob& b, const Rect& area) { return area.contains(b.bbox); }

}  // namespace

RasterBlob rasterize_blob(const BlobSpec& spec) {
  if (!(spec.aspect_ratio >= 0.5 && spec.aspect_ratio <= 2.0)) throw InvalidArgument("aspect_ratio must lie in [0.5, 2]");
  if (spec.target_area_px <= 0) throw InvalidArgument("target_area_px must be positive");
  const double target = static_cast<double>(spec.target_area_px);
  const double a0 = std::sqrt(target * spec.aspect_ratio / std::numbers::pi);
  const double b0 = std::sqrt(target / (spec.aspect_ratio * std::numbers::pi));
  auto runs_at = [&](double scale) { return ellipse_runs(spec.cx, spec.cy, a0 * scale, b0 * scale, spec.rotation); };

  // Pixel count is non-decreasing in the scale; bisect for the crossing.
  double lo = 0.5, hi = 1.5;
  for (int i = 0; i < 60; ++i) {
    const double mid = (lo + hi) / 2.0;
    (area_of(runs_at(mid)) < spec.target_area_px ? lo : hi) = mid;
  }
  std::vector<PixelRun> below = runs_at(lo), above = runs_at(hi);
  const int64_t da = std::abs(area_of(below) - spec.target_area_px);
  const int64_t db = std::abs(area_of(above) - spec.target_area_px);
  std::vector<PixelRun> runs = db <= da ? std::move(above) : std::move(below);
  if (runs.empty()) throw InvalidArgument("blob rasterises to no pixels");

  RasterBlob blob;
  blob.spec = spec;
  blob.area_px = area_of(runs);
  if (spec.target_area_px >= 500 &&
      std::abs(static_cast<double>(blob.area_px - spec.target_area_px)) > 0.02 * target) {
    throw InvalidArgument("cannot rasterise blob within 2% of target area " + std::to_string(spec.target_area_px));
  }
  int64_t sx = 0, sy = 0, x0 = INT64_MAX, x1 = INT64_MIN;
  for (const auto& r : runs) {
    sx += (r.x0 + r.x1 - 1) * r.length() / 2;
    sy += r.y * r.length();
    x0 = std::min(x0, r.x0);
    x1 = std::max(x1, r.x1);
  }
  blob.bbox = {x0, runs.front().y, x1 - x0, runs.back().y - runs.front().y + 1};
  // Same integer-sum-then-divide as the component labeler, so centroids match bit for bit.
  blob.cx = static_cast<double>(sx) / static_cast<double>(blob.area_px);
  blob.cy = static_cast<double>(sy) / static_cast<double>(blob.area_px);
  blob.runs = std::move(runs);
  return blob;
}

SynthSlide::SynthSlide(SlideMeta meta, uint64_t seed, std::vector<RasterBlob> blobs, int64_t margin_px)
    : meta_(std::move(meta)), seed_(seed), blobs_(std::move(blobs)), margin_(margin_px) {
  meta_.validate();
  if (margin_ < 0 || 2 * margin_ >= std::min(meta_.width_px, meta_.height_px)) {
    throw InvalidArgument("margin leaves no tissue");
  }
}

RgbRaster SynthSlide::read_region(const Rect& r) const {
  if (r.x < 0 || r.y < 0 || r.w < 1 || r.h < 1 || r.right() > meta_.width_px || r.bottom() > meta_.height_px) {
    throw InvalidArgument("region out of bounds");
  }
  RgbRaster out(r.w, r.h, kWhite);
  const Rect t = tissue();
  for (int64_t y = r.y; y < r.bottom(); ++y) {
    auto row = out.row(y - r.y);
    if (y < t.y || y >= t.bottom()) continue;
    const int64_t xa = std::max(r.x, t.x), xb = std::min(r.right(), t.right());
    for (int64_t x = xa; x < xb; ++x) {
      const uint64_t h = detail::splitmix64(seed_ ^ (static_cast<uint64_t>(y) << 32 | static_cast<uint64_t>(x)));
      uint8_t* p = &row[static_cast<size_t>((x - r.x) * 3)];
      p[0] = static_cast<uint8_t>(kTissueColor.r + static_cast<int>((h & 0xff) % 13) - 6);
      p[1] = static_cast<uint8_t>(kTissueColor.g + static_cast<int>(((h >> 8) & 0xff) % 13) - 6);
      p[2] = static_cast<uint8_t>(kTissueColor.b + static_cast<int>(((h >> 16) & 0xff) % 13) - 6);
    }
  }
  for (const RasterBlob& b : blobs_) {
    if (!b.bbox.intersects(r)) continue;
    const Rgb key = b.spec.cls == EosClass::kIntact ? Rgb{0, 255, 0} : Rgb{255, 0, 0};
    for (const PixelRun& run : b.runs) {
      if (run.y < r.y || run.y >= r.bottom()) continue;
      for (int64_t x = std::max(run.x0, r.x); x < std::min(run.x1, r.right()); ++x) out.set(x - r.x, run.y - r.y, key);
    }
  }
  return out;
}

ClassMask SynthSlide::read_labels(const Rect& r) const {
  if (r.x < 0 || r.y < 0 || r.w < 1 || r.h < 1 || r.right() > meta_.width_px || r.bottom() > meta_.height_px) {
    throw InvalidArgument("region out of bounds");
  }
  ClassMask out(r.w, r.h);
  for (const RasterBlob& b : blobs_) {
    if (!b.bbox.intersects(r)) continue;
    for (const PixelRun& run : b.runs) {
      if (run.y < r.y || run.y >= r.bottom()) continue;
      for (int64_t x = std::max(run.x0, r.x); x < std::min(run.x1, r.right()); ++x) {
        out.set(x - r.x, run.y - r.y, to_label(b.spec.cls));
      }
    }
  }
  return out;
}

WindowPeak brute_force_pec(std::span<const EosPoint> points, int64_t side, int64_t slide_w, int64_t slide_h,
                           int64_t guard) {
  if (side < 1 || slide_w < 1 || slide_h < 1) throw InvalidArgument("brute_force_pec needs positive sizes");
  const int64_t max_x = std::max<int64_t>(0, slide_w - side);
  const int64_t max_y = std::max<int64_t>(0, slide_h - side);
  if ((max_x + 1) * (max_y + 1) > guard) {
    throw InvalidArgument("brute_force_pec guard exceeded: " + std::to_string((max_x + 1) * (max_y + 1)) +
                          " placements");
  }
  const int64_t win_w = std::min(side, slide_w);
  const int64_t win_h = std::min(side, slide_h);

  struct Cell {
    int64_t x, y, m;
  };
  std::vector<Cell> cells;
  for (const EosPoint& p : points) {
    if (p.multiplicity <= 0 || !std::isfinite(p.x) || !std::isfinite(p.y)) continue;
    const auto qx = static_cast<int64_t>(std::floor(p.x));
    const auto qy = static_cast<int64_t>(std::floor(p.y));
    if (qx < 0 || qy < 0 || qx >= slide_w || qy >= slide_h) continue;
    cells.push_back({qx, qy, p.multiplicity});
  }
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.y < b.y; });

  // column[x] = multiplicity in column x within rows [y, y + win_h).
  std::vector<int64_t> column(static_cast<size_t>(slide_w), 0);
  size_t add = 0, drop = 0;
  WindowPeak best{-1, {0, 0, win_w, win_h}};
  for (int64_t y = 0; y <= max_y; ++y) {
    while (add < cells.size() && cells[add].y < y + win_h) {
      column[static_cast<size_t>(cells[add].x)] += cells[add].m;
      ++add;
    }
    while (drop < cells.size() && cells[drop].y < y) {
      column[static_cast<size_t>(cells[drop].x)] -= cells[drop].m;
      ++drop;
    }
    int64_t sum = 0;
    for (int64_t x = 0; x < win_w; ++x) sum += column[static_cast<size_t>(x)];
    for (int64_t x = 0; x <= max_x; ++x) {
      if (sum > best.count) best = {sum, {x, y, win_w, win_h}};
      if (x < max_x) sum += column[static_cast<size_t>(x + win_w)] - column[static_cast<size_t>(x)];
    }
  }
  return best;
}

namespace {

SynthGroundTruth make_truth(const SlideMeta& meta, std::span<const RasterBlob> blobs, const SynthOptions& options) {
  SynthGroundTruth t;
  t.slide_id = meta.id;
  for (const RasterBlob& b : blobs) {
    const int64_t n = eos_count_of_area(b.area_px, options.rule);
    if (n == 0) continue;
    (b.spec.cls == EosClass::kIntact ? t.points : t.not_intact_points).push_back({b.cx, b.cy, n});
  }
  t.hpf_side_px = hpf_side_px(options.hpf.hpf_area_mm2, meta.microns_per_pixel);
  const WindowPeak peak = brute_force_pec(t.points, t.hpf_side_px, meta.width_px, meta.height_px, options.pec_guard);
  t.planted_pec = peak.count;
  t.planted_pec_rect = peak.rect;
  t.label = classify(t.planted_pec, options.hpf);
  return t;
}

void check_separation(std::vector<RasterBlob>& blobs) {
  std::vector<size_t> order(blobs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return blobs[a].bbox.y < blobs[b].bbox.y; });
  for (size_t i = 0; i < order.size(); ++i) {
    const RasterBlob& a = blobs[order[i]];
    for (size_t j = i + 1; j < order.size() && blobs[order[j]].bbox.y <= a.bbox.bottom() + kMinBlobGap; ++j) {
      if (too_close(a, blobs[order[j]])) {
        throw InvalidArgument("blobs " + std::to_string(order[i]) + " and " + std::to_string(order[j]) +
                              " are closer than " + std::to_string(kMinBlobGap) + " px");
      }
    }
  }
}

}  // namespace

SynthCase generate_slide(uint64_t seed, const SlideMeta& meta, std::span<const BlobSpec> blobs,
                         const SynthOptions& options) {
  meta.validate();
  std::vector<RasterBlob> raster;
  raster.reserve(blobs.size());
  for (const BlobSpec& spec : blobs) {
    RasterBlob b = rasterize_blob(spec);
    if (!inside(b, meta.bounds())) {
      throw InvalidArgument("blob at (" + std::to_string(spec.cx) + "," + std::to_string(spec.cy) +
                            ") leaves the slide");
    }
    raster.push_back(std::move(b));
  }
  check_separation(raster);
  SynthGroundTruth truth = make_truth(meta, raster, options);
  return {SynthSlide(meta, seed, std::move(raster), options.margin_px), std::move(truth)};
}

namespace {

constexpr int kPlacementAttempts = 4000;
// Largest blob radius the random layouts produce (two-cell blob, aspect 1.5).
constexpr int64_t kBlobReach = 64;

class Placer {
 public:
  Placer(Rng& rng, Rect slide) : rng_(rng), slide_(slide) {}

  // Draws a blob centred uniformly in `area`; returns false after too many collisions.
  bool place(EosClass cls, int64_t area_lo, int64_t area_hi, const Rect& area, std::vector<RasterBlob>& out) {
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      BlobSpec spec;
      spec.cls = cls;
      spec.cx = rng_.uniform(static_cast<double>(area.x), static_cast<double>(area.right()));
      spec.cy = rng_.uniform(static_cast<double>(area.y), static_cast<double>(area.bottom()));
      spec.target_area_px = rng_.uniform_int(area_lo, area_hi);
      spec.aspect_ratio = rng_.uniform(0.67, 1.5);
      spec.rotation = rng_.uniform(0.0, std::numbers::pi);
      RasterBlob b = rasterize_blob(spec);
      if (!inside(b, slide_)) continue;
      if (std::any_of(placed_.begin(), placed_.end(), [&](const RasterBlob* o) { return too_close(b, *o); }) ||
          std::any_of(out.begin(), out.end(), [&](const RasterBlob& o) { return too_close(b, o); })) {
        continue;
      }
      out.push_back(std::move(b));
      return true;
    }
    return false;
  }

  void freeze(const std::vector<RasterBlob>& blobs) {
    for (const auto& b : blobs) placed_.push_back(&b);
  }

 private:
  Rng& rng_;
  Rect slide_;
  std::vector<const RasterBlob*> placed_;
};

Rect shrink(const Rect& r, int64_t by) {
  Rect s{r.x + by, r.y + by, r.w - 2 * by, r.h - 2 * by};
  if (s.w < 1 || s.h < 1) throw InvalidArgument("slide too small for the requested layout");
  return s;
}

}  // namespace

SynthCase generate_random_slide(uint64_t seed, const SlideMeta& meta, const LayoutParams& params,
                                const SynthOptions& options) {
  meta.validate();
  if (params.target_pec < 0) throw InvalidArgument("target_pec must be non-negative");
  Rng rng(seed);
  const int64_t side = hpf_side_px(options.hpf.hpf_area_mm2, meta.microns_per_pixel);
  const int64_t m = options.margin_px;
  const Rect tissue{m, m, meta.width_px - 2 * m, meta.height_px - 2 * m};
  const Rect region = shrink(tissue, m > 0 ? params.margin_clearance_px : kBlobReach);

  // Cluster box: every centroid inside it falls into one field.
  const int64_t box_w = std::min(region.w, side - 2 * kBlobReach);
  const int64_t box_h = std::min(region.h, side - 2 * kBlobReach);
  if (box_w < 1 || box_h < 1) throw InvalidArgument("field too small for the requested layout");
  const Rect box{rng.uniform_int(region.x, region.right() - box_w), rng.uniform_int(region.y, region.bottom() - box_h),
                 box_w, box_h};

  Placer placer(rng, meta.bounds());
  std::vector<RasterBlob> fixed;
  const auto must = [](bool ok) {
    if (!ok) throw Error("cannot place blobs without overlap; slide too crowded");
  };
  for (int64_t remaining = params.target_pec; remaining > 0;) {
    if (remaining >= 2 && rng.uniform() < params.double_blob_rate) {
      must(placer.place(EosClass::kIntact, 5400, 6400, box, fixed));
      remaining -= 2;
    } else {
      must(placer.place(EosClass::kIntact, 1950, 2800, box, fixed));
      remaining -= 1;
    }
  }
  for (int64_t i = 0; i < params.debris_blobs; ++i) must(placer.place(EosClass::kIntact, 600, 1650, region, fixed));
  for (int64_t i = 0; i < params.not_intact_blobs; ++i) {
    must(placer.place(EosClass::kNotIntact, 1500, 4000, region, fixed));
  }
  placer.freeze(fixed);

  // Distractors stay below half the target so they never form a denser field
  // on their own; draws that join the cluster's field are rejected.
  const int64_t max_d = std::min(params.max_distractors, params.target_pec / 2);
  for (int attempt = 0; attempt < 50 && max_d > 0; ++attempt) {
    std::vector<RasterBlob> extra;
    const int64_t d = rng.uniform_int(1, max_d);
    bool ok = true;
    for (int64_t i = 0; i < d && ok; ++i) ok = placer.place(EosClass::kIntact, 1950, 2800, region, extra);
    if (!ok) continue;
    std::vector<RasterBlob> all = fixed;
    all.insert(all.end(), extra.begin(), extra.end());
    if (make_truth(meta, all, options).planted_pec == params.target_pec) {
      fixed = std::move(all);
      break;
    }
  }

  SynthGroundTruth truth = make_truth(meta, fixed, options);
  if (truth.planted_pec != params.target_pec) {
    throw Error("layout planted " + std::to_string(truth.planted_pec) + " instead of " +
                std::to_string(params.target_pec));
  }
  return {SynthSlide(meta, seed, std::move(fixed), m), std::move(truth)};
}

std::vector<SynthCase> random_cohort(uint64_t seed, int64_t n_slides, double activity_mix, const CohortParams& params,
                                     const SynthOptions& options) {
  if (n_slides < 1) throw InvalidArgument("cohort needs at least one slide");
  if (!(activity_mix >= 0.0 && activity_mix <= 1.0)) throw InvalidArgument("activity_mix must lie in [0, 1]");
  const int64_t threshold = options.hpf.activity_threshold;
  if (params.max_pec < threshold) throw InvalidArgument("max_pec below the activity threshold");

  Rng rng(seed);
  std::vector<int64_t> order(static_cast<size_t>(n_slides));
  for (int64_t i = 0; i < n_slides; ++i) order[static_cast<size_t>(i)] = i;
  for (int64_t i = n_slides - 1; i > 0; --i) {
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
  }
  const auto n_active = static_cast<int64_t>(std::llround(activity_mix * static_cast<double>(n_slides)));
  std::vector<bool> active(static_cast<size_t>(n_slides), false);
  for (int64_t i = 0; i < n_active; ++i) active[static_cast<size_t>(order[static_cast<size_t>(i)])] = true;

  std::vector<SynthCase> cohort;
  cohort.reserve(static_cast<size_t>(n_slides));
  for (int64_t i = 0; i < n_slides; ++i) {
    SlideMeta meta;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04lld", static_cast<long long>(i));
    meta.id = id;
    meta.width_px = params.width_px;
    meta.height_px = params.height_px;
    meta.microns_per_pixel = params.microns_per_pixel;
    meta.tile_size = params.tile_size;
    LayoutParams layout;
    layout.target_pec = active[static_cast<size_t>(i)] ? rng.uniform_int(threshold, params.max_pec)
                                                       : rng.uniform_int(0, threshold - 1);
    const uint64_t slide_seed = detail::splitmix64(seed ^ detail::splitmix64(static_cast<uint64_t>(i) + 1));
    cohort.push_back(generate_random_slide(slide_seed, meta, layout, options));
  }
  return cohort;
}

std::string ground_truth_json(const SynthGroundTruth& truth) {
  json j;
  j["slide_id"] = truth.slide_id;
  json pts = json::array();
  for (const auto& p : truth.points) pts.push_back({{"x", p.x}, {"y", p.y}, {"multiplicity", p.multiplicity}});
  j["points"] = std::move(pts);
  j["planted_pec"] = truth.planted_pec;
  const Rect& r = truth.planted_pec_rect;
  j["rect"] = {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}};
  j["label"] = to_string(truth.label);
  j["hpf_side_px"] = truth.hpf_side_px;
  return j.dump(2) + "\n";
}

SynthGroundTruth parse_ground_truth(const std::string& json_text) {
  SynthGroundTruth t;
  try {
    const json j = json::parse(json_text);
    t.slide_id = j.value("slide_id", "");
    for (const auto& p : j.at("points")) {
      t.points.push_back({p.at("x").get<double>(), p.at("y").get<double>(), p.at("multiplicity").get<int64_t>()});
    }
    t.planted_pec = j.at("planted_pec").get<int64_t>();
    const auto& r = j.at("rect");
    t.planted_pec_rect = {r.at("x").get<int64_t>(), r.at("y").get<int64_t>(), r.at("w").get<int64_t>(),
                          r.at("h").get<int64_t>()};
    t.label = activity_from_string(j.at("label").get<std::string>());
    t.hpf_side_px = j.value("hpf_side_px", int64_t{0});
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed ground truth: ") + e.what());
  }
  return t;
}

void write_synth_case(const SynthCase& c, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  write_slide(c.slide, dir / "slide");
  write_mask(static_cast<const LabelSource&>(c.slide), c.slide.meta(), dir / "mask");
  std::ofstream out(dir / "ground_truth.json", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + (dir / "ground_truth.json").string());
  out << ground_truth_json(c.truth);
}

}  // namespace eoscount
