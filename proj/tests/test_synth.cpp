#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "eoscount/counter.hpp"
#include "eoscount/errors.hpp"
#include "eoscount/segmenter.hpp"
#include "eoscount/synth.hpp"
#include "testing.hpp"

namespace eoscount {
namespace {

SlideMeta meta_of(int64_t w, int64_t h, const std::string& id = "s") {
  SlideMeta m;
  m.id = id;
  m.width_px = w;
  m.height_px = h;
  m.tile_size = 512;
  return m;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Rasterize, AreaWithinTwoPercentAndCentroidClose) {
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> pos(200.0, 800.0);
  std::uniform_real_distribution<double> aspect(0.5, 2.0);
  std::uniform_real_distribution<double> rot(0.0, 3.2);
  std::uniform_int_distribution<int64_t> area(500, 9000);
  for (int i = 0; i < 300; ++i) {
    const BlobSpec spec{i % 2 ? EosClass::kIntact : EosClass::kNotIntact, pos(rng), pos(rng), area(rng), aspect(rng),
                        rot(rng)};
    const RasterBlob b = rasterize_blob(spec);
    EXPECT_LE(std::abs(double(b.area_px - spec.target_area_px)) / double(spec.target_area_px), 0.02);
    EXPECT_NEAR(b.cx, spec.cx, 1.0);
    EXPECT_NEAR(b.cy, spec.cy, 1.0);

    // Runs, area, bbox and centroid agree with a flood fill of the pixels.
    BinaryMask m(1100, 1100);
    for (const auto& r : b.runs) {
      for (int64_t x = r.x0; x < r.x1; ++x) m.set(x, r.y);
    }
    const auto comps = testing::naive_components(m, 8);
    ASSERT_EQ(comps.size(), 1u);
    EXPECT_EQ(comps[0].area, b.area_px);
    EXPECT_EQ(comps[0].bbox, b.bbox);
    EXPECT_EQ(b.cx, double(comps[0].sum_x) / double(comps[0].area));
    EXPECT_EQ(b.cy, double(comps[0].sum_y) / double(comps[0].area));
  }
}

TEST(Rasterize, Example) {
  const RasterBlob b = rasterize_blob({EosClass::kIntact, 100.0, 200.0, 2050, 1.0, 0.0});
  EXPECT_GE(b.area_px, 2009);
  EXPECT_LE(b.area_px, 2091);
  EXPECT_NEAR(b.cx, 100.0, 1.0);
  EXPECT_NEAR(b.cy, 200.0, 1.0);
}

TEST(Rasterize, Errors) {
  EXPECT_THROW(rasterize_blob({EosClass::kIntact, 100, 100, 2050, 0.4, 0}), InvalidArgument);
  EXPECT_THROW(rasterize_blob({EosClass::kIntact, 100, 100, 2050, 2.1, 0}), InvalidArgument);
  EXPECT_THROW(rasterize_blob({EosClass::kIntact, 100, 100, 0, 1.0, 0}), InvalidArgument);
}

TEST(GenerateSlide, ZeroBlobs) {
  const SynthCase c = generate_slide(1, meta_of(1000, 800), {});
  EXPECT_TRUE(c.truth.points.empty());
  EXPECT_EQ(c.truth.planted_pec, 0);
  EXPECT_EQ(c.truth.label, Activity::kInactive);
  EXPECT_EQ(c.slide.read_labels({0, 0, 1000, 800}), ClassMask(1000, 800));
}

TEST(GenerateSlide, SixteenOfTwentyInOneField) {
  // Side 2144 at the default pitch; 16 blobs in a 4x4 block, 4 spread far apart.
  std::vector<BlobSpec> blobs;
  for (int i = 0; i < 16; ++i) blobs.push_back({EosClass::kIntact, 300.0 + (i % 4) * 120, 300.0 + (i / 4) * 120, 2050});
  for (int i = 0; i < 4; ++i) blobs.push_back({EosClass::kIntact, 2600.0 + i * 1700, 5800.0 - i * 1700, 2050});
  const SynthCase c = generate_slide(3, meta_of(8000, 6000), blobs);
  EXPECT_EQ(c.truth.hpf_side_px, 2144);
  EXPECT_EQ(c.truth.points.size(), 20u);
  EXPECT_EQ(c.truth.planted_pec, 16);
  EXPECT_EQ(c.truth.label, Activity::kActive);
  EXPECT_EQ(c.truth.planted_pec_rect.w, 2144);
}

TEST(GenerateSlide, Errors) {
  const std::vector<BlobSpec> out{{EosClass::kIntact, 5.0, 50.0, 2050}};
  EXPECT_THROW(generate_slide(1, meta_of(500, 500), out), InvalidArgument);
  const std::vector<BlobSpec> close{{EosClass::kIntact, 100.0, 100.0, 2050}, {EosClass::kIntact, 152.0, 100.0, 2050}};
  EXPECT_THROW(generate_slide(1, meta_of(500, 500), close), InvalidArgument);
  const std::vector<BlobSpec> ok{{EosClass::kIntact, 100.0, 100.0, 2050}, {EosClass::kIntact, 160.0, 100.0, 2050}};
  EXPECT_NO_THROW(generate_slide(1, meta_of(500, 500), ok));
}

TEST(GenerateSlide, MaskMatchesRenderedPixelsAndTruth) {
  std::vector<BlobSpec> blobs;
  std::mt19937_64 rng(62);
  std::uniform_int_distribution<int64_t> area(1000, 7000);
  for (int i = 0; i < 25; ++i) {
    blobs.push_back({i % 3 ? EosClass::kIntact : EosClass::kNotIntact, 80.0 + (i % 5) * 180, 80.0 + (i / 5) * 180,
                     area(rng), 1.3, 0.1 * i});
  }
  SynthOptions opts;
  opts.margin_px = 10;
  const SynthCase c = generate_slide(9, meta_of(950, 950), blobs, opts);
  const Rect all{0, 0, 950, 950};
  const RgbRaster px = c.slide.read_region(all);
  const ClassMask lab = c.slide.read_labels(all);
  for (int64_t y = 0; y < 950; ++y) {
    for (int64_t x = 0; x < 950; ++x) {
      const Rgb p = px.at(x, y);
      const Label l = lab.at(x, y);
      if (l == Label::kIntact) {
        ASSERT_EQ(p, OracleSegmenter::kIntactColor);
      } else if (l == Label::kNotIntact) {
        ASSERT_EQ(p, OracleSegmenter::kNotIntactColor);
      } else if (x < 10 || y < 10 || x >= 940 || y >= 940) {
        ASSERT_EQ(p, kWhite);
      } else {
        ASSERT_LT(p.g, 200);
        ASSERT_NE(p, OracleSegmenter::kIntactColor);
      }
    }
  }
  // Truth points are exactly what the counter extracts from the mask.
  const auto pts = extract_eos_points(lab, EosClass::kIntact);
  ASSERT_EQ(pts.size(), c.truth.points.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    const auto it = std::find(c.truth.points.begin(), c.truth.points.end(), pts[i]);
    EXPECT_NE(it, c.truth.points.end());
  }
  EXPECT_EQ(extract_eos_points(lab, EosClass::kNotIntact).size(), c.truth.not_intact_points.size());

  // Regions read piecewise agree with the whole.
  EXPECT_EQ(c.slide.read_region({123, 77, 300, 211}), px.crop({123, 77, 300, 211}));
  EXPECT_EQ(c.slide.read_labels({500, 3, 17, 900}), lab.crop({500, 3, 17, 900}));
  EXPECT_THROW(c.slide.read_region({900, 900, 100, 100}), InvalidArgument);
}

TEST(GenerateSlide, DeterministicPerSeed) {
  const std::vector<BlobSpec> blobs{{EosClass::kIntact, 200.0, 200.0, 2500}};
  const SynthCase a = generate_slide(5, meta_of(400, 400), blobs);
  const SynthCase b = generate_slide(5, meta_of(400, 400), blobs);
  const SynthCase c = generate_slide(6, meta_of(400, 400), blobs);
  EXPECT_EQ(a.slide.read_region({0, 0, 400, 400}), b.slide.read_region({0, 0, 400, 400}));
  EXPECT_NE(a.slide.read_region({0, 0, 400, 400}), c.slide.read_region({0, 0, 400, 400}));
}

TEST(BruteForce, Examples) {
  EXPECT_EQ(brute_force_pec({}, 50, 200, 100), (WindowPeak{0, {0, 0, 50, 50}}));
  const std::vector<EosPoint> one{{120.0, 70.0, 1}};
  EXPECT_EQ(brute_force_pec(one, 50, 200, 100), (WindowPeak{1, {71, 21, 50, 50}}));
  EXPECT_THROW(brute_force_pec(one, 0, 200, 100), InvalidArgument);
}

TEST(RandomSlide, HitsTargetWithSeparatedBlobs) {
  SynthOptions opts;
  opts.margin_px = 256;
  for (int64_t target : {0, 1, 7, 14, 15, 16, 30}) {
    const SynthCase c = generate_random_slide(100 + uint64_t(target), meta_of(4096, 4096), {target}, opts);
    EXPECT_EQ(c.truth.planted_pec, target);
    EXPECT_EQ(c.truth.planted_pec, brute_force_pec(c.truth.points, c.truth.hpf_side_px, 4096, 4096).count);
    EXPECT_EQ(c.truth.label, classify(target));
    // Centroids keep 448 px from the glass; no blob reaches further than 64 px.
    for (const auto& b : c.slide.blobs()) EXPECT_TRUE((Rect{640, 640, 4096 - 1280, 4096 - 1280}).contains(b.bbox));
  }
}

TEST(RandomCohort, MixAndDeterminism) {
  CohortParams p;
  p.width_px = p.height_px = 3072;
  const auto none = random_cohort(7, 10, 0.0, p);
  const auto all = random_cohort(7, 10, 1.0, p);
  ASSERT_EQ(none.size(), 10u);
  for (const auto& c : none) EXPECT_LT(c.truth.planted_pec, 15);
  for (const auto& c : all) EXPECT_GE(c.truth.planted_pec, 15);

  const auto half = random_cohort(8, 10, 0.5, p);
  int active = 0;
  for (const auto& c : half) active += c.truth.label == Activity::kActive;
  EXPECT_EQ(active, 5);
  EXPECT_EQ(half[3].truth.slide_id, "synth_0003");

  const auto again = random_cohort(8, 10, 0.5, p);
  for (size_t i = 0; i < half.size(); ++i) {
    EXPECT_EQ(ground_truth_json(half[i].truth), ground_truth_json(again[i].truth));
    EXPECT_EQ(half[i].slide.read_region({1000, 1000, 600, 600}), again[i].slide.read_region({1000, 1000, 600, 600}));
  }
  EXPECT_THROW(random_cohort(1, 0, 0.5, p), InvalidArgument);
  EXPECT_THROW(random_cohort(1, 3, 1.5, p), InvalidArgument);
}

TEST(GroundTruthJson, RoundTrip) {
  const SynthCase c = generate_random_slide(77, meta_of(4096, 4096, "gt"), {12});
  const SynthGroundTruth back = parse_ground_truth(ground_truth_json(c.truth));
  EXPECT_EQ(back.slide_id, "gt");
  EXPECT_EQ(back.points, c.truth.points);
  EXPECT_EQ(back.planted_pec, 12);
  EXPECT_EQ(back.planted_pec_rect, c.truth.planted_pec_rect);
  EXPECT_EQ(back.label, Activity::kInactive);
  EXPECT_EQ(back.hpf_side_px, 2144);
  EXPECT_THROW(parse_ground_truth("{"), FormatError);
  EXPECT_THROW(parse_ground_truth(R"({"points": []})"), FormatError);
}

TEST(WriteCase, ContainersMatchTheGenerator) {
  testing::TempDir dir;
  std::vector<BlobSpec> blobs{{EosClass::kIntact, 300.0, 300.0, 2050}, {EosClass::kNotIntact, 700.0, 500.0, 2600}};
  const SynthCase c = generate_slide(4, meta_of(1200, 900, "w"), blobs);
  write_synth_case(c, dir.path());
  const auto slide = TiledSlide::open(dir / "slide");
  EXPECT_EQ(slide->meta(), c.slide.meta());
  EXPECT_EQ(slide->read_region({0, 0, 1200, 900}), c.slide.read_region({0, 0, 1200, 900}));
  EXPECT_EQ(read_mask(dir / "mask"), c.slide.read_labels({0, 0, 1200, 900}));
  const SynthGroundTruth t = parse_ground_truth(slurp(dir / "ground_truth.json"));
  EXPECT_EQ(t.points, c.truth.points);
}

}  // namespace
}  // namespace eoscount
