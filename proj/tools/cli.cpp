#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "eoscount/errors.hpp"
#include "eoscount/metrics.hpp"
#include "eoscount/pipeline.hpp"
#include "eoscount/report.hpp"
#include "eoscount/synth.hpp"

namespace eoscount::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Shared flags
// ---------------------------------------------------------------------------

struct CountingFlags {
  double hpf_area_mm2 = 0.3;
  int64_t threshold = 15;
  int64_t min_area = 1800;
  int64_t single_max_area = 3000;
  int64_t increment_area = 2000;
};

void add_counting_flags(CLI::App& cmd, CountingFlags& f) {
  cmd.add_option("--hpf-area-mm2", f.hpf_area_mm2, "High-power field area in mm^2")->capture_default_str();
  cmd.add_option("--threshold", f.threshold, "Peak count at or above which a slide is Active")->capture_default_str();
  cmd.add_option("--min-area", f.min_area, "Regions at or below this area (px) count zero")->capture_default_str();
  cmd.add_option("--single-max-area", f.single_max_area, "Regions up to this area (px) count one")
      ->capture_default_str();
  cmd.add_option("--increment-area", f.increment_area, "Each further this many px adds one eosinophil")
      ->capture_default_str();
}

struct PipelineFlags {
  CountingFlags counting;
  std::string segmenter = "oracle";
  std::optional<double> mpp;
  double prob_threshold = 0.5;
  int64_t patch_size = 448;
  double bg_limit = 0.85;
  int64_t workers = 1;
  int64_t memory_budget = kDefaultMemoryBudget;
  std::string peak_search = "exact";
};

void add_pipeline_flags(CLI::App& cmd, PipelineFlags& f) {
  add_counting_flags(cmd, f.counting);
  cmd.add_option("--segmenter", f.segmenter, "oracle | masks:<path>")->capture_default_str();
  cmd.add_option("--mpp", f.mpp, "Override the slide's microns per pixel");
  cmd.add_option("--prob-threshold", f.prob_threshold, "Per-pixel probability cut")->capture_default_str();
  cmd.add_option("--patch-size", f.patch_size, "Segmenter input size (px)")->capture_default_str();
  cmd.add_option("--bg-limit", f.bg_limit, "Patches with at least this background fraction are skipped")
      ->capture_default_str();
  cmd.add_option("--workers", f.workers, "Segmentation worker threads")->capture_default_str();
  cmd.add_option("--memory-budget", f.memory_budget, "Memory budget, e.g. 2GB or a byte count")
      ->transform(CLI::AsSizeValue(false))
      ->capture_default_str();
  cmd.add_option("--peak-search", f.peak_search, "exact | density (approximate, 16 px grid)")
      ->check(CLI::IsMember({"exact", "density"}))
      ->capture_default_str();
}

CountingRule make_rule(const CountingFlags& f) {
  CountingRule rule;
  rule.min_area_px = f.min_area;
  rule.single_max_area_px = f.single_max_area;
  rule.increment_area_px = f.increment_area;
  return rule;
}

HpfConfig make_hpf(const CountingFlags& f) { return {f.hpf_area_mm2, f.threshold}; }

// Builds and validates the configuration; nothing has touched the disk yet.
PipelineConfig make_config(const PipelineFlags& f) {
  PipelineConfig cfg;
  cfg.tiler.patch_size = f.patch_size;
  cfg.tiler.background_fraction_limit = f.bg_limit;
  cfg.segmenter.prob_threshold = f.prob_threshold;
  cfg.counting = make_rule(f.counting);
  cfg.hpf = make_hpf(f.counting);
  cfg.microns_per_pixel = f.mpp;
  cfg.worker_count = f.workers;
  cfg.memory_budget_bytes = f.memory_budget;
  cfg.peak_search = f.peak_search == "density" ? PeakSearch::kDensity : PeakSearch::kExact;
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

struct SegmenterChoice {
  bool oracle = true;
  fs::path masks;
};

SegmenterChoice parse_segmenter(const std::string& s) {
  if (s == "oracle") return {};
  if (s.starts_with("masks:") && s.size() > 6) return {false, fs::path(s.substr(6))};
  throw UsageError("--segmenter must be 'oracle' or 'masks:<path>', got '" + s + "'");
}

// Accepts a container directory, its manifest.json, or a directory holding
// the container under `sub` (the layout `synth` writes).
std::optional<fs::path> find_container(const fs::path& p, const char* sub) {
  if (fs::is_regular_file(p) && p.filename() == "manifest.json") return p.parent_path();
  if (fs::is_regular_file(p / "manifest.json")) return p;
  if (fs::is_regular_file(p / sub / "manifest.json")) return p / sub;
  return std::nullopt;
}

fs::path container(const fs::path& p, const char* sub) {
  if (auto c = find_container(p, sub)) return *c;
  throw IoError("no container found at " + p.string());
}

std::string file_stem(const std::string& id) {
  std::string s = id;
  for (char& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return s.empty() || s[0] == '.' ? "_" + s : s;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<fs::path> sorted_entries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

class ZeroMask final : public LabelSource {
 public:
  ZeroMask(int64_t w, int64_t h) : w_(w), h_(h) {}
  int64_t width() const override { return w_; }
  int64_t height() const override { return h_; }
  ClassMask read_labels(const Rect& r) const override { return ClassMask(r.w, r.h); }

 private:
  int64_t w_, h_;
};

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  PipelineFlags pipeline;
  std::vector<std::string> slides;
  std::string cohort;
  std::string out = ".";
  bool overlay = false;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  const PipelineConfig cfg = make_config(a.pipeline);
  const SegmenterChoice seg = parse_segmenter(a.pipeline.segmenter);
  if (a.slides.empty() && a.cohort.empty()) throw UsageError("give --slide and/or --cohort");

  struct Item {
    std::string name;
    fs::path path;
  };
  std::vector<Item> items;
  for (const auto& s : a.slides) {
    fs::path p = fs::path(s).lexically_normal();
    if (p.filename().empty()) p = p.parent_path();
    items.push_back({p.filename().string(), s});
  }
  if (!a.cohort.empty()) {
    if (!fs::is_directory(a.cohort)) {
      err << "error: cohort directory not found: " << a.cohort << "\n";
      return kFailure;
    }
    for (const auto& p : sorted_entries(a.cohort)) {
      if (fs::is_directory(p)) items.push_back({p.filename().string(), p});
    }
  }
  if (items.empty()) {
    err << "error: no slides to analyze\n";
    return kFailure;
  }

  const OracleSegmenter oracle(cfg.tiler.patch_size);
  const fs::path out_dir(a.out);
  std::vector<PecResult> results;
  std::set<std::string> seen;
  int failures = 0;
  for (const Item& item : items) {
    try {
      const fs::path slide_dir = container(item.path, "slide");
      const auto slide = TiledSlide::open(slide_dir);
      const SlideMeta& meta = slide->meta();
      if (seen.contains(meta.id)) throw InvalidArgument("duplicate slide_id '" + meta.id + "'");
      std::unique_ptr<Segmenter> masks;
      if (!seg.oracle) {
        // The slide container itself never doubles as its mask.
        auto mask_at = [&](const fs::path& p) {
          auto c = find_container(p, "mask");
          if (c && fs::equivalent(*c, slide_dir)) c = find_container(p / "mask", "mask");
          return c;
        };
        auto where = mask_at(seg.masks / item.name);
        if (!where) where = mask_at(seg.masks);
        if (!where) throw IoError("no mask container for '" + item.name + "' under " + seg.masks.string());
        auto labels = TiledMask::open(*where);
        if (labels->width() != meta.width_px || labels->height() != meta.height_px) {
          throw InvalidArgument("mask container " + where->string() + " does not match the slide size");
        }
        masks = std::make_unique<MaskFileSegmenter>(std::move(labels), cfg.tiler.patch_size);
      }
      const Segmenter& backend = masks ? *masks : static_cast<const Segmenter&>(oracle);
      const SlideAnalysis r = analyze_slide(*slide, cfg, backend, {.keep_mask = a.overlay});
      seen.insert(meta.id);
      write_text(out_dir / (file_stem(meta.id) + ".json"), slide_report_json(r, cfg, backend.name()));
      if (a.overlay) render_overlay(*slide, *r.mask, r.pec.hpf_rect, out_dir / (file_stem(meta.id) + "_overlay.png"));
      results.push_back(r.pec);
      out << meta.id << '\t' << r.pec.peak_count << '\t' << to_string(r.pec.label) << '\n';
    } catch (const std::exception& e) {
      ++failures;
      err << "error: " << item.name << ": " << e.what() << "\n";
    }
  }
  if (results.empty()) return kFailure;
  const std::vector<PecResult> ranked = rank_slides(std::move(results));
  write_text(out_dir / "cohort.csv", cohort_csv(ranked));
  return failures > 0 ? kPartialFailure : kOk;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::vector<std::string> gt, pred;
  std::string counts;
  std::vector<std::string> reports, truth;
  CountingFlags counting;
  int64_t patch_size = 448;
  std::string empty_union = "one";
  bool roc = false;
  std::string out = ".";
};

struct LabeledCount {
  std::string slide_id;
  int64_t true_count = 0;
  int64_t pred_count = 0;
  Activity true_label = Activity::kInactive;
  Activity pred_label = Activity::kInactive;
};

void evaluate_masks(const EvaluateArgs& a, EvalReport& report) {
  ConfusionTally tally;
  ClassConfusion confusion;
  std::array<int64_t, 2> false_disc{0, 0}, predicted{0, 0};
  for (size_t i = 0; i < a.gt.size(); ++i) {
    const auto gt = TiledMask::open(container(a.gt[i], "mask"));
    const auto pred = TiledMask::open(container(a.pred[i], "mask"));
    if (gt->width() != pred->width() || gt->height() != pred->height()) {
      throw InvalidArgument("unpaired inputs: " + a.gt[i] + " and " + a.pred[i] + " differ in size");
    }
    const int64_t w = gt->width(), h = gt->height();
    for (const Rect& r : GridPlan::for_raster(w, h, a.patch_size).patches(w, h)) {
      tally.add_image(gt->read_labels(r), pred->read_labels(r));
    }
    for (int64_t y = 0; y < h; y += 256) {
      const Rect band{0, y, w, std::min<int64_t>(256, h - y)};
      const ClassConfusion c = class_confusion(gt->read_labels(band), pred->read_labels(band));
      for (size_t r = 0; r < 2; ++r) {
        for (size_t k = 0; k < 2; ++k) confusion.counts[r][k] += c.counts[r][k];
      }
    }
    const FusedMask gt_planes = fused_from_labels(*gt);
    const FusedMask pred_planes = fused_from_labels(*pred);
    for (size_t c = 0; c < 2; ++c) {
      const auto g = connected_components(gt_planes, kEosClasses[c], Connectivity::kEight, true);
      const auto p = connected_components(pred_planes, kEosClasses[c], Connectivity::kEight, true);
      const double fdr = region_fdr(g, p);
      false_disc[c] += std::llround(fdr * static_cast<double>(std::max<size_t>(1, p.size())));
      predicted[c] += static_cast<int64_t>(p.size());
    }
  }
  for (size_t r = 0; r < 2; ++r) {
    const int64_t n = confusion.counts[r][0] + confusion.counts[r][1];
    if (n > 0) {
      confusion.rows[r] = std::array<double, 2>{static_cast<double>(confusion.counts[r][0]) / static_cast<double>(n),
                                                static_cast<double>(confusion.counts[r][1]) / static_cast<double>(n)};
    }
  }
  report.images = static_cast<int64_t>(tally.image_count());
  report.segmentation = seg_scores(tally, report.policy);
  report.class_confusion = confusion;
  report.region_fdr = std::array<double, 2>{
      static_cast<double>(false_disc[0]) / static_cast<double>(std::max<int64_t>(1, predicted[0])),
      static_cast<double>(false_disc[1]) / static_cast<double>(std::max<int64_t>(1, predicted[1]))};
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

int64_t parse_count(const std::string& s, const fs::path& file, size_t line) {
  try {
    size_t used = 0;
    const int64_t v = std::stoll(s, &used);
    if (used == s.size() && v >= 0) return v;
  } catch (const std::exception&) {
  }
  throw FormatError(file.string() + ":" + std::to_string(line) + ": '" + s + "' is not a non-negative integer");
}

std::vector<LabeledCount> read_counts_csv(const fs::path& path, const HpfConfig& hpf) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + " is empty");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) -> std::optional<size_t> {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? std::nullopt : std::optional<size_t>(static_cast<size_t>(it - header.begin()));
  };
  const auto c_id = column("slide_id"), c_true = column("true_count"), c_pred = column("pred_count");
  const auto c_label = column("true_label");
  if (!c_id || !c_true || !c_pred) {
    throw FormatError(path.string() + ": header needs slide_id,true_count,pred_count[,true_label]");
  }
  std::vector<LabeledCount> rows;
  for (size_t n = 2; std::getline(in, line); ++n) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < header.size()) throw FormatError(path.string() + ":" + std::to_string(n) + ": missing cells");
    LabeledCount r;
    r.slide_id = cells[*c_id];
    r.true_count = parse_count(cells[*c_true], path, n);
    r.pred_count = parse_count(cells[*c_pred], path, n);
    r.true_label = c_label ? activity_from_string(cells[*c_label]) : classify(r.true_count, hpf);
    r.pred_label = classify(r.pred_count, hpf);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<fs::path> json_files(const std::vector<std::string>& inputs, bool recursive, const std::string& name) {
  std::vector<fs::path> out;
  for (const auto& s : inputs) {
    const fs::path p(s);
    if (!fs::is_directory(p)) {
      out.push_back(p);
      continue;
    }
    std::vector<fs::path> found;
    auto take = [&](const fs::path& f) {
      if (f.extension() == ".json" && (name.empty() || f.filename() == name)) found.push_back(f);
    };
    if (recursive) {
      for (const auto& e : fs::recursive_directory_iterator(p)) take(e.path());
    } else {
      for (const auto& e : fs::directory_iterator(p)) take(e.path());
    }
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

std::vector<LabeledCount> pair_reports(const EvaluateArgs& a, std::ostream& err) {
  std::map<std::string, PecResult> reports;
  for (const auto& f : json_files(a.reports, false, "")) {
    PecResult r;
    try {
      r = parse_slide_report(read_text(f));
    } catch (const FormatError&) {
      err << "warning: skipping " << f.string() << " (not a slide report)\n";
      continue;
    }
    if (!reports.emplace(r.slide_id, r).second) throw InvalidArgument("duplicate report for '" + r.slide_id + "'");
  }
  std::map<std::string, SynthGroundTruth> truth;
  for (const auto& f : json_files(a.truth, true, "ground_truth.json")) {
    SynthGroundTruth t = parse_ground_truth(read_text(f));
    const std::string id = t.slide_id;
    if (!truth.emplace(id, std::move(t)).second) throw InvalidArgument("duplicate ground truth for '" + id + "'");
  }
  std::vector<std::string> unpaired;
  for (const auto& [id, r] : reports) {
    if (!truth.contains(id)) unpaired.push_back(id);
  }
  for (const auto& [id, t] : truth) {
    if (!reports.contains(id)) unpaired.push_back(id);
  }
  if (!unpaired.empty()) {
    std::string list;
    for (const auto& id : unpaired) list += (list.empty() ? "" : ", ") + id;
    throw InvalidArgument("unpaired inputs: " + list);
  }
  if (reports.empty()) throw InvalidArgument("no slide reports found");
  std::vector<LabeledCount> rows;
  for (const auto& [id, r] : reports) {
    const SynthGroundTruth& t = truth.at(id);
    rows.push_back({id, t.planted_pec, r.peak_count, t.label, r.label});
  }
  return rows;
}

void evaluate_counts(const std::vector<LabeledCount>& rows, EvalReport& report, std::ostream& err) {
  std::vector<CountPair> pairs;
  std::vector<Activity> pred, gt;
  std::vector<double> scores;
  for (const auto& r : rows) {
    pairs.push_back({r.true_count, r.pred_count});
    pred.push_back(r.pred_label);
    gt.push_back(r.true_label);
    scores.push_back(static_cast<double>(r.pred_count));
  }
  report.images = static_cast<int64_t>(rows.size());
  report.counting = count_error_stats(pairs);
  report.classification = classification_report(pred, gt);
  const auto active = std::count(gt.begin(), gt.end(), Activity::kActive);
  if (active > 0 && active < static_cast<std::ptrdiff_t>(gt.size())) {
    report.roc = roc_sweep(scores, gt);
  } else {
    err << "warning: ground truth has a single class; ROC skipped\n";
  }
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  const bool masks = !a.gt.empty() || !a.pred.empty();
  const bool counts = !a.counts.empty();
  const bool reports = !a.reports.empty() || !a.truth.empty();
  if (masks + counts + reports != 1) throw UsageError("give exactly one of --gt/--pred, --counts, --reports/--truth");
  if (masks && a.gt.size() != a.pred.size()) throw UsageError("unpaired inputs: --gt and --pred counts differ");
  if (reports && (a.reports.empty() || a.truth.empty())) throw UsageError("--reports and --truth go together");
  if (a.patch_size < 1) throw UsageError("--patch-size must be positive");
  const HpfConfig hpf = make_hpf(a.counting);
  try {
    hpf.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  EvalReport report;
  report.policy = a.empty_union == "skip" ? EmptyUnionPolicy::kSkipTerm : EmptyUnionPolicy::kCountAsOne;
  if (masks) {
    evaluate_masks(a, report);
  } else {
    evaluate_counts(counts ? read_counts_csv(a.counts, hpf) : pair_reports(a, err), report, err);
  }
  const fs::path out_dir(a.out);
  write_text(out_dir / "eval_report.json", eval_report_json(report));
  if (a.roc) {
    if (!report.roc) {
      err << "error: --roc requested but no ROC curve could be computed\n";
      return kFailure;
    }
    write_text(out_dir / "roc.csv", roc_csv(*report.roc));
  }
  if (report.segmentation) out << "mIoU\t" << report.segmentation->overall.m_iou << '\n';
  if (report.counting) out << "MAE\t" << report.counting->mae << '\n';
  if (report.classification) out << "accuracy\t" << report.classification->accuracy << '\n';
  if (report.roc) out << "AUC\t" << report.roc->auc << "\nbest_threshold\t" << report.roc->best_threshold << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
  CountingFlags counting;
  uint64_t seed = 0;
  std::optional<int64_t> pec;
  std::optional<int64_t> n;
  double mix = 0.5;
  int64_t width = 4096;
  int64_t height = 4096;
  int64_t tile_size = kDefaultTileSize;
  double mpp = kDefaultMicronsPerPixel;
  int64_t margin = 0;
  int64_t max_pec = 30;
  std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream&) {
  SynthOptions options;
  options.rule = make_rule(a.counting);
  options.hpf = make_hpf(a.counting);
  options.margin_px = a.margin;
  SlideMeta meta;
  meta.width_px = a.width;
  meta.height_px = a.height;
  meta.microns_per_pixel = a.mpp;
  meta.tile_size = a.tile_size;
  meta.id = "synth_" + std::to_string(a.seed);
  try {
    options.rule.validate();
    options.hpf.validate();
    meta.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (a.n && a.pec) throw UsageError("--pec and --n are exclusive");
  const fs::path out_dir(a.out);

  if (a.n) {
    CohortParams params{a.width, a.height, a.mpp, a.tile_size, a.max_pec};
    const std::vector<SynthCase> cohort = random_cohort(a.seed, *a.n, a.mix, params, options);
    std::string csv = "slide_id,planted_pec,label\n";
    for (const SynthCase& c : cohort) {
      write_synth_case(c, out_dir / c.truth.slide_id);
      csv += c.truth.slide_id + "," + std::to_string(c.truth.planted_pec) + "," + to_string(c.truth.label) + "\n";
      out << c.truth.slide_id << '\t' << c.truth.planted_pec << '\t' << to_string(c.truth.label) << '\n';
    }
    write_text(out_dir / "cohort_truth.csv", csv);
    return kOk;
  }

  LayoutParams layout;
  layout.target_pec = a.pec ? *a.pec : static_cast<int64_t>(a.seed % static_cast<uint64_t>(a.max_pec + 1));
  const SynthCase c = generate_random_slide(a.seed, meta, layout, options);
  write_synth_case(c, out_dir);
  out << c.truth.slide_id << '\t' << c.truth.planted_pec << '\t' << to_string(c.truth.label) << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// rank
// ---------------------------------------------------------------------------

struct RankArgs {
  std::vector<std::string> reports;
  std::string out;
};

int cmd_rank(const RankArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<PecResult> results;
  for (const auto& s : a.reports) {
    const fs::path p(s);
    if (fs::is_directory(p)) {
      for (const auto& f : json_files({s}, false, "")) {
        try {
          results.push_back(parse_slide_report(read_text(f)));
        } catch (const FormatError&) {
          err << "warning: skipping " << f.string() << " (not a slide report)\n";
        }
      }
    } else {
      results.push_back(parse_slide_report(read_text(p)));
    }
  }
  if (results.empty()) {
    err << "error: no slide reports found\n";
    return kFailure;
  }
  const std::string csv = cohort_csv(rank_slides(std::move(results)));
  if (a.out.empty() || a.out == "-") {
    out << csv;
  } else {
    write_text(a.out, csv);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// overlay
// ---------------------------------------------------------------------------

struct OverlayArgs {
  CountingFlags counting;
  std::optional<double> mpp;
  std::string slide, mask, report, out;
  bool tiled = false;
};

int cmd_overlay(const OverlayArgs& a, std::ostream& out, std::ostream&) {
  const HpfConfig hpf = make_hpf(a.counting);
  const CountingRule rule = make_rule(a.counting);
  try {
    hpf.validate();
    rule.validate();
    if (a.mpp && !(*a.mpp > 0.0)) throw InvalidArgument("--mpp must be positive");
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const auto slide = TiledSlide::open(container(a.slide, "slide"));
  const SlideMeta& meta = slide->meta();
  std::shared_ptr<const LabelSource> mask;
  if (a.mask.empty()) {
    mask = std::make_shared<ZeroMask>(meta.width_px, meta.height_px);
  } else {
    mask = TiledMask::open(container(a.mask, "mask"));
  }

  Rect hpf_rect;
  if (!a.report.empty()) {
    hpf_rect = parse_slide_report(read_text(a.report)).hpf_rect;
  } else {
    const int64_t side = hpf_side_px(hpf.hpf_area_mm2, a.mpp.value_or(meta.microns_per_pixel));
    std::vector<EosPoint> points;
    if (!a.mask.empty()) {
      const FusedMask planes = fused_from_labels(*mask);
      auto regions = connected_components(planes, EosClass::kIntact);
      assign_counts(regions, rule);
      points = points_of(regions);
    }
    hpf_rect = peak_window(points, side, meta.width_px, meta.height_px).rect;
  }
  const fs::path written = render_overlay(*slide, *mask, hpf_rect, a.out,
                                          a.tiled ? OverlayFormat::kTiled : OverlayFormat::kImage);
  out << written.string() << '\n';
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Eosinophil segmentation, counting and peak-field analysis for whole-slide images", "eoscount"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", "eoscount 0.1.0");

  AnalyzeArgs analyze;
  CLI::App* c_analyze = app.add_subcommand("analyze", "Analyze slides and write per-slide reports and a cohort CSV");
  add_pipeline_flags(*c_analyze, analyze.pipeline);
  c_analyze->add_option("--slide", analyze.slides, "Slide container (repeatable)");
  c_analyze->add_option("--cohort", analyze.cohort, "Directory whose subdirectories are slides");
  c_analyze->add_option("--out", analyze.out, "Output directory")->capture_default_str();
  c_analyze->add_flag("--overlay", analyze.overlay, "Also write <slide>_overlay.png");

  EvaluateArgs evaluate;
  CLI::App* c_eval = app.add_subcommand("evaluate", "Score predictions against ground truth");
  add_counting_flags(*c_eval, evaluate.counting);
  c_eval->add_option("--gt", evaluate.gt, "Ground-truth mask container (repeatable, paired with --pred)");
  c_eval->add_option("--pred", evaluate.pred, "Predicted mask container (repeatable)");
  c_eval->add_option("--counts", evaluate.counts, "CSV with slide_id,true_count,pred_count[,true_label]");
  c_eval->add_option("--reports", evaluate.reports, "Slide report files or directories");
  c_eval->add_option("--truth", evaluate.truth, "ground_truth.json files or directories (searched recursively)");
  c_eval->add_option("--patch-size", evaluate.patch_size, "Image size for segmentation terms")->capture_default_str();
  c_eval->add_option("--empty-union", evaluate.empty_union, "Empty-union terms: one | skip")
      ->check(CLI::IsMember({"one", "skip"}))
      ->capture_default_str();
  c_eval->add_flag("--roc", evaluate.roc, "Also write roc.csv");
  c_eval->add_option("--out", evaluate.out, "Output directory")->capture_default_str();

  SynthArgs synth;
  CLI::App* c_synth = app.add_subcommand("synth", "Generate synthetic slides with planted eosinophils");
  add_counting_flags(*c_synth, synth.counting);
  c_synth->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  c_synth->add_option("--pec", synth.pec, "Planted peak count (default: drawn from the seed)")
      ->check(CLI::NonNegativeNumber);
  c_synth->add_option("--n", synth.n, "Generate a cohort of this many slides")->check(CLI::PositiveNumber);
  c_synth->add_option("--mix", synth.mix, "Fraction of Active slides in a cohort")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  c_synth->add_option("--width", synth.width, "Slide width (px)")->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--height", synth.height, "Slide height (px)")->check(CLI::PositiveNumber)->capture_default_str();
  c_synth->add_option("--tile-size", synth.tile_size, "Container tile size (px)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_synth->add_option("--mpp", synth.mpp, "Microns per pixel")->capture_default_str();
  c_synth->add_option("--margin", synth.margin, "White glass margin (px)")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c_synth->add_option("--max-pec", synth.max_pec, "Largest planted peak in a cohort")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_synth->add_option("--out", synth.out, "Output directory")->required();

  RankArgs rank;
  CLI::App* c_rank = app.add_subcommand("rank", "Rank slide reports by peak count");
  c_rank->add_option("reports", rank.reports, "Slide report files or directories")->required();
  c_rank->add_option("--out", rank.out, "CSV path (default: stdout)");

  OverlayArgs overlay;
  CLI::App* c_overlay = app.add_subcommand("overlay", "Render mask tint and the peak field over a slide");
  add_counting_flags(*c_overlay, overlay.counting);
  c_overlay->add_option("--mpp", overlay.mpp, "Override the slide's microns per pixel");
  c_overlay->add_option("--slide", overlay.slide, "Slide container")->required();
  c_overlay->add_option("--mask", overlay.mask, "Mask container (default: empty mask)");
  c_overlay->add_option("--report", overlay.report, "Take the field from this slide report");
  c_overlay->add_option("--out", overlay.out, "Output PNG, or directory with --tiled")->required();
  c_overlay->add_flag("--tiled", overlay.tiled, "Write a full-resolution tiled container");

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    if (cmd == c_analyze) return cmd_analyze(analyze, out, err);
    if (cmd == c_eval) return cmd_evaluate(evaluate, out, err);
    if (cmd == c_synth) return cmd_synth(synth, out, err);
    if (cmd == c_rank) return cmd_rank(rank, out, err);
    return cmd_overlay(overlay, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n" << cmd->help();
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace eoscount::cli
