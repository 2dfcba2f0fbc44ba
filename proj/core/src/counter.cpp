#include "eoscount/counter.hpp"

#include <algorithm>
#include <numeric>

#include "eoscount/errors.hpp"
#include "eoscount/tiler.hpp"

namespace eoscount {

void CountingRule::validate() const {
  if (!(min_area_px > 0 && min_area_px < single_max_area_px)) {
    throw InvalidArgument("counting rule needs 0 < min_area_px < single_max_area_px");
  }
  if (increment_area_px <= 0) throw InvalidArgument("increment_area_px must be positive");
}

RunLabeler::RunLabeler(Connectivity connectivity, bool keep_runs)
    : connectivity_(connectivity), keep_runs_(keep_runs) {}

uint32_t RunLabeler::find(uint32_t a) {
  uint32_t root = a;
  while (parent_[root] != root) root = parent_[root];
  while (parent_[a] != root) {
    const uint32_t next = parent_[a];
    parent_[a] = root;
    a = next;
  }
  return root;
}

uint32_t RunLabeler::unite(uint32_t a, uint32_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return a;
  if (b < a) std::swap(a, b);
  parent_[b] = a;
  return a;
}

void RunLabeler::push_row(int64_t y, std::span<const PixelRun> runs) {
  if (y <= last_y_) throw InvalidArgument("rows must be pushed in increasing order");
  if (y != last_y_ + 1) {
    prev_runs_.clear();
    prev_labels_.clear();
  }
  last_y_ = y;

  // Runs [a0,a1) and [b0,b1) on adjacent rows touch when they overlap, or
  // with 8-connectivity also when they meet diagonally.
  const int64_t slack = connectivity_ == Connectivity::kEight ? 1 : 0;
  cur_labels_.assign(runs.size(), 0);
  size_t j = 0;
  for (size_t i = 0; i < runs.size(); ++i) {
    const PixelRun& r = runs[i];
    while (j < prev_runs_.size() && prev_runs_[j].x1 + slack <= r.x0) ++j;
    uint32_t label = UINT32_MAX;
    for (size_t k = j; k < prev_runs_.size() && prev_runs_[k].x0 < r.x1 + slack; ++k) {
      label = label == UINT32_MAX ? find(prev_labels_[k]) : unite(label, prev_labels_[k]);
    }
    if (label == UINT32_MAX) {
      label = static_cast<uint32_t>(parent_.size());
      parent_.push_back(label);
      stats_.emplace_back();
    }
    // Stats accumulate on the label the run was given; finish() folds them into roots.
    Stats& s = stats_[label];
    const int64_t len = r.length();
    s.area += len;
    s.sum_x += (r.x0 + r.x1 - 1) * len / 2;
    s.sum_y += y * len;
    s.x0 = std::min(s.x0, r.x0);
    s.x1 = std::max(s.x1, r.x1);
    s.y0 = std::min(s.y0, y);
    s.y1 = std::max(s.y1, y + 1);
    cur_labels_[i] = label;
    if (keep_runs_) all_runs_.emplace_back(label, r);
  }
  prev_runs_.assign(runs.begin(), runs.end());
  prev_labels_.swap(cur_labels_);
}

std::vector<EosRegion> RunLabeler::finish(EosClass cls) {
  const size_t n = parent_.size();
  std::vector<Stats> merged(n);
  std::vector<uint32_t> roots(n);
  for (uint32_t l = 0; l < n; ++l) {
    roots[l] = find(l);
    Stats& m = merged[roots[l]];
    const Stats& s = stats_[l];
    m.area += s.area;
    m.sum_x += s.sum_x;
    m.sum_y += s.sum_y;
    m.x0 = std::min(m.x0, s.x0);
    m.x1 = std::max(m.x1, s.x1);
    m.y0 = std::min(m.y0, s.y0);
    m.y1 = std::max(m.y1, s.y1);
  }
  std::vector<int64_t> slot(n, -1);
  std::vector<EosRegion> out;
  for (uint32_t l = 0; l < n; ++l) {
    if (roots[l] != l) continue;
    const Stats& m = merged[l];
    EosRegion r;
    r.cls = cls;
    r.area_px = m.area;
    r.bbox = {m.x0, m.y0, m.x1 - m.x0, m.y1 - m.y0};
    r.cx = static_cast<double>(m.sum_x) / static_cast<double>(m.area);
    r.cy = static_cast<double>(m.sum_y) / static_cast<double>(m.area);
    slot[l] = static_cast<int64_t>(out.size());
    out.push_back(std::move(r));
  }
  if (keep_runs_) {
    for (const auto& [label, run] : all_runs_) out[static_cast<size_t>(slot[roots[label]])].runs.push_back(run);
    for (auto& r : out) {
      std::sort(r.runs.begin(), r.runs.end(),
                [](const PixelRun& a, const PixelRun& b) { return std::tie(a.y, a.x0) < std::tie(b.y, b.x0); });
    }
  }
  parent_.clear();
  stats_.clear();
  all_runs_.clear();
  prev_runs_.clear();
  prev_labels_.clear();
  last_y_ = INT64_MIN;
  return out;
}

std::vector<EosRegion> connected_components(const BinaryMask& channel, Connectivity connectivity, EosClass cls,
                                            bool keep_runs) {
  RunLabeler labeler(connectivity, keep_runs);
  std::vector<PixelRun> runs;
  for (int64_t y = 0; y < channel.height(); ++y) {
    runs.clear();
    auto row = channel.row(y);
    int64_t x = 0;
    const int64_t w = channel.width();
    while (x < w) {
      while (x < w && !row[static_cast<size_t>(x)]) ++x;
      if (x == w) break;
      const int64_t start = x;
      while (x < w && row[static_cast<size_t>(x)]) ++x;
      runs.push_back({y, start, x});
    }
    labeler.push_row(y, runs);
  }
  return labeler.finish(cls);
}

std::vector<EosRegion> connected_components(const FusedMask& fused, EosClass cls, Connectivity connectivity,
                                            bool keep_runs) {
  RunLabeler labeler(connectivity, keep_runs);
  std::vector<PixelRun> runs;
  for (int64_t y = 0; y < fused.height(); ++y) {
    runs.clear();
    if (cls == EosClass::kIntact) {
      append_row_runs(fused.intact().row(y), {}, y, runs);
    } else {
      append_row_runs(fused.not_intact().row(y), fused.intact().row(y), y, runs);
    }
    labeler.push_row(y, runs);
  }
  return labeler.finish(cls);
}

int64_t eos_count_of_area(int64_t area_px, const CountingRule& rule) {
  if (area_px < 0) throw InvalidArgument("area must be non-negative");
  if (area_px <= rule.min_area_px) return 0;
  if (area_px <= rule.single_max_area_px) return 1;
  return 1 + (area_px - rule.single_max_area_px) / rule.increment_area_px;
}

void assign_counts(std::vector<EosRegion>& regions, const CountingRule& rule) {
  for (auto& r : regions) r.eos_count = eos_count_of_area(r.area_px, rule);
}

std::vector<EosPoint> points_of(std::span<const EosRegion> regions) {
  std::vector<EosPoint> out;
  for (const auto& r : regions) {
    if (r.eos_count > 0) out.push_back({r.cx, r.cy, r.eos_count});
  }
  return out;
}

std::vector<EosPoint> extract_eos_points(const ClassMask& mask, EosClass cls, const CountingRule& rule,
                                         Connectivity connectivity) {
  auto regions = connected_components(mask.channel(cls), connectivity, cls);
  assign_counts(regions, rule);
  return points_of(regions);
}

int64_t count_patch(const ClassMask& mask, const CountingRule& rule, Connectivity connectivity) {
  return total_multiplicity(extract_eos_points(mask, EosClass::kIntact, rule, connectivity));
}

int64_t total_multiplicity(std::span<const EosPoint> points) {
  return std::accumulate(points.begin(), points.end(), int64_t{0},
                         [](int64_t acc, const EosPoint& p) { return acc + p.multiplicity; });
}

}  // namespace eoscount
