#include "eoscount/pec.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "eoscount/errors.hpp"

namespace eoscount {

void HpfConfig::validate() const {
  if (!(std::isfinite(hpf_area_mm2) && hpf_area_mm2 > 0.0)) throw InvalidArgument("hpf_area_mm2 must be positive");
  if (activity_threshold < 1) throw InvalidArgument("activity_threshold must be >= 1");
}

const char* to_string(Activity a) { return a == Activity::kActive ? "Active" : "Inactive"; }

Activity activity_from_string(const std::string& s) {
  if (s == "Active") return Activity::kActive;
  if (s == "Inactive") return Activity::kInactive;
  throw InvalidArgument("unknown activity label '" + s + "'");
}

int64_t hpf_side_px(double area_mm2, double microns_per_pixel) {
  if (!std::isfinite(area_mm2) || area_mm2 <= 0.0 || !std::isfinite(microns_per_pixel) || microns_per_pixel <= 0.0) {
    throw InvalidArgument("hpf_side_px needs finite positive area and pixel pitch");
  }
  const double side_um = std::sqrt(area_mm2 * 1e6);
  return std::max<int64_t>(1, std::llround(side_um / microns_per_pixel));
}

namespace {

// Range-add / global max with the leftmost argmax. Node value is the max of
// its subtree including every pending add at or below it.
class MaxAddTree {
 public:
  explicit MaxAddTree(size_t n) : n_(n), max_(4 * std::max<size_t>(n, 1), 0), add_(4 * std::max<size_t>(n, 1), 0) {}

  void add(size_t lo, size_t hi, int64_t v) { add(1, 0, n_ - 1, lo, hi, v); }

  int64_t max() const { return max_[1]; }

  size_t argmax() const {
    size_t node = 1, l = 0, r = n_ - 1;
    while (l < r) {
      const int64_t target = max_[node] - add_[node];
      const size_t mid = (l + r) / 2;
      if (max_[2 * node] == target) {
        node = 2 * node;
        r = mid;
      } else {
        node = 2 * node + 1;
        l = mid + 1;
      }
    }
    return l;
  }

 private:
  void add(size_t node, size_t l, size_t r, size_t lo, size_t hi, int64_t v) {
    if (hi < l || r < lo) return;
    if (lo <= l && r <= hi) {
      max_[node] += v;
      add_[node] += v;
      return;
    }
    const size_t mid = (l + r) / 2;
    add(2 * node, l, mid, lo, hi, v);
    add(2 * node + 1, mid + 1, r, lo, hi, v);
    max_[node] = add_[node] + std::max(max_[2 * node], max_[2 * node + 1]);
  }

  size_t n_;
  std::vector<int64_t> max_;
  std::vector<int64_t> add_;
};

struct Cell {
  int64_t x;
  int64_t y;
  int64_t m;
};

// Candidate window origins along one axis: 0 plus every q - side + 1 that is a
// valid placement.
std::vector<int64_t> candidate_origins(const std::vector<int64_t>& coords, int64_t side, int64_t max_origin) {
  std::vector<int64_t> out{0};
  for (int64_t q : coords) {
    const int64_t o = q - side + 1;
    if (o >= 1 && o <= max_origin) out.push_back(o);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

WindowPeak peak_window(std::span<const EosPoint> points, int64_t side, int64_t slide_w, int64_t slide_h) {
  if (side < 1) throw InvalidArgument("window side must be >= 1");
  if (slide_w < 1 || slide_h < 1) throw InvalidArgument("slide dimensions must be >= 1");
  const int64_t max_x = std::max<int64_t>(0, slide_w - side);
  const int64_t max_y = std::max<int64_t>(0, slide_h - side);
  const Rect origin{0, 0, std::min(side, slide_w), std::min(side, slide_h)};

  // With integer window origins, x <= p.x < x + side is x <= floor(p.x) < x + side.
  std::vector<Cell> cells;
  cells.reserve(points.size());
  for (const EosPoint& p : points) {
    if (p.multiplicity <= 0 || !std::isfinite(p.x) || !std::isfinite(p.y)) continue;
    const auto qx = static_cast<int64_t>(std::floor(p.x));
    const auto qy = static_cast<int64_t>(std::floor(p.y));
    // Drop points no placement can contain.
    if (qx < 0 || qy < 0 || qx >= slide_w || qy >= slide_h) continue;
    if (qx - side + 1 > max_x || qy - side + 1 > max_y) continue;
    cells.push_back({qx, qy, p.multiplicity});
  }
  if (cells.empty()) return {0, origin};

  std::vector<int64_t> xs, ys;
  for (const Cell& c : cells) {
    xs.push_back(c.x);
    ys.push_back(c.y);
  }
  const std::vector<int64_t> cand_x = candidate_origins(xs, side, max_x);
  const std::vector<int64_t> cand_y = candidate_origins(ys, side, max_y);

  struct Span {
    size_t lo, hi;
  };
  std::vector<Span> spans(cells.size());
  for (size_t i = 0; i < cells.size(); ++i) {
    const int64_t first = std::max<int64_t>(0, cells[i].x - side + 1);
    const int64_t last = std::min(cells[i].x, max_x);
    const auto lo = std::lower_bound(cand_x.begin(), cand_x.end(), first);
    const auto hi = std::upper_bound(cand_x.begin(), cand_x.end(), last);
    // [first, last] always holds a candidate: first itself when first >= 1, else 0.
    spans[i] = {static_cast<size_t>(lo - cand_x.begin()), static_cast<size_t>(hi - cand_x.begin()) - 1};
  }

  // Points enter the band when y reaches qy - side + 1 and leave once y > qy.
  std::vector<size_t> by_enter(cells.size()), by_leave(cells.size());
  for (size_t i = 0; i < cells.size(); ++i) by_enter[i] = by_leave[i] = i;
  std::sort(by_enter.begin(), by_enter.end(), [&](size_t a, size_t b) { return cells[a].y < cells[b].y; });
  by_leave = by_enter;

  MaxAddTree tree(cand_x.size());
  size_t next_enter = 0, next_leave = 0;
  WindowPeak best{-1, origin};
  for (int64_t y : cand_y) {
    while (next_enter < by_enter.size() && cells[by_enter[next_enter]].y - side + 1 <= y) {
      const size_t i = by_enter[next_enter++];
      tree.add(spans[i].lo, spans[i].hi, cells[i].m);
    }
    while (next_leave < by_leave.size() && cells[by_leave[next_leave]].y < y) {
      const size_t i = by_leave[next_leave++];
      tree.add(spans[i].lo, spans[i].hi, -cells[i].m);
    }
    if (tree.max() > best.count) {
      best.count = tree.max();
      best.rect = {cand_x[tree.argmax()], y, origin.w, origin.h};
    }
  }
  return best;
}

WindowPeak peak_window_density(std::span<const EosPoint> points, int64_t side, int64_t slide_w, int64_t slide_h,
                               int64_t stride) {
  if (side < 1 || stride < 1) throw InvalidArgument("window side and stride must be >= 1");
  if (slide_w < 1 || slide_h < 1) throw InvalidArgument("slide dimensions must be >= 1");
  const int64_t nx = (slide_w + stride - 1) / stride;
  const int64_t ny = (slide_h + stride - 1) / stride;
  const int64_t kx = std::min(side, slide_w) / stride;
  const int64_t ky = std::min(side, slide_h) / stride;
  const Rect origin{0, 0, std::min(side, slide_w), std::min(side, slide_h)};

  // sat[(j)*(nx+1) + i] = sum of cells with column < i and row < j.
  std::vector<int64_t> sat(static_cast<size_t>((nx + 1) * (ny + 1)), 0);
  auto at = [&](int64_t i, int64_t j) -> int64_t& { return sat[static_cast<size_t>(j * (nx + 1) + i)]; };
  for (const EosPoint& p : points) {
    if (p.multiplicity <= 0 || !(p.x >= 0.0) || !(p.y >= 0.0) || p.x >= slide_w || p.y >= slide_h) continue;
    at(static_cast<int64_t>(p.x) / stride + 1, static_cast<int64_t>(p.y) / stride + 1) += p.multiplicity;
  }
  for (int64_t j = 1; j <= ny; ++j) {
    for (int64_t i = 1; i <= nx; ++i) at(i, j) += at(i - 1, j) + at(i, j - 1) - at(i - 1, j - 1);
  }
  if (kx == 0 || ky == 0) return {0, origin};

  const int64_t max_i = std::max<int64_t>(0, slide_w - side) / stride;
  const int64_t max_j = std::max<int64_t>(0, slide_h - side) / stride;
  WindowPeak best{-1, origin};
  for (int64_t j = 0; j <= max_j; ++j) {
    for (int64_t i = 0; i <= max_i; ++i) {
      const int64_t i1 = std::min(i + kx, nx), j1 = std::min(j + ky, ny);
      const int64_t s = at(i1, j1) - at(i, j1) - at(i1, j) + at(i, j);
      if (s > best.count) best = {s, {i * stride, j * stride, origin.w, origin.h}};
    }
  }
  return best;
}

Activity classify(int64_t peak_count, const HpfConfig& cfg) {
  if (peak_count < 0) throw InvalidArgument("peak_count must be non-negative");
  return peak_count >= cfg.activity_threshold ? Activity::kActive : Activity::kInactive;
}

std::vector<PecResult> rank_slides(std::vector<PecResult> results) {
  std::set<std::string> ids;
  for (const auto& r : results) {
    if (!ids.insert(r.slide_id).second) throw InvalidArgument("duplicate slide_id '" + r.slide_id + "'");
  }
  std::sort(results.begin(), results.end(), [](const PecResult& a, const PecResult& b) {
    if (a.peak_count != b.peak_count) return a.peak_count > b.peak_count;
    return a.slide_id < b.slide_id;
  });
  return results;
}

}  // namespace eoscount
