#include "eoscount/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "eoscount/errors.hpp"

namespace eoscount {

void ConfusionTally::add_image(const ClassMask& gt, const ClassMask& pred) {
  if (gt.width() != pred.width() || gt.height() != pred.height()) {
    throw InvalidArgument("ground truth and prediction differ in size");
  }
  std::array<PixelCounts, 2> counts{};
  // joint[g][p] over labels {0,1,2}
  std::array<std::array<int64_t, 3>, 3> joint{};
  const auto g = gt.bytes();
  const auto p = pred.bytes();
  for (size_t i = 0; i < g.size(); ++i) ++joint[g[i]][p[i]];
  const int64_t total = gt.pixel_count();
  for (size_t c = 0; c < 2; ++c) {
    const size_t label = c + 1;
    int64_t gt_pos = 0, pred_pos = 0;
    for (size_t k = 0; k < 3; ++k) {
      gt_pos += joint[label][k];
      pred_pos += joint[k][label];
    }
    PixelCounts& pc = counts[c];
    pc.tp = joint[label][label];
    pc.fn = gt_pos - pc.tp;
    pc.fp = pred_pos - pc.tp;
    pc.tn = total - pc.tp - pc.fn - pc.fp;
  }
  images_.push_back(counts);
}

void ConfusionTally::merge(const ConfusionTally& other) {
  images_.insert(images_.end(), other.images_.begin(), other.images_.end());
}

PixelCounts ConfusionTally::pooled(size_t class_index) const {
  PixelCounts sum;
  for (const auto& img : images_) sum += img[class_index];
  return sum;
}

TermScores term_scores(const PixelCounts& c, EmptyUnionPolicy policy) {
  TermScores t;
  const auto ratio = [](int64_t num, int64_t den) { return static_cast<double>(num) / static_cast<double>(den); };
  const int64_t uni = c.tp + c.fp + c.fn;
  if (uni == 0) {
    if (policy == EmptyUnionPolicy::kCountAsOne) t.iou = t.precision = t.recall = 1.0;
  } else {
    t.iou = ratio(c.tp, uni);
    // With a non-empty union a 0/0 precision or recall means nothing of the
    // class was predicted (or present) while the other side had some: score 0.
    t.precision = c.tp + c.fp > 0 ? ratio(c.tp, c.tp + c.fp) : 0.0;
    t.recall = c.tp + c.fn > 0 ? ratio(c.tp, c.tp + c.fn) : 0.0;
  }
  if (c.tn + c.fp > 0) {
    t.specificity = ratio(c.tn, c.tn + c.fp);
  } else if (policy == EmptyUnionPolicy::kCountAsOne) {
    t.specificity = 1.0;
  }
  return t;
}

namespace {

// Terms are summed in sorted order so the result does not depend on the
// order images were tallied or merged in.
struct Mean {
  std::vector<double> terms;
  void add(const std::optional<double>& v) {
    if (v) terms.push_back(*v);
  }
  double value() {
    if (terms.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(terms.begin(), terms.end());
    return std::accumulate(terms.begin(), terms.end(), 0.0) / static_cast<double>(terms.size());
  }
};

double mean_of_defined(double a, double b) {
  if (std::isnan(a)) return b;
  if (std::isnan(b)) return a;
  return (a + b) / 2.0;
}

}  // namespace

SegScores seg_scores(const ConfusionTally& tally, EmptyUnionPolicy policy) {
  if (tally.image_count() == 0) throw InvalidArgument("no images to score");
  std::array<ClassScores, 2> per_class;
  for (size_t c = 0; c < 2; ++c) {
    Mean iou, prec, rec, spec;
    for (size_t i = 0; i < tally.image_count(); ++i) {
      const TermScores t = term_scores(tally.image(i)[c], policy);
      iou.add(t.iou);
      prec.add(t.precision);
      rec.add(t.recall);
      spec.add(t.specificity);
    }
    per_class[c] = {iou.value(), prec.value(), rec.value(), spec.value()};
  }
  SegScores s;
  s.intact = per_class[0];
  s.not_intact = per_class[1];
  s.overall = {mean_of_defined(per_class[0].m_iou, per_class[1].m_iou),
               mean_of_defined(per_class[0].m_precision, per_class[1].m_precision),
               mean_of_defined(per_class[0].m_recall, per_class[1].m_recall),
               mean_of_defined(per_class[0].m_specificity, per_class[1].m_specificity)};
  return s;
}

SegScores seg_metrics(std::span<const ClassMask> gt, std::span<const ClassMask> pred, EmptyUnionPolicy policy) {
  if (gt.size() != pred.size()) throw InvalidArgument("ground truth and prediction lists differ in length");
  if (gt.empty()) throw InvalidArgument("no images to score");
  ConfusionTally tally;
  for (size_t i = 0; i < gt.size(); ++i) tally.add_image(gt[i], pred[i]);
  return seg_scores(tally, policy);
}

ClassConfusion class_confusion(const ClassMask& gt, const ClassMask& pred) {
  if (gt.width() != pred.width() || gt.height() != pred.height()) {
    throw InvalidArgument("ground truth and prediction differ in size");
  }
  ClassConfusion out;
  const auto g = gt.bytes();
  const auto p = pred.bytes();
  for (size_t i = 0; i < g.size(); ++i) {
    if (g[i] != 0 && p[i] != 0) ++out.counts[g[i] - 1u][p[i] - 1u];
  }
  for (size_t r = 0; r < 2; ++r) {
    const int64_t n = out.counts[r][0] + out.counts[r][1];
    if (n > 0) {
      out.rows[r] = std::array<double, 2>{static_cast<double>(out.counts[r][0]) / static_cast<double>(n),
                                          static_cast<double>(out.counts[r][1]) / static_cast<double>(n)};
    }
  }
  return out;
}

CountStats count_error_stats(std::span<const CountPair> pairs) {
  if (pairs.empty()) throw InvalidArgument("count_error_stats needs at least one pair");
  CountStats s;
  double abs_sum = 0.0;
  for (const auto& p : pairs) {
    const double err = std::abs(static_cast<double>(p.pred_count - p.true_count));
    abs_sum += err;
    s.relative_error.push_back(err / static_cast<double>(std::max<int64_t>(p.true_count, 1)));
  }
  const double n = static_cast<double>(pairs.size());
  s.mae = abs_sum / n;
  if (pairs.size() < 2) return s;

  double mx = 0.0, my = 0.0;
  for (const auto& p : pairs) {
    mx += static_cast<double>(p.true_count);
    my += static_cast<double>(p.pred_count);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : pairs) {
    const double dx = static_cast<double>(p.true_count) - mx;
    const double dy = static_cast<double>(p.pred_count) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) return s;
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (const auto& p : pairs) {
    const double r = static_cast<double>(p.pred_count) - (fit.slope * static_cast<double>(p.true_count) + fit.intercept);
    ss_res += r * r;
  }
  fit.r_squared = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  s.fit = fit;
  return s;
}

namespace {

std::vector<PixelRun> region_pixels(const EosRegion& r) {
  if (!r.runs.empty()) return r.runs;
  std::vector<PixelRun> runs;
  for (int64_t y = r.bbox.y; y < r.bbox.bottom(); ++y) runs.push_back({y, r.bbox.x, r.bbox.right()});
  return runs;
}

}  // namespace

double region_fdr(std::span<const EosRegion> gt_regions, std::span<const EosRegion> pred_regions,
                  double min_overlap) {
  // Union of ground-truth pixels, as sorted disjoint intervals per row.
  std::map<int64_t, std::vector<std::pair<int64_t, int64_t>>> gt_rows;
  for (const auto& r : gt_regions) {
    for (const PixelRun& run : region_pixels(r)) gt_rows[run.y].emplace_back(run.x0, run.x1);
  }
  for (auto& [y, iv] : gt_rows) {
    std::sort(iv.begin(), iv.end());
    std::vector<std::pair<int64_t, int64_t>> merged;
    for (const auto& seg : iv) {
      if (!merged.empty() && seg.first <= merged.back().second) {
        merged.back().second = std::max(merged.back().second, seg.second);
      } else {
        merged.push_back(seg);
      }
    }
    iv = std::move(merged);
  }

  int64_t false_discoveries = 0;
  for (const auto& r : pred_regions) {
    int64_t area = 0, overlap = 0;
    for (const PixelRun& run : region_pixels(r)) {
      area += run.length();
      auto it = gt_rows.find(run.y);
      if (it == gt_rows.end()) continue;
      for (const auto& [a, b] : it->second) {
        const int64_t lo = std::max(a, run.x0), hi = std::min(b, run.x1);
        if (hi > lo) overlap += hi - lo;
      }
    }
    const bool discovered = area > 0 && static_cast<double>(overlap) >= min_overlap * static_cast<double>(area);
    if (!discovered) ++false_discoveries;
  }
  return static_cast<double>(false_discoveries) / static_cast<double>(std::max<size_t>(1, pred_regions.size()));
}

ClassificationReport classification_report(std::span<const Activity> pred, std::span<const Activity> gt) {
  if (pred.size() != gt.size()) throw InvalidArgument("prediction and ground truth lists differ in length");
  if (pred.empty()) throw InvalidArgument("classification_report needs at least one sample");
  ClassificationReport r;
  for (size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == Activity::kActive;
    const bool g = gt[i] == Activity::kActive;
    if (p && g) ++r.tp;
    if (p && !g) ++r.fp;
    if (!p && g) ++r.fn;
    if (!p && !g) ++r.tn;
  }
  r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(pred.size());
  if (r.tp + r.fn > 0) r.sensitivity = static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  if (r.tn + r.fp > 0) r.specificity = static_cast<double>(r.tn) / static_cast<double>(r.tn + r.fp);
  return r;
}

RocCurve roc_sweep(std::span<const double> scores, std::span<const Activity> gt) {
  if (scores.size() != gt.size()) throw InvalidArgument("scores and labels differ in length");
  if (scores.empty()) throw InvalidArgument("roc_sweep needs at least one sample");
  for (double s : scores) {
    if (std::isnan(s)) throw InvalidArgument("NaN score");
  }
  const auto positives = std::count(gt.begin(), gt.end(), Activity::kActive);
  const auto negatives = static_cast<int64_t>(gt.size()) - positives;
  if (positives == 0 || negatives == 0) throw InvalidArgument("ROC needs both Active and Inactive ground truth");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  const double inf = std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(scores.size());
  RocCurve curve;
  int64_t tp = 0, fp = 0;
  auto emit = [&](double threshold) {
    const double acc = static_cast<double>(tp + (negatives - fp)) / n;
    curve.points.push_back({threshold, static_cast<double>(tp) / static_cast<double>(positives),
                            static_cast<double>(fp) / static_cast<double>(negatives), acc});
  };
  emit(inf);
  size_t i = 0;
  while (i < order.size()) {
    // Admit every sample tied at this score, then place the next threshold
    // midway to the next distinct score.
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (gt[order[i]] == Activity::kActive ? tp : fp)++;
      ++i;
    }
    if (i < order.size()) emit((s + scores[order[i]]) / 2.0);
  }
  emit(-inf);

  for (size_t k = 1; k < curve.points.size(); ++k) {
    const auto& a = curve.points[k - 1];
    const auto& b = curve.points[k];
    curve.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }

  // Midpoints sit strictly between the sentinels; thresholds descend, so a
  // later equal accuracy means a smaller threshold.
  const size_t first = curve.points.size() > 2 ? 1 : 0;
  const size_t last = curve.points.size() > 2 ? curve.points.size() - 2 : curve.points.size() - 1;
  curve.best_accuracy = -1.0;
  for (size_t k = first; k <= last; ++k) {
    if (curve.points[k].accuracy >= curve.best_accuracy) {
      curve.best_accuracy = curve.points[k].accuracy;
      curve.best_threshold = curve.points[k].threshold;
    }
  }
  return curve;
}

}  // namespace eoscount
