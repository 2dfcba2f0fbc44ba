#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "eoscount/errors.hpp"
#include "eoscount/metrics.hpp"
#include "metric_fixtures.hpp"
#include "testing.hpp"

namespace eoscount {
namespace {

void expect_scores(const ClassScores& got, const testing::Expected4& want, const std::string& what) {
  EXPECT_TRUE(testing::scores_match(got, want))
      << what << ": got (" << got.m_iou << ", " << got.m_precision << ", " << got.m_recall << ", "
      << got.m_specificity << ") want (" << want.iou << ", " << want.precision << ", " << want.recall << ", "
      << want.specificity << ")";
}

TEST(SegMetrics, HandComputedFixtures) {
  const auto fixtures = testing::metric_fixtures();
  ASSERT_EQ(fixtures.size(), 12u);
  for (const auto& f : fixtures) {
    const SegScores s = seg_metrics(f.gt, f.pred, f.policy);
    expect_scores(s.intact, f.intact, f.name + " intact");
    expect_scores(s.not_intact, f.not_intact, f.name + " not-intact");
    expect_scores(s.overall, f.overall, f.name + " overall");
  }
}

TEST(SegMetrics, ShiftedTenPixelSquare) {
  ClassMask gt(20, 10), pred(20, 10);
  for (int64_t y = 0; y < 10; ++y) {
    for (int64_t x = 0; x < 10; ++x) {
      gt.set(x, y, Label::kIntact);
      pred.set(x + 5, y, Label::kIntact);
    }
  }
  ConfusionTally t;
  t.add_image(gt, pred);
  const TermScores term = term_scores(t.image(0)[0]);
  EXPECT_DOUBLE_EQ(*term.iou, 50.0 / 150.0);
}

TEST(SegMetrics, Errors) {
  const std::vector<ClassMask> a{ClassMask(3, 3)}, b{ClassMask(3, 4)}, none;
  EXPECT_THROW(seg_metrics(a, b), InvalidArgument);
  EXPECT_THROW(seg_metrics(none, none), InvalidArgument);
  EXPECT_THROW(seg_metrics(a, none), InvalidArgument);
}

TEST(SegMetrics, TermsFollowTheirDefinitions) {
  std::mt19937_64 rng(41);
  for (int i = 0; i < 200; ++i) {
    const ClassMask g = testing::random_mask(rng, 17, 13, 0.5);
    const ClassMask p = testing::random_mask(rng, 17, 13, 0.5);
    ConfusionTally t;
    t.add_image(g, p);
    for (size_t c = 0; c < 2; ++c) {
      const auto lbl = static_cast<Label>(c + 1);
      int64_t tp = 0, fp = 0, fn = 0, tn = 0;
      for (int64_t y = 0; y < 13; ++y) {
        for (int64_t x = 0; x < 17; ++x) {
          const bool gi = g.at(x, y) == lbl, pi = p.at(x, y) == lbl;
          tp += gi && pi;
          fp += !gi && pi;
          fn += gi && !pi;
          tn += !gi && !pi;
        }
      }
      EXPECT_EQ(t.image(0)[c], (PixelCounts{tp, fp, fn, tn}));
      EXPECT_EQ(t.image(0)[c].total(), 17 * 13);
      const TermScores s = term_scores(t.image(0)[c]);
      if (tp + fp + fn == 0) continue;
      EXPECT_DOUBLE_EQ(*s.iou, double(tp) / double(tp + fp + fn));
      if (tp + fp > 0) {
        EXPECT_DOUBLE_EQ(*s.precision, double(tp) / double(tp + fp));
      }
      if (tp + fn > 0) {
        EXPECT_DOUBLE_EQ(*s.recall, double(tp) / double(tp + fn));
      }
      if (tn + fp > 0) {
        EXPECT_DOUBLE_EQ(*s.specificity, double(tn) / double(tn + fp));
      }
      EXPECT_LE(*s.iou, std::min(*s.precision, *s.recall) + 1e-15);
    }
  }
}

TEST(SegMetrics, SwappingSidesSwapsPrecisionAndRecall) {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 50; ++i) {
    const std::vector<ClassMask> g{testing::random_mask(rng, 20, 20, 0.4), testing::random_mask(rng, 20, 20, 0.1)};
    const std::vector<ClassMask> p{testing::random_mask(rng, 20, 20, 0.4), testing::random_mask(rng, 20, 20, 0.2)};
    const SegScores a = seg_metrics(g, p);
    const SegScores b = seg_metrics(p, g);
    EXPECT_NEAR(a.intact.m_iou, b.intact.m_iou, 1e-15);
    EXPECT_NEAR(a.intact.m_precision, b.intact.m_recall, 1e-15);
    EXPECT_NEAR(a.not_intact.m_recall, b.not_intact.m_precision, 1e-15);
    for (const auto* cs : {&a.intact, &a.not_intact, &a.overall}) {
      for (double v : {cs->m_iou, cs->m_precision, cs->m_recall, cs->m_specificity}) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(SegMetrics, MergeOrderDoesNotMatter) {
  std::mt19937_64 rng(43);
  std::vector<ClassMask> g, p;
  for (int i = 0; i < 12; ++i) {
    g.push_back(testing::random_mask(rng, 31, 29, 0.3));
    p.push_back(testing::random_mask(rng, 31, 29, 0.3));
  }
  ConfusionTally serial;
  for (size_t i = 0; i < g.size(); ++i) serial.add_image(g[i], p[i]);
  const SegScores want = seg_scores(serial);

  std::vector<size_t> order(g.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    ConfusionTally left, right;
    for (size_t k = 0; k < order.size(); ++k) (k % 2 ? left : right).add_image(g[order[k]], p[order[k]]);
    right.merge(left);
    const SegScores got = seg_scores(right);
    EXPECT_EQ(got.intact.m_iou, want.intact.m_iou);
    EXPECT_EQ(got.not_intact.m_precision, want.not_intact.m_precision);
    EXPECT_EQ(got.overall.m_recall, want.overall.m_recall);
    EXPECT_EQ(got.overall.m_specificity, want.overall.m_specificity);
    EXPECT_EQ(right.pooled(0), serial.pooled(0));
    EXPECT_EQ(right.pooled(1), serial.pooled(1));
  }
}

TEST(ClassConfusionMatrix, Examples) {
  const auto g = testing::mask_from_art({"IIN.", "IIN."});
  auto c = class_confusion(g, g);
  ASSERT_TRUE(c.rows[0] && c.rows[1]);
  EXPECT_EQ(*c.rows[0], (std::array<double, 2>{1.0, 0.0}));
  EXPECT_EQ(*c.rows[1], (std::array<double, 2>{0.0, 1.0}));

  const auto swapped = testing::mask_from_art({"NNN.", "NNN."});
  c = class_confusion(g, swapped);
  EXPECT_EQ(*c.rows[0], (std::array<double, 2>{0.0, 1.0}));

  const auto disjoint = testing::mask_from_art({"...I", "...N"});
  c = class_confusion(g, disjoint);
  EXPECT_FALSE(c.rows[0].has_value());
  EXPECT_FALSE(c.rows[1].has_value());

  const auto partial = testing::mask_from_art({"INI.", "NI.."});
  c = class_confusion(g, partial);
  EXPECT_EQ(c.counts[0][0], 2);
  EXPECT_EQ(c.counts[0][1], 2);
  EXPECT_EQ(c.counts[1][0], 1);
  EXPECT_DOUBLE_EQ((*c.rows[0])[0], 0.5);
}

TEST(CountStats, Examples) {
  const std::vector<CountPair> exact{{5, 5}, {3, 3}, {7, 7}};
  const CountStats s = count_error_stats(exact);
  EXPECT_EQ(s.mae, 0.0);
  ASSERT_TRUE(s.fit);
  EXPECT_NEAR(s.fit->slope, 1.0, 1e-12);
  EXPECT_NEAR(s.fit->intercept, 0.0, 1e-12);
  EXPECT_NEAR(s.fit->r_squared, 1.0, 1e-12);

  const std::vector<CountPair> flat{{10, 9}, {10, 11}};
  const CountStats f = count_error_stats(flat);
  EXPECT_EQ(f.mae, 1.0);
  EXPECT_FALSE(f.fit);

  const std::vector<CountPair> one{{0, 2}};
  const CountStats o = count_error_stats(one);
  EXPECT_EQ(o.mae, 2.0);
  EXPECT_FALSE(o.fit);
  EXPECT_EQ(o.relative_error, std::vector<double>{2.0});
  EXPECT_THROW(count_error_stats({}), InvalidArgument);
}

TEST(CountStats, FitMatchesNormalEquations) {
  std::mt19937_64 rng(44);
  std::uniform_int_distribution<int64_t> u(0, 60);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<CountPair> pairs;
    const int n = 2 + trial % 30;
    for (int i = 0; i < n; ++i) pairs.push_back({u(rng), u(rng)});
    // Normal equations [n sx; sx sxx][b; m] = [sy; sxy], solved by Cramer's rule.
    double sx = 0, sy = 0, sxx = 0, sxy = 0, abs_err = 0;
    for (const auto& p : pairs) {
      const double x = double(p.true_count), y = double(p.pred_count);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      abs_err += std::abs(y - x);
    }
    const double det = n * sxx - sx * sx;
    const CountStats s = count_error_stats(pairs);
    EXPECT_NEAR(s.mae, abs_err / n, 1e-12);
    if (det == 0) {
      EXPECT_FALSE(s.fit);
      continue;
    }
    ASSERT_TRUE(s.fit);
    const double slope = (n * sxy - sx * sy) / det;
    const double intercept = (sy * sxx - sx * sxy) / det;
    EXPECT_NEAR(s.fit->slope, slope, 1e-9);
    EXPECT_NEAR(s.fit->intercept, intercept, 1e-9);
    double ss_res = 0, ss_tot = 0;
    for (const auto& p : pairs) {
      const double r = double(p.pred_count) - (slope * double(p.true_count) + intercept);
      ss_res += r * r;
      ss_tot += (double(p.pred_count) - sy / n) * (double(p.pred_count) - sy / n);
    }
    if (ss_tot > 0) {
      EXPECT_NEAR(s.fit->r_squared, 1 - ss_res / ss_tot, 1e-9);
    }
    EXPECT_LE(s.fit->r_squared, 1.0 + 1e-12);
    for (size_t i = 0; i < pairs.size(); ++i) {
      EXPECT_DOUBLE_EQ(s.relative_error[i], std::abs(double(pairs[i].pred_count - pairs[i].true_count)) /
                                                double(std::max<int64_t>(pairs[i].true_count, 1)));
    }
  }
}

EosRegion box_region(int64_t x, int64_t y, int64_t w, int64_t h) {
  EosRegion r;
  r.bbox = {x, y, w, h};
  r.area_px = w * h;
  return r;
}

TEST(RegionFdr, Examples) {
  const std::vector<EosRegion> gt{box_region(0, 0, 10, 10), box_region(50, 50, 10, 10)};
  EXPECT_EQ(region_fdr(gt, gt), 0.0);

  std::vector<EosRegion> pred = gt;
  pred.push_back(box_region(100, 100, 5, 5));
  EXPECT_DOUBLE_EQ(region_fdr(gt, pred), 1.0 / 3.0);

  // 49 of 100 pixels overlap.
  const std::vector<EosRegion> shy{box_region(0, 0, 7, 7)};
  const std::vector<EosRegion> wide{box_region(0, 0, 10, 10)};
  EXPECT_EQ(region_fdr(shy, wide), 1.0);
  const std::vector<EosRegion> half{box_region(0, 0, 10, 5)};
  EXPECT_EQ(region_fdr(half, wide), 0.0);

  EXPECT_EQ(region_fdr(gt, {}), 0.0);
  EXPECT_EQ(region_fdr({}, gt), 1.0);
}

TEST(RegionFdr, UsesMemberPixelsWhenAvailable) {
  const ClassMask g = testing::mask_from_art({
      "II....",
      "I.....",
  });
  const ClassMask p = testing::mask_from_art({
      ".I....",
      "II....",
  });
  const auto gr = connected_components(g.channel(EosClass::kIntact), Connectivity::kEight, EosClass::kIntact, true);
  const auto pr = connected_components(p.channel(EosClass::kIntact), Connectivity::kEight, EosClass::kIntact, true);
  // 2 of 3 predicted pixels are ground truth.
  EXPECT_EQ(region_fdr(gr, pr, 0.6), 0.0);
  EXPECT_EQ(region_fdr(gr, pr, 0.7), 1.0);
}

TEST(Classification, Examples) {
  using A = Activity;
  const std::vector<A> gt{A::kActive, A::kInactive, A::kActive, A::kInactive};
  EXPECT_EQ(classification_report(gt, gt).accuracy, 1.0);
  std::vector<A> inv;
  for (A a : gt) inv.push_back(a == A::kActive ? A::kInactive : A::kActive);
  const auto r = classification_report(inv, gt);
  EXPECT_EQ(r.accuracy, 0.0);
  EXPECT_EQ(*r.sensitivity, 0.0);

  const std::vector<A> all_inactive(3, A::kInactive);
  const std::vector<A> pred{A::kActive, A::kInactive, A::kInactive};
  const auto d = classification_report(pred, all_inactive);
  EXPECT_FALSE(d.sensitivity.has_value());
  ASSERT_TRUE(d.specificity.has_value());
  EXPECT_DOUBLE_EQ(*d.specificity, 2.0 / 3.0);
  EXPECT_EQ(d.fp, 1);
  EXPECT_EQ(d.tn, 2);

  EXPECT_THROW(classification_report(pred, gt), InvalidArgument);
  EXPECT_THROW(classification_report({}, {}), InvalidArgument);
}

TEST(Roc, Examples) {
  using A = Activity;
  const std::vector<double> sep{20, 18, 30, 3, 5, 0};
  const std::vector<A> lab{A::kActive, A::kActive, A::kActive, A::kInactive, A::kInactive, A::kInactive};
  const RocCurve c = roc_sweep(sep, lab);
  EXPECT_EQ(c.auc, 1.0);
  EXPECT_EQ(c.best_accuracy, 1.0);
  EXPECT_EQ(c.best_threshold, 11.5);

  const std::vector<double> flat(6, 7.0);
  const RocCurve f = roc_sweep(flat, lab);
  EXPECT_EQ(f.auc, 0.5);
  ASSERT_EQ(f.points.size(), 2u);
  EXPECT_TRUE(std::isinf(f.points.front().threshold));

  const std::vector<A> single(6, A::kActive);
  EXPECT_THROW(roc_sweep(sep, single), InvalidArgument);
  EXPECT_THROW(roc_sweep(std::vector<double>{1.0}, std::vector<A>{}), InvalidArgument);
}

TEST(Roc, AucMatchesConcordanceAndCurveIsMonotone) {
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 19;
    std::vector<double> scores;
    std::vector<Activity> labels;
    for (int i = 0; i < n; ++i) {
      scores.push_back(double(std::uniform_int_distribution<int>(0, 25)(rng)));
      labels.push_back(i == 0 ? Activity::kActive
                              : i == 1 ? Activity::kInactive
                                       : (std::bernoulli_distribution(0.5)(rng) ? Activity::kActive : Activity::kInactive));
    }
    const RocCurve c = roc_sweep(scores, labels);
    EXPECT_NEAR(c.auc, testing::concordance_auc(scores, labels), 1e-12);
    for (size_t k = 1; k < c.points.size(); ++k) {
      EXPECT_GE(c.points[k].fpr, c.points[k - 1].fpr);
      EXPECT_GE(c.points[k].tpr, c.points[k - 1].tpr);
      EXPECT_LT(c.points[k].threshold, c.points[k - 1].threshold);
    }
    EXPECT_EQ(c.points.front().fpr, 0.0);
    EXPECT_EQ(c.points.back().tpr, 1.0);

    // Strictly increasing transforms keep the ranking, hence the AUC.
    std::vector<double> warped;
    for (double s : scores) warped.push_back(std::exp(s / 5.0) - 3.0);
    EXPECT_NEAR(roc_sweep(warped, labels).auc, c.auc, 1e-12);
  }
}

TEST(Roc, BestThresholdFallsBetweenIntegers) {
  using A = Activity;
  // Clinical rule on integer counts plus two far-off mislabels that no threshold fixes.
  std::vector<double> scores;
  std::vector<A> labels;
  for (int pec = 0; pec <= 30; ++pec) {
    scores.push_back(pec);
    labels.push_back(pec >= 15 ? A::kActive : A::kInactive);
  }
  scores.push_back(5);
  labels.push_back(A::kActive);
  scores.push_back(25);
  labels.push_back(A::kInactive);
  const RocCurve c = roc_sweep(scores, labels);
  EXPECT_EQ(c.best_threshold, 14.5);
  EXPECT_NEAR(c.best_accuracy, 31.0 / 33.0, 1e-12);
}

TEST(Roc, TiesGoToTheSmallestThreshold) {
  using A = Activity;
  // Thresholds 3.5 and 1.5 both reach accuracy 3/4.
  const std::vector<double> s2{1, 2, 3, 4};
  const std::vector<A> l2{A::kInactive, A::kActive, A::kInactive, A::kActive};
  EXPECT_EQ(roc_sweep(s2, l2).best_threshold, 1.5);
}

}  // namespace
}  // namespace eoscount
