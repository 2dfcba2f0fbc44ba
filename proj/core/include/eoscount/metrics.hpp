#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "eoscount/counter.hpp"
#include "eoscount/pec.hpp"
#include "eoscount/raster.hpp"

namespace eoscount {

// ---------------------------------------------------------------------------
// Pixel-level segmentation scores
// ---------------------------------------------------------------------------

struct PixelCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  int64_t tn = 0;

  int64_t total() const { return tp + fp + fn + tn; }
  PixelCounts& operator+=(const PixelCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const PixelCounts&, const PixelCounts&) = default;
};

/// Index 0 = intact, 1 = not-intact.
inline constexpr std::array<EosClass, 2> kEosClasses{EosClass::kIntact, EosClass::kNotIntact};

/// Per (image, class) pixel confusion counts. Tallies of disjoint image sets
/// merge by concatenation; merge order does not change the scores.
class ConfusionTally {
 public:
  void add_image(const ClassMask& gt, const ClassMask& pred);
  void merge(const ConfusionTally& other);

  size_t image_count() const { return images_.size(); }
  const std::array<PixelCounts, 2>& image(size_t i) const { return images_[i]; }
  PixelCounts pooled(size_t class_index) const;

 private:
  std::vector<std::array<PixelCounts, 2>> images_;
};

/// Treatment of 0/0 terms.
enum class EmptyUnionPolicy {
  kCountAsOne,  // an empty union is a correct "nothing here" and scores 1
  kSkipTerm,    // such terms are left out of the mean
};

struct ClassScores {
  double m_iou = 0.0;
  double m_precision = 0.0;
  double m_recall = 0.0;
  double m_specificity = 0.0;
};

struct SegScores {
  ClassScores intact;
  ClassScores not_intact;
  /// Mean of the two class means.
  ClassScores overall;
};

/// Ratios of one (image, class) term; nullopt marks a skipped term.
struct TermScores {
  std::optional<double> iou, precision, recall, specificity;
};
TermScores term_scores(const PixelCounts& c, EmptyUnionPolicy policy = EmptyUnionPolicy::kCountAsOne);

SegScores seg_scores(const ConfusionTally& tally, EmptyUnionPolicy policy = EmptyUnionPolicy::kCountAsOne);
SegScores seg_metrics(std::span<const ClassMask> gt, std::span<const ClassMask> pred,
                      EmptyUnionPolicy policy = EmptyUnionPolicy::kCountAsOne);

/// Row-normalised 2x2 class confusion among pixels that are eosinophil in
/// both masks. Rows are ground truth, columns prediction; an empty row is nullopt.
struct ClassConfusion {
  std::array<std::array<int64_t, 2>, 2> counts{};
  std::array<std::optional<std::array<double, 2>>, 2> rows;
};
ClassConfusion class_confusion(const ClassMask& gt, const ClassMask& pred);

// ---------------------------------------------------------------------------
// Counting error
// ---------------------------------------------------------------------------

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

struct CountStats {
  double mae = 0.0;
  /// Least squares pred ~ slope * true + intercept; nullopt with fewer than
  /// two pairs or zero variance in the true counts.
  std::optional<LinearFit> fit;
  /// |pred - true| / max(true, 1) per pair.
  std::vector<double> relative_error;
};

struct CountPair {
  int64_t true_count = 0;
  int64_t pred_count = 0;
};

CountStats count_error_stats(std::span<const CountPair> pairs);

// ---------------------------------------------------------------------------
// Region-level false discovery
// ---------------------------------------------------------------------------

/// Fraction of predicted regions whose overlap with the union of ground-truth
/// regions covers less than `min_overlap` of their own area. Regions without
/// runs are treated as their bounding box.
double region_fdr(std::span<const EosRegion> gt_regions, std::span<const EosRegion> pred_regions,
                  double min_overlap = 0.5);

// ---------------------------------------------------------------------------
// Slide-level classification
// ---------------------------------------------------------------------------

struct ClassificationReport {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;  // Active is positive
  double accuracy = 0.0;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
};

ClassificationReport classification_report(std::span<const Activity> pred, std::span<const Activity> gt);

struct RocPoint {
  double threshold = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double accuracy = 0.0;
};

struct RocCurve {
  /// Descending thresholds from +inf to -inf; fpr and tpr are non-decreasing.
  std::vector<RocPoint> points;
  double auc = 0.0;
  double best_threshold = 0.0;
  double best_accuracy = 0.0;
};

/// Sweeps "Active iff score >= t" over +inf, every midpoint between
/// consecutive distinct scores, and -inf. AUC is the trapezoid over
/// (fpr, tpr). best_threshold maximises accuracy over the midpoints, ties to
/// the smallest threshold; without midpoints it falls back to the sentinels.
/// Throws InvalidArgument when either class is absent.
RocCurve roc_sweep(std::span<const double> scores, std::span<const Activity> gt);

}  // namespace eoscount
