#pragma once

// Serialised outputs: per-slide report JSON, cohort CSV, evaluation report.

#include <array>
#include <optional>
#include <span>
#include <string>

#include "eoscount/metrics.hpp"
#include "eoscount/pipeline.hpp"

namespace eoscount {

/// {slide_id, peak_count, hpf_rect:{x,y,w,h}, label, intact_total,
/// not_intact_total, config_echo}. config_echo holds every setting that can
/// change the result; worker count and memory budget are left out so reports
/// are byte-identical across them.
std::string slide_report_json(const SlideAnalysis& analysis, const PipelineConfig& cfg,
                              const std::string& segmenter_name);

/// Reads back the PecResult part of a slide report.
PecResult parse_slide_report(const std::string& json_text);

/// "rank,slide_id,peak_count,label" with ranks starting at 1.
std::string cohort_csv(std::span<const PecResult> ranked);

struct EvalReport {
  EmptyUnionPolicy policy = EmptyUnionPolicy::kCountAsOne;
  int64_t images = 0;
  std::optional<SegScores> segmentation;
  std::optional<ClassConfusion> class_confusion;
  /// Region-level false discovery rate per class (intact, not-intact).
  std::optional<std::array<double, 2>> region_fdr;
  std::optional<CountStats> counting;
  std::optional<ClassificationReport> classification;
  std::optional<RocCurve> roc;
};

std::string eval_report_json(const EvalReport& report);

/// "threshold,fpr,tpr,accuracy"; infinite thresholds print as inf / -inf.
std::string roc_csv(const RocCurve& roc);

}  // namespace eoscount
