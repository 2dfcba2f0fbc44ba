#include "eoscount/report.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "eoscount/errors.hpp"

namespace eoscount {

using nlohmann::ordered_json;

namespace {

ordered_json rect_json(const Rect& r) { return {{"x", r.x}, {"y", r.y}, {"w", r.w}, {"h", r.h}}; }

ordered_json optional_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

// JSON has no infinities; sentinels print as strings.
ordered_json threshold_json(double t) {
  if (std::isinf(t)) return t > 0 ? "inf" : "-inf";
  return t;
}

ordered_json class_scores_json(const ClassScores& s) {
  return {{"m_iou", s.m_iou},
          {"m_precision", s.m_precision},
          {"m_recall", s.m_recall},
          {"m_specificity", s.m_specificity}};
}

}  // namespace

std::string slide_report_json(const SlideAnalysis& a, const PipelineConfig& cfg, const std::string& segmenter_name) {
  ordered_json echo;
  echo["patch_size"] = cfg.tiler.patch_size;
  echo["background_pixel_threshold"] = cfg.tiler.background_pixel_threshold;
  echo["background_fraction_limit"] = cfg.tiler.background_fraction_limit;
  echo["segmenter"] = segmenter_name;
  echo["prob_threshold"] = cfg.segmenter.prob_threshold;
  echo["overlap_precedence"] = "intact_wins";
  echo["min_area_px"] = cfg.counting.min_area_px;
  echo["single_max_area_px"] = cfg.counting.single_max_area_px;
  echo["increment_area_px"] = cfg.counting.increment_area_px;
  echo["connectivity"] = static_cast<int>(cfg.connectivity);
  echo["hpf_area_mm2"] = cfg.hpf.hpf_area_mm2;
  echo["activity_threshold"] = cfg.hpf.activity_threshold;
  echo["microns_per_pixel"] = a.microns_per_pixel;
  echo["hpf_side_px"] = a.hpf_side_px;
  echo["peak_search"] = cfg.peak_search == PeakSearch::kExact ? "exact" : "density";

  ordered_json j;
  j["slide_id"] = a.pec.slide_id;
  j["peak_count"] = a.pec.peak_count;
  j["hpf_rect"] = rect_json(a.pec.hpf_rect);
  j["label"] = to_string(a.pec.label);
  j["intact_total"] = a.intact_total;
  j["not_intact_total"] = a.not_intact_total;
  j["intact_regions"] = a.intact_regions;
  j["not_intact_regions"] = a.not_intact_regions;
  j["patches_total"] = a.patches_total;
  j["patches_segmented"] = a.patches_segmented;
  j["config_echo"] = std::move(echo);
  return j.dump(2) + "\n";
}

PecResult parse_slide_report(const std::string& json_text) {
  try {
    const auto j = nlohmann::json::parse(json_text);
    PecResult r;
    r.slide_id = j.at("slide_id").get<std::string>();
    r.peak_count = j.at("peak_count").get<int64_t>();
    const auto& rect = j.at("hpf_rect");
    r.hpf_rect = {rect.at("x").get<int64_t>(), rect.at("y").get<int64_t>(), rect.at("w").get<int64_t>(),
                  rect.at("h").get<int64_t>()};
    r.label = activity_from_string(j.at("label").get<std::string>());
    if (r.peak_count < 0) throw FormatError("negative peak_count");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed slide report: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("malformed slide report: ") + e.what());
  }
}

std::string cohort_csv(std::span<const PecResult> ranked) {
  std::ostringstream out;
  out << "rank,slide_id,peak_count,label\n";
  for (size_t i = 0; i < ranked.size(); ++i) {
    out << i + 1 << ',' << ranked[i].slide_id << ',' << ranked[i].peak_count << ',' << to_string(ranked[i].label)
        << '\n';
  }
  return out.str();
}

std::string eval_report_json(const EvalReport& r) {
  ordered_json j;
  j["empty_union_policy"] = r.policy == EmptyUnionPolicy::kCountAsOne ? "count_as_one" : "skip_term";
  j["images"] = r.images;
  if (r.segmentation) {
    j["segmentation"] = {{"intact", class_scores_json(r.segmentation->intact)},
                         {"not_intact", class_scores_json(r.segmentation->not_intact)},
                         {"overall", class_scores_json(r.segmentation->overall)}};
  }
  if (r.class_confusion) {
    ordered_json rows = ordered_json::array();
    for (const auto& row : r.class_confusion->rows) {
      rows.push_back(row ? ordered_json{(*row)[0], (*row)[1]} : ordered_json(nullptr));
    }
    j["class_confusion"] = {{"classes", {"intact", "not_intact"}},
                            {"counts", r.class_confusion->counts},
                            {"rows", std::move(rows)}};
  }
  if (r.region_fdr) j["region_fdr"] = {{"intact", (*r.region_fdr)[0]}, {"not_intact", (*r.region_fdr)[1]}};
  if (r.counting) {
    ordered_json c;
    c["mae"] = r.counting->mae;
    if (r.counting->fit) {
      c["fit"] = {{"slope", r.counting->fit->slope},
                  {"intercept", r.counting->fit->intercept},
                  {"r_squared", r.counting->fit->r_squared}};
    } else {
      c["fit"] = nullptr;
    }
    c["relative_error"] = r.counting->relative_error;
    j["counting"] = std::move(c);
  }
  if (r.classification) {
    const auto& k = *r.classification;
    j["classification"] = {{"tp", k.tp},
                           {"fp", k.fp},
                           {"fn", k.fn},
                           {"tn", k.tn},
                           {"accuracy", k.accuracy},
                           {"sensitivity", optional_json(k.sensitivity)},
                           {"specificity", optional_json(k.specificity)}};
  }
  if (r.roc) {
    ordered_json pts = ordered_json::array();
    for (const auto& p : r.roc->points) {
      pts.push_back({{"threshold", threshold_json(p.threshold)},
                     {"fpr", p.fpr},
                     {"tpr", p.tpr},
                     {"accuracy", p.accuracy}});
    }
    j["roc"] = {{"auc", r.roc->auc},
                {"best_threshold", threshold_json(r.roc->best_threshold)},
                {"best_accuracy", r.roc->best_accuracy},
                {"points", std::move(pts)}};
  }
  return j.dump(2) + "\n";
}

std::string roc_csv(const RocCurve& roc) {
  std::ostringstream out;
  out.precision(17);
  out << "threshold,fpr,tpr,accuracy\n";
  for (const auto& p : roc.points) {
    if (std::isinf(p.threshold)) {
      out << (p.threshold > 0 ? "inf" : "-inf");
    } else {
      out << p.threshold;
    }
    out << ',' << p.fpr << ',' << p.tpr << ',' << p.accuracy << '\n';
  }
  return out.str();
}

}  // namespace eoscount
