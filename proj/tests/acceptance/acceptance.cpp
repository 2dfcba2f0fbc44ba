// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Criterion 8 runs in a forked child so its resident peak is measured alone.

#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "eoscount/counter.hpp"
#include "eoscount/metrics.hpp"
#include "eoscount/pec.hpp"
#include "eoscount/pipeline.hpp"
#include "eoscount/report.hpp"
#include "eoscount/segmenter.hpp"
#include "eoscount/slide.hpp"
#include "eoscount/synth.hpp"
#include "eoscount/tiler.hpp"
#include "metric_fixtures.hpp"
#include "testing.hpp"

namespace eoscount {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

Outcome fail(const std::string& why) { return {false, why}; }

SlideMeta square_meta(int64_t side, const std::string& id) {
  SlideMeta m;
  m.id = id;
  m.width_px = m.height_px = side;
  return m;
}

Outcome counting_rule_table() {
  const auto t0 = Clock::now();
  const std::vector<int64_t> areas{0, 1800, 1801, 2050, 3000, 3001, 4999, 5000, 6999, 7000};
  const std::vector<int64_t> want{0, 0, 1, 1, 1, 1, 1, 2, 2, 3};
  for (size_t i = 0; i < areas.size(); ++i) {
    const int64_t got = eos_count_of_area(areas[i]);
    if (got != want[i]) return fail("area " + std::to_string(areas[i]) + " gave " + std::to_string(got));
  }
  const double s = seconds_since(t0);
  if (s >= 1.0) return fail("took " + std::to_string(s) + " s");
  return {true, "10 areas exact"};
}

Outcome metric_fidelity() {
  const auto fixtures = testing::metric_fixtures();
  if (fixtures.size() != 12) return fail(std::to_string(fixtures.size()) + " fixtures");
  for (const auto& f : fixtures) {
    const SegScores s = seg_metrics(f.gt, f.pred, f.policy);
    if (!testing::scores_match(s.intact, f.intact) || !testing::scores_match(s.not_intact, f.not_intact) ||
        !testing::scores_match(s.overall, f.overall)) {
      return fail("fixture '" + f.name + "' differs");
    }
  }
  return {true, "12 fixtures within 1e-12"};
}

Outcome pec_oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  const int64_t sides[] = {64, 128, 256};
  for (int i = 0; i < 200; ++i) {
    const int64_t w = std::uniform_int_distribution<int64_t>(32, 1024)(rng);
    const int64_t h = std::uniform_int_distribution<int64_t>(32, 1024)(rng);
    const int64_t n = std::uniform_int_distribution<int64_t>(0, 200)(rng);
    const int64_t side = sides[i % 3];
    auto points = testing::random_points(rng, n, w, h);
    // Snap a share of points to integers so half-open edges get exercised.
    for (auto& p : points) {
      if (std::bernoulli_distribution(0.3)(rng)) p = {std::floor(p.x), std::floor(p.y), p.multiplicity};
    }
    const WindowPeak fast = peak_window(points, side, w, h);
    const WindowPeak slow = brute_force_pec(points, side, w, h);
    if (!(fast == slow)) {
      return fail("instance " + std::to_string(i) + ": count " + std::to_string(fast.count) + " vs " +
                  std::to_string(slow.count));
    }
  }
  const double s = seconds_since(t0);
  if (s >= 60.0) return fail("took " + std::to_string(s) + " s");
  std::ostringstream d;
  d << "200 instances identical in " << s << " s";
  return {true, d.str()};
}

Outcome end_to_end_closure() {
  int64_t abs_error = 0, correct = 0;
  std::string first_miss;
  for (int i = 0; i < 50; ++i) {
    const int64_t planted = i % 31;
    const SynthCase c =
        generate_random_slide(1000 + static_cast<uint64_t>(i), square_meta(4096, "e2e" + std::to_string(i)), {planted});
    if (c.truth.planted_pec != planted) return fail("generator missed target " + std::to_string(planted));
    const SlideAnalysis a = analyze_slide(c.slide, {}, OracleSegmenter());
    abs_error += std::abs(a.pec.peak_count - planted);
    if (a.pec.label == c.truth.label && a.pec.label == classify(planted)) ++correct;
    if (a.pec.peak_count != planted && first_miss.empty()) {
      first_miss = c.truth.slide_id + " planted " + std::to_string(planted) + " got " + std::to_string(a.pec.peak_count);
    }
  }
  std::ostringstream d;
  d << "MAE " << static_cast<double>(abs_error) / 50.0 << ", accuracy " << static_cast<double>(correct) / 50.0;
  if (!first_miss.empty()) d << "; " << first_miss;
  return {abs_error == 0 && correct == 50, d.str()};
}

Outcome grid_and_geometry() {
  const auto grid = plan_grid(1200, 448);
  if (grid != std::vector<int64_t>{0, 376, 752}) return fail("plan_grid(1200,448) wrong");
  const int64_t side = hpf_side_px(0.3, 0.2555);
  if (side != 2144) return fail("hpf_side_px gave " + std::to_string(side));
  return {true, "[0,376,752] and 2144"};
}

Outcome roc_correctness() {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int cohort = 0; cohort < 30; ++cohort) {
    const int n = std::uniform_int_distribution<int>(2, 20)(rng);
    std::vector<double> scores;
    std::vector<Activity> labels;
    for (int i = 0; i < n; ++i) {
      const auto pec = std::uniform_int_distribution<int>(0, 30)(rng);
      scores.push_back(pec);
      // Noisy labels around the clinical cut, with shared scores for ties.
      const bool active = std::bernoulli_distribution(pec >= 15 ? 0.85 : 0.15)(rng);
      labels.push_back(active ? Activity::kActive : Activity::kInactive);
    }
    labels[0] = Activity::kActive;
    labels[1] = Activity::kInactive;
    worst = std::max(worst, std::abs(roc_sweep(scores, labels).auc - testing::concordance_auc(scores, labels)));
  }
  if (worst > 1e-12) return fail("AUC off by " + std::to_string(worst));

  std::vector<double> scores;
  std::vector<Activity> labels;
  for (int pec = 0; pec <= 30; ++pec) {
    scores.push_back(pec);
    labels.push_back(pec >= 15 ? Activity::kActive : Activity::kInactive);
  }
  scores.push_back(5);
  labels.push_back(Activity::kActive);
  scores.push_back(25);
  labels.push_back(Activity::kInactive);
  const double best = roc_sweep(scores, labels).best_threshold;
  if (best != 14.5) return fail("best_threshold " + std::to_string(best));
  std::ostringstream d;
  d << "30 cohorts, max AUC gap " << worst << "; best_threshold 14.5";
  return {true, d.str()};
}

Outcome determinism() {
  for (int i = 0; i < 10; ++i) {
    const SynthCase c =
        generate_random_slide(500 + static_cast<uint64_t>(i), square_meta(4096, "det" + std::to_string(i)), {3 * i});
    std::string reference;
    for (const int64_t workers : {1, 2, 8}) {
      PipelineConfig cfg;
      cfg.worker_count = workers;
      const std::string report = slide_report_json(analyze_slide(c.slide, cfg, OracleSegmenter()), cfg, "oracle");
      if (reference.empty()) {
        reference = report;
      } else if (report != reference) {
        return fail(c.truth.slide_id + " differs at " + std::to_string(workers) + " workers");
      }
    }
  }
  return {true, "10 slides x workers {1,2,8} byte-identical"};
}

// Child side of criterion 8; writes "peak seconds" to `fd`.
int streaming_child(int fd) {
  testing::TempDir dir;
  SynthOptions opts;
  opts.margin_px = 1024;
  const int64_t planted = 19;
  {
    const SynthCase c = generate_random_slide(16384, square_meta(16384, "big"), {planted}, opts);
    write_slide(c.slide, dir / "slide");
  }
  const auto t0 = Clock::now();
  const auto slide = TiledSlide::open(dir / "slide");
  PipelineConfig cfg;
  cfg.worker_count = std::max<int64_t>(1, static_cast<int64_t>(std::thread::hardware_concurrency()));
  const SlideAnalysis a = analyze_slide(*slide, cfg, OracleSegmenter());
  const std::string report = slide_report_json(a, cfg, "oracle");
  const double s = seconds_since(t0);
  const std::string msg = std::to_string(a.pec.peak_count) + " " + std::to_string(s) + " " + std::to_string(planted);
  return write(fd, msg.data(), msg.size()) == static_cast<ssize_t>(msg.size()) ? 0 : 1;
}

Outcome streaming_budget() {
  std::fflush(stdout);
  int fds[2];
  if (pipe(fds) != 0) return fail("pipe failed");
  const pid_t pid = fork();
  if (pid < 0) return fail("fork failed");
  if (pid == 0) {
    close(fds[0]);
    int code = 1;
    try {
      code = streaming_child(fds[1]);
    } catch (const std::exception& e) {
      const std::string msg = std::string("error ") + e.what();
      [[maybe_unused]] auto n = write(fds[1], msg.data(), msg.size());
    }
    _exit(code);
  }
  close(fds[1]);
  std::string msg;
  char buf[256];
  for (ssize_t n; (n = read(fds[0], buf, sizeof buf)) > 0;) msg.append(buf, static_cast<size_t>(n));
  close(fds[0]);
  int status = 0;
  rusage usage{};
  wait4(pid, &status, 0, &usage);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return fail("child failed: " + msg);

  std::istringstream in(msg);
  int64_t peak = -1, planted = -2;
  double s = 0.0;
  in >> peak >> s >> planted;
  const double rss_gib = static_cast<double>(usage.ru_maxrss) / (1024.0 * 1024.0);  // ru_maxrss is KiB
  std::ostringstream d;
  d << "16384^2 peak " << peak << " (planted " << planted << "), " << s << " s, max RSS " << rss_gib << " GiB";
  return {peak == planted && s < 120.0 && rss_gib < 2.0, d.str()};
}

Outcome fusion_property() {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t w = std::uniform_int_distribution<int64_t>(1, 300)(rng);
    const int64_t h = std::uniform_int_distribution<int64_t>(1, 200)(rng);
    std::vector<PatchMask> patches;
    for (int i = std::uniform_int_distribution<int>(0, 16)(rng); i > 0; --i) {
      const int64_t pw = std::uniform_int_distribution<int64_t>(1, w)(rng);
      const int64_t ph = std::uniform_int_distribution<int64_t>(1, h)(rng);
      PatchMask p{BinaryMask(pw, ph), BinaryMask(pw, ph), std::uniform_int_distribution<int64_t>(0, w - pw)(rng),
                  std::uniform_int_distribution<int64_t>(0, h - ph)(rng)};
      const double density = std::uniform_real_distribution<double>(0.0, 0.5)(rng);
      for (int64_t y = 0; y < ph; ++y) {
        for (int64_t x = 0; x < pw; ++x) {
          p.intact.set(x, y, std::bernoulli_distribution(density)(rng));
          p.not_intact.set(x, y, std::bernoulli_distribution(density)(rng));
        }
      }
      patches.push_back(std::move(p));
    }
    // Full-size OR reference.
    std::vector<uint8_t> a(static_cast<size_t>(w * h), 0), b(a);
    for (const auto& p : patches) {
      for (int64_t y = 0; y < p.intact.height(); ++y) {
        for (int64_t x = 0; x < p.intact.width(); ++x) {
          const auto i = static_cast<size_t>((p.y + y) * w + p.x + x);
          a[i] |= static_cast<uint8_t>(p.intact.at(x, y));
          b[i] |= static_cast<uint8_t>(p.not_intact.at(x, y));
        }
      }
    }
    for (int perm = 0; perm < 4; ++perm) {
      if (perm == 1) std::reverse(patches.begin(), patches.end());
      if (perm > 1) std::shuffle(patches.begin(), patches.end(), rng);
      const FusedMask f = fuse_masks(patches, w, h);
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
          const auto i = static_cast<size_t>(y * w + x);
          if (f.intact().test(x, y) != (a[i] != 0) || f.not_intact().test(x, y) != (b[i] != 0)) {
            return fail("layout " + std::to_string(trial) + " differs at (" + std::to_string(x) + "," +
                        std::to_string(y) + ")");
          }
        }
      }
    }
  }
  return {true, "100 layouts x 4 orders pixel-exact"};
}

}  // namespace
}  // namespace eoscount

int main() {
  using eoscount::Outcome;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"counting-rule table", eoscount::counting_rule_table},
      {"metric fidelity", eoscount::metric_fidelity},
      {"peak oracle equivalence", eoscount::pec_oracle_equivalence},
      {"end-to-end closure", eoscount::end_to_end_closure},
      {"grid and geometry anchors", eoscount::grid_and_geometry},
      {"ROC correctness", eoscount::roc_correctness},
      {"determinism and concurrency", eoscount::determinism},
      {"streaming budget", eoscount::streaming_budget},
      {"fusion property", eoscount::fusion_property},
  };
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
