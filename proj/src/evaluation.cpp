#include "crank/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace crank {

std::vector<MatchOutcome> match_detections(const DetectionSet& ds,
                                           const GroundTruthImage& gt,
                                           ScoreField field, double iou_threshold) {
  const auto order = sorted_indices_desc(ds, field);
  std::vector<bool> gt_taken(gt.boxes.size(), false);
  std::vector<MatchOutcome> outcomes;
  outcomes.reserve(order.size());
  for (std::size_t i : order) {
    MatchOutcome mo;
    mo.detection_index = i;
    mo.score = score_of(ds.detections[i], field);
    mo.image_id = ds.image_id;
    double best = 0.0;
    std::size_t best_g = 0;
    bool found = false;
    for (std::size_t g = 0; g < gt.boxes.size(); ++g) {
      if (gt_taken[g]) continue;
      const double v = iou(ds.detections[i].box, gt.boxes[g]);
      if (v >= iou_threshold && v > best) {
        best = v;
        best_g = g;
        found = true;
      }
    }
    if (found) {
      gt_taken[best_g] = true;
      mo.matched = true;
      mo.matched_gt = best_g;
    }
    outcomes.push_back(mo);
  }
  return outcomes;
}

PRCurve compute_ap(const std::vector<MatchOutcome>& outcomes, std::size_t total_gt) {
  if (total_gt == 0) {
    throw std::invalid_argument("compute_ap: no ground truth (undefined metric)");
  }
  std::vector<const MatchOutcome*> sorted;
  sorted.reserve(outcomes.size());
  for (const auto& o : outcomes) sorted.push_back(&o);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const MatchOutcome* a, const MatchOutcome* b) {
                     return a->score > b->score;
                   });

  PRCurve curve;
  curve.points.reserve(sorted.size());
  std::size_t tp = 0, fp = 0;
  for (const auto* o : sorted) {
    if (o->matched) ++tp; else ++fp;
    PRPoint p;
    p.recall = static_cast<double>(tp) / static_cast<double>(total_gt);
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.score = o->score;
    curve.points.push_back(p);
  }

  // All-points interpolation: make precision non-increasing from the right,
  // then integrate over recall.
  std::vector<double> env(curve.points.size());
  double running = 0.0;
  for (std::size_t i = curve.points.size(); i-- > 0;) {
    running = std::max(running, curve.points[i].precision);
    env[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    ap += (curve.points[i].recall - prev_recall) * env[i];
    prev_recall = curve.points[i].recall;
  }
  curve.ap = ap;
  return curve;
}

namespace {

bool in_bucket(Difficulty d, Difficulty bucket) {
  // Buckets are cumulative: easy holds easy, medium holds easy+medium, hard
  // holds everything.
  return static_cast<int>(d) <= static_cast<int>(bucket);
}

struct BucketEval {
  bool present = false;
  PRCurve curve;
};

BucketEval eval_bucket(const std::vector<std::vector<MatchOutcome>>& per_image,
                       const std::vector<const GroundTruthImage*>& gts,
                       Difficulty bucket) {
  std::size_t total_gt = 0;
  for (const auto* gt : gts) {
    for (Difficulty d : gt->difficulty) {
      if (in_bucket(d, bucket)) ++total_gt;
    }
  }
  BucketEval out;
  if (total_gt == 0) return out;

  std::vector<MatchOutcome> pooled;
  for (std::size_t img = 0; img < per_image.size(); ++img) {
    const auto* gt = gts[img];
    for (const auto& o : per_image[img]) {
      if (o.matched) {
        if (!in_bucket(gt->difficulty[*o.matched_gt], bucket)) continue;  // ignored
        pooled.push_back(o);
      } else {
        pooled.push_back(o);
      }
    }
  }
  out.present = true;
  out.curve = compute_ap(pooled, total_gt);
  return out;
}

}  // namespace

ApReport bucketed_ap(const std::vector<DetectionSet>& detections,
                     const std::vector<GroundTruthImage>& ground_truth,
                     ScoreField field, double iou_threshold) {
  if (detections.size() != ground_truth.size()) {
    throw std::invalid_argument("bucketed_ap: detections/ground_truth size mismatch");
  }
  std::vector<std::vector<MatchOutcome>> per_image;
  std::vector<const GroundTruthImage*> gts;
  per_image.reserve(detections.size());
  for (std::size_t i = 0; i < detections.size(); ++i) {
    if (ground_truth[i].difficulty.size() != ground_truth[i].boxes.size()) {
      throw std::invalid_argument("bucketed_ap: difficulty list length mismatch");
    }
    per_image.push_back(match_detections(detections[i], ground_truth[i], field, iou_threshold));
    gts.push_back(&ground_truth[i]);
  }

  ApReport report;
  const BucketEval easy = eval_bucket(per_image, gts, Difficulty::kEasy);
  const BucketEval medium = eval_bucket(per_image, gts, Difficulty::kMedium);
  const BucketEval hard = eval_bucket(per_image, gts, Difficulty::kHard);
  if (easy.present) { report.ap_easy = easy.curve.ap; report.curve_easy = easy.curve; }
  if (medium.present) { report.ap_medium = medium.curve.ap; report.curve_medium = medium.curve; }
  if (hard.present) { report.ap_hard = hard.curve.ap; report.curve_hard = hard.curve; }
  return report;
}

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("kendall_tau: length mismatch");
  }
  const std::size_t n = a.size();
  long long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j];
      const double db = b[i] - b[j];
      const double prod = da * db;
      if (prod > 0.0) ++concordant;
      else if (prod < 0.0) ++discordant;
    }
  }
  auto tie_count = [](std::span<const double> v) {
    std::map<double, long long> groups;
    for (double x : v) ++groups[x];
    long long t = 0;
    for (const auto& [_, c] : groups) t += c * (c - 1) / 2;
    return t;
  };
  const long long n0 = static_cast<long long>(n) * (static_cast<long long>(n) - 1) / 2;
  const long long n1 = tie_count(a);
  const long long n2 = tie_count(b);
  const double denom = std::sqrt(static_cast<double>(n0 - n1)) *
                       std::sqrt(static_cast<double>(n0 - n2));
  if (denom <= 0.0) return 0.0;
  return static_cast<double>(concordant - discordant) / denom;
}

std::string pr_curve_to_text(const PRCurve& curve) {
  std::string out;
  char line[96];
  for (const auto& p : curve.points) {
    std::snprintf(line, sizeof(line), "%.6f %.6f %.6f\n", p.score, p.precision, p.recall);
    out += line;
  }
  return out;
}

}  // namespace crank
