#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crank/geometry.hpp"

namespace crank {

struct MatchOutcome {
  std::size_t detection_index = 0;
  double score = 0.0;
  bool matched = false;
  std::optional<std::size_t> matched_gt;
  std::string image_id;
};

struct PRPoint {
  double recall = 0.0;
  double precision = 0.0;
  double score = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // ordered by descending score threshold
  double ap = 0.0;
};

struct ApReport {
  std::optional<double> ap_easy;
  std::optional<double> ap_medium;
  std::optional<double> ap_hard;
  PRCurve curve_easy;
  PRCurve curve_medium;
  PRCurve curve_hard;
};

// Greedy confidence-ranked matching: detections in descending score order
// each claim the highest-IoU unmatched ground-truth box with IoU >=
// iou_threshold; every ground truth is matched at most once.
std::vector<MatchOutcome> match_detections(const DetectionSet& ds,
                                           const GroundTruthImage& gt,
                                           ScoreField field,
                                           double iou_threshold = 0.5);

// Global descending-score sweep over all images' outcomes. AP is the area
// under the all-points interpolated precision envelope.
// Throws std::invalid_argument when total_gt == 0 (undefined metric).
PRCurve compute_ap(const std::vector<MatchOutcome>& outcomes, std::size_t total_gt);

// Cumulative WiderFace-style buckets: easy <= medium <= hard, where hard
// contains every ground-truth box. A detection matched to an out-of-bucket
// ground truth is ignored (neither TP nor FP). Buckets with no ground truth
// are reported as absent.
ApReport bucketed_ap(const std::vector<DetectionSet>& detections,
                     const std::vector<GroundTruthImage>& ground_truth,
                     ScoreField field, double iou_threshold = 0.5);

// Kendall rank correlation (tau-b, tie-corrected) between two score
// sequences of equal length. Returns 0 when either sequence is constant.
double kendall_tau(std::span<const double> a, std::span<const double> b);

// Curve serialization: one "score precision recall" line per point.
std::string pr_curve_to_text(const PRCurve& curve);

}  // namespace crank
