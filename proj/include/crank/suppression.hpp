#pragma once

#include <vector>

#include "crank/geometry.hpp"

namespace crank {

// Multi-scale fusion settings. `scales` and `flip` describe how the caller
// produced its per-scale detection sets; the suppression stage itself never
// touches pixels.
struct FusionConfig {
  double nms_iou = 0.4;
  double voting_iou = 0.4;
  std::vector<double> scales;
  bool flip = false;

  // Throws std::invalid_argument unless both thresholds are strictly in (0,1).
  void validate() const;
};

// Greedy NMS: repeatedly keep the highest-scored unsuppressed detection and
// suppress everything with IoU >= iou_threshold against it. Ties in score
// keep the lower original index. Returns kept input indices in keep order.
std::vector<std::size_t> nms_indices(const DetectionSet& ds, ScoreField field,
                                     double iou_threshold);

// Same, returning the kept detections (suppressed boxes are dropped).
DetectionSet nms(const DetectionSet& ds, ScoreField field, double iou_threshold);

// Replaces each kept box's coordinates with the score-weighted average of
// every box in `all` overlapping it at IoU >= voting_iou. The kept box's own
// score is unchanged. Precondition: kept is a subset of all (so each box
// votes at least for itself).
DetectionSet box_voting(const DetectionSet& kept, const DetectionSet& all,
                        double voting_iou, ScoreField field = ScoreField::kRaw);

// Concatenates per-scale sets (already mapped back to original-image
// coordinates by the caller), runs NMS, then box voting. Empty input gives
// an empty set.
DetectionSet multiscale_fuse(const std::vector<DetectionSet>& per_scale,
                             const FusionConfig& cfg,
                             ScoreField field = ScoreField::kRaw);

}  // namespace crank
