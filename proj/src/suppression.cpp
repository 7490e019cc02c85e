#include "crank/suppression.hpp"

#include <stdexcept>

namespace crank {

void FusionConfig::validate() const {
  if (!(nms_iou > 0.0 && nms_iou < 1.0)) {
    throw std::invalid_argument("FusionConfig: nms_iou must be strictly inside (0,1)");
  }
  if (!(voting_iou > 0.0 && voting_iou < 1.0)) {
    throw std::invalid_argument("FusionConfig: voting_iou must be strictly inside (0,1)");
  }
}

std::vector<std::size_t> nms_indices(const DetectionSet& ds, ScoreField field,
                                     double iou_threshold) {
  const auto order = sorted_indices_desc(ds, field);
  std::vector<bool> suppressed(ds.detections.size(), false);
  std::vector<std::size_t> kept;
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (suppressed[j]) continue;
      if (iou(ds.detections[i].box, ds.detections[j].box) >= iou_threshold) {
        suppressed[j] = true;
      }
    }
  }
  return kept;
}

DetectionSet nms(const DetectionSet& ds, ScoreField field, double iou_threshold) {
  DetectionSet out;
  out.image_id = ds.image_id;
  out.image_width = ds.image_width;
  out.image_height = ds.image_height;
  for (std::size_t i : nms_indices(ds, field, iou_threshold)) {
    out.detections.push_back(ds.detections[i]);
  }
  return out;
}

DetectionSet box_voting(const DetectionSet& kept, const DetectionSet& all,
                        double voting_iou, ScoreField field) {
  DetectionSet out = kept;
  for (auto& k : out.detections) {
    double wsum = 0.0, xs = 0.0, ys = 0.0, ws = 0.0, hs = 0.0;
    for (const auto& a : all.detections) {
      if (iou(k.box, a.box) < voting_iou) continue;
      const double w = score_of(a, field);
      wsum += w;
      xs += w * a.box.x;
      ys += w * a.box.y;
      ws += w * a.box.w;
      hs += w * a.box.h;
    }
    if (wsum > 0.0) {
      k.box = BoundingBox(xs / wsum, ys / wsum, ws / wsum, hs / wsum);
    }
  }
  return out;
}

DetectionSet multiscale_fuse(const std::vector<DetectionSet>& per_scale,
                             const FusionConfig& cfg, ScoreField field) {
  cfg.validate();
  if (per_scale.empty()) return DetectionSet{};
  DetectionSet all;
  all.image_id = per_scale.front().image_id;
  all.image_width = per_scale.front().image_width;
  all.image_height = per_scale.front().image_height;
  for (const auto& s : per_scale) {
    if (s.image_id != all.image_id) {
      throw std::invalid_argument("multiscale_fuse: mixed image ids (" + all.image_id +
                                  " vs " + s.image_id + ")");
    }
    all.detections.insert(all.detections.end(), s.detections.begin(), s.detections.end());
  }
  const DetectionSet kept = nms(all, field, cfg.nms_iou);
  return box_voting(kept, all, cfg.voting_iou, field);
}

}  // namespace crank
