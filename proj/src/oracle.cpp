#include "crank/oracle.hpp"

#include <stdexcept>

namespace crank {

DetectionSet assign_oracle(const DetectionSet& ds, const GroundTruthImage& gt) {
  if (ds.image_id != gt.image_id) {
    throw std::invalid_argument("assign_oracle: image id mismatch (" + ds.image_id +
                                " vs " + gt.image_id + ")");
  }
  DetectionSet out = ds;
  for (auto& d : out.detections) {
    d.oracle = best_match_iou(d.box, gt.boxes);
  }
  return out;
}

DetectionSet oracle_rescore(const DetectionSet& ds, const GroundTruthImage& gt) {
  DetectionSet out = assign_oracle(ds, gt);
  for (auto& d : out.detections) {
    d.refined = d.oracle;
  }
  return out;
}

}  // namespace crank
