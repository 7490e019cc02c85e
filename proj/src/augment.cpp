#include "crank/augment.hpp"

#include <stdexcept>

namespace crank {

namespace {

bool outside_crop(const BoundingBox& b, const BoundingBox& crop) {
  return b.x2() <= crop.x || b.x >= crop.x2() || b.y2() <= crop.y || b.y >= crop.y2();
}

BoundingBox transform_box(const BoundingBox& b, const BoxTransform& t, double out_w) {
  double x = (b.x - t.crop.x) * t.scale;
  const double y = (b.y - t.crop.y) * t.scale;
  const double w = b.w * t.scale;
  const double h = b.h * t.scale;
  if (t.mirror) x = out_w - (x + w);
  return BoundingBox(x, y, w, h);
}

}  // namespace

std::pair<DetectionSet, GroundTruthImage> augment_boxes(const DetectionSet& ds,
                                                        const GroundTruthImage& gt,
                                                        const BoxTransform& t) {
  if (!(t.crop.w > 0.0) || !(t.crop.h > 0.0)) {
    throw std::invalid_argument("augment_boxes: empty crop region");
  }
  if (!(t.scale > 0.0)) {
    throw std::invalid_argument("augment_boxes: scale must be positive");
  }
  const double out_w = t.crop.w * t.scale;
  const double out_h = t.crop.h * t.scale;

  DetectionSet out_ds;
  out_ds.image_id = ds.image_id;
  out_ds.image_width = out_w;
  out_ds.image_height = out_h;
  for (const auto& d : ds.detections) {
    if (outside_crop(d.box, t.crop)) continue;
    Detection nd = d;
    nd.box = transform_box(d.box, t, out_w);
    out_ds.detections.push_back(nd);
  }

  GroundTruthImage out_gt;
  out_gt.image_id = gt.image_id;
  out_gt.image_width = out_w;
  out_gt.image_height = out_h;
  for (std::size_t i = 0; i < gt.boxes.size(); ++i) {
    if (outside_crop(gt.boxes[i], t.crop)) continue;
    out_gt.boxes.push_back(transform_box(gt.boxes[i], t, out_w));
    out_gt.difficulty.push_back(gt.difficulty[i]);
  }
  return {out_ds, out_gt};
}

}  // namespace crank
