#pragma once

#include <utility>

#include "crank/geometry.hpp"

namespace crank {

// Geometric transform applied to detector outputs and ground truth alike,
// without re-running any detector: crop to a region, rescale, optionally
// mirror horizontally about the region center. The crop region is given in
// source-image coordinates; the output frame is the (scaled) region.
struct BoxTransform {
  BoundingBox crop;     // must have positive area
  double scale = 1.0;   // applied after cropping
  bool mirror = false;

  static BoxTransform identity_for(double image_width, double image_height) {
    BoxTransform t;
    t.crop = BoundingBox(0.0, 0.0, image_width, image_height);
    return t;
  }
};

// Applies the same transform to detections and ground truth. Ground-truth
// boxes fully outside the crop are dropped; detections fully outside are
// removed (they become zero padding once the box matrix is rebuilt).
// Throws std::invalid_argument for an empty crop or non-positive scale.
std::pair<DetectionSet, GroundTruthImage> augment_boxes(const DetectionSet& ds,
                                                        const GroundTruthImage& gt,
                                                        const BoxTransform& t);

}  // namespace crank
