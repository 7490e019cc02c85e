#pragma once

#include "crank/geometry.hpp"

namespace crank {

// Sets every detection's oracle confidence to the IoU with its closest
// ground-truth box. Raw confidences are untouched. With no ground truth,
// every oracle is 0 (everything is a false positive).
// Throws std::invalid_argument when image ids differ.
DetectionSet assign_oracle(const DetectionSet& ds, const GroundTruthImage& gt);

// The upper-bound experiment: refined confidence := oracle confidence.
// Idempotent.
DetectionSet oracle_rescore(const DetectionSet& ds, const GroundTruthImage& gt);

}  // namespace crank
