#pragma once

#include <optional>
#include <string>
#include <vector>

namespace crank {

// Axis-aligned box in image coordinates. (x, y) is the top-left corner.
// Zero-area boxes are legal (a face downscaled to a point still exists);
// negative extents and non-finite coordinates are rejected at construction.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  BoundingBox() = default;
  BoundingBox(double x, double y, double w, double h);

  double x2() const { return x + w; }
  double y2() const { return y + h; }
  double area() const { return w * h; }

  bool operator==(const BoundingBox& o) const = default;
};

enum class Difficulty { kEasy = 0, kMedium = 1, kHard = 2 };

// Which confidence field of a Detection an operation reads.
enum class ScoreField { kRaw, kOracle, kRefined };

struct Detection {
  BoundingBox box;
  double confidence = 0.0;            // raw detector score
  std::optional<double> oracle;       // IoU with the closest ground-truth box
  std::optional<double> refined;      // ranker output

  Detection() = default;
  Detection(const BoundingBox& b, double conf) : box(b), confidence(conf) {}
};

// Returns the requested confidence field; throws std::invalid_argument when
// the field has not been assigned.
double score_of(const Detection& d, ScoreField field);
const char* score_field_name(ScoreField field);

struct DetectionSet {
  std::string image_id;
  double image_width = 0.0;
  double image_height = 0.0;
  std::vector<Detection> detections;

  bool empty() const { return detections.empty(); }
  std::size_t size() const { return detections.size(); }
};

struct GroundTruthImage {
  std::string image_id;
  double image_width = 0.0;
  double image_height = 0.0;
  std::vector<BoundingBox> boxes;
  std::vector<Difficulty> difficulty;  // parallel to boxes
};

// Intersection over union. Total on valid boxes: degenerate inputs give 0,
// two zero-area boxes give 0 (union is empty).
double iou(const BoundingBox& a, const BoundingBox& b);

// Max IoU of `d` against `gts`; 0 for an empty list.
double best_match_iou(const BoundingBox& d, const std::vector<BoundingBox>& gts);

// Divides coordinates by the image dimensions after clamping each box to the
// frame (out-of-frame boxes are clamped, never dropped). Confidences are
// untouched. The returned set has image_width == image_height == 1.
DetectionSet normalize_detections(const DetectionSet& ds);

// Inverse of normalize_detections for in-frame boxes.
DetectionSet denormalize_detections(const DetectionSet& ds, double image_width,
                                    double image_height);

// Indices of `ds.detections` ordered by descending `field` score; equal
// scores keep their original relative order.
std::vector<std::size_t> sorted_indices_desc(const DetectionSet& ds, ScoreField field);

}  // namespace crank
