#include "crank/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace crank {

BoundingBox::BoundingBox(double x_, double y_, double w_, double h_)
    : x(x_), y(y_), w(w_), h(h_) {
  if (!(std::isfinite(x) && std::isfinite(y) && std::isfinite(w) && std::isfinite(h))) {
    throw std::invalid_argument("BoundingBox: coordinates must be finite");
  }
  if (w < 0.0 || h < 0.0) {
    throw std::invalid_argument("BoundingBox: negative extent");
  }
}

double score_of(const Detection& d, ScoreField field) {
  switch (field) {
    case ScoreField::kRaw:
      return d.confidence;
    case ScoreField::kOracle:
      if (!d.oracle) throw std::invalid_argument("detection has no oracle confidence");
      return *d.oracle;
    case ScoreField::kRefined:
      if (!d.refined) throw std::invalid_argument("detection has no refined confidence");
      return *d.refined;
  }
  throw std::invalid_argument("unknown score field");
}

const char* score_field_name(ScoreField field) {
  switch (field) {
    case ScoreField::kRaw: return "raw";
    case ScoreField::kOracle: return "oracle";
    case ScoreField::kRefined: return "refined";
  }
  return "?";
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  // identical boxes short-circuit so iou(a,a) is exactly 1; the clipped
  // arithmetic below can otherwise lose an ulp on (x+w)-x
  if (a == b) return (a.w > 0.0 && a.h > 0.0) ? 1.0 : 0.0;
  const double ix = std::max(a.x, b.x);
  const double iy = std::max(a.y, b.y);
  const double ix2 = std::min(a.x2(), b.x2());
  const double iy2 = std::min(a.y2(), b.y2());
  const double iw = ix2 - ix;
  const double ih = iy2 - iy;
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

double best_match_iou(const BoundingBox& d, const std::vector<BoundingBox>& gts) {
  double best = 0.0;
  for (const auto& gt : gts) best = std::max(best, iou(d, gt));
  return best;
}

namespace {

BoundingBox clamp_to_frame(const BoundingBox& b, double w, double h) {
  const double x0 = std::clamp(b.x, 0.0, w);
  const double y0 = std::clamp(b.y, 0.0, h);
  const double x1 = std::clamp(b.x2(), x0, w);
  const double y1 = std::clamp(b.y2(), y0, h);
  return BoundingBox(x0, y0, x1 - x0, y1 - y0);
}

}  // namespace

DetectionSet normalize_detections(const DetectionSet& ds) {
  if (!(ds.image_width > 0.0) || !(ds.image_height > 0.0)) {
    throw std::invalid_argument("normalize_detections: image dimensions must be positive");
  }
  DetectionSet out;
  out.image_id = ds.image_id;
  out.image_width = 1.0;
  out.image_height = 1.0;
  out.detections.reserve(ds.detections.size());
  for (const auto& d : ds.detections) {
    const BoundingBox c = clamp_to_frame(d.box, ds.image_width, ds.image_height);
    Detection nd = d;
    nd.box = BoundingBox(c.x / ds.image_width, c.y / ds.image_height,
                         c.w / ds.image_width, c.h / ds.image_height);
    out.detections.push_back(nd);
  }
  return out;
}

DetectionSet denormalize_detections(const DetectionSet& ds, double image_width,
                                    double image_height) {
  if (!(image_width > 0.0) || !(image_height > 0.0)) {
    throw std::invalid_argument("denormalize_detections: image dimensions must be positive");
  }
  DetectionSet out = ds;
  out.image_width = image_width;
  out.image_height = image_height;
  for (auto& d : out.detections) {
    d.box = BoundingBox(d.box.x * image_width, d.box.y * image_height,
                        d.box.w * image_width, d.box.h * image_height);
  }
  return out;
}

std::vector<std::size_t> sorted_indices_desc(const DetectionSet& ds, ScoreField field) {
  std::vector<std::size_t> idx(ds.detections.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return score_of(ds.detections[a], field) > score_of(ds.detections[b], field);
  });
  return idx;
}

}  // namespace crank
