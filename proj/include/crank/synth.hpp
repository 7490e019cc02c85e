#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "crank/geometry.hpp"
#include "crank/tensor.hpp"

namespace crank {

// Scene generator settings. Ground-truth boxes are sampled with log-uniform
// heights; difficulty tags follow the log-height terciles of that range
// (large boxes are easy).
struct SceneSpec {
  double frame_width = 256.0;
  double frame_height = 256.0;
  int min_boxes = 2;
  int max_boxes = 6;
  double min_height = 16.0;
  double max_height = 96.0;
  double min_aspect = 0.7;
  double max_aspect = 1.3;
  double max_gt_overlap = 0.25;  // max IoU between ground-truth boxes
  int feature_size = 64;         // rendered feature grid side

  void validate() const;
  Difficulty difficulty_of(double height) const;
};

// A parameterized model of one detector's error statistics: localization
// jitter, duplicate detections per face, background false positives, and a
// corruption model mapping true IoU to the emitted confidence.
struct DetectorPersonality {
  std::string name = "detector";
  double loc_noise = 0.05;       // jitter sd as a fraction of box size
  int duplicates = 2;            // detections emitted per ground-truth box
  double fp_rate = 4.0;          // mean background false positives per image
  double conf_intercept = 0.1;
  double conf_slope = 0.8;
  double conf_noise = 0.05;      // gaussian sd added to the confidence
  double inversion_prob = 0.0;   // probability of scoring from (1 - IoU)
};

struct CorpusImage {
  GroundTruthImage gt;
  Tensor features;                      // [1][feature_size][feature_size]
  std::vector<DetectionSet> variants;   // one per personality, oracle assigned
};

struct SyntheticCorpus {
  std::vector<CorpusImage> images;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
  SceneSpec spec;
  std::vector<DetectorPersonality> personalities;
};

// Soft-blob rendering of the scene onto the feature grid; a pure function of
// the ground truth, so augmented scenes can be re-rendered.
Tensor render_features(const GroundTruthImage& gt, int feature_size);

// Samples ground truth per the spec and renders its features.
// Deterministic per seed. Throws std::invalid_argument on an infeasible spec.
std::pair<GroundTruthImage, Tensor> generate_scene(const SceneSpec& spec,
                                                   std::uint64_t seed,
                                                   const std::string& image_id);

// Emits duplicate jittered boxes per ground truth plus background false
// positives, scored through the personality's corruption model. Oracle
// confidences are left unset.
DetectionSet run_personality(const GroundTruthImage& gt, const DetectorPersonality& p,
                             std::uint64_t seed);

// Deterministic corpus with oracle confidences assigned and a disjoint
// train/validation split (the last round(n * val_fraction) images validate).
SyntheticCorpus build_corpus(int n_images, const SceneSpec& spec,
                             const std::vector<DetectorPersonality>& personalities,
                             std::uint64_t seed, double val_fraction = 0.2);

// The frozen defaults behind the oracle-gap experiment: a decent detector,
// a compressed low-discrimination one, and an order-inverting one.
SceneSpec default_scene_spec();
std::vector<DetectorPersonality> default_personalities();

}  // namespace crank
