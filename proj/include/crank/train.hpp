#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "crank/geometry.hpp"
#include "crank/net.hpp"
#include "crank/ranking.hpp"

namespace crank {

// One training image: its rendered features, the ground truth, and one
// detection set per detector personality. Every detection must carry an
// oracle confidence.
struct TrainExample {
  Tensor features;
  GroundTruthImage gt;
  std::vector<DetectionSet> variants;
};

enum class LossKind { kRank, kMarginRank, kL1, kL2, kSmoothL1, kCrossEntropy };
const char* loss_kind_name(LossKind kind);

struct TrainSchedule {
  int batch_size = 32;
  int iterations = 100000;
  double lr_start = 1e-3;
  double lr_end = 1e-6;
  std::uint64_t seed = 0;
  int log_every = 50;
  LossKind loss = LossKind::kRank;
  int pair_n = 10;  // skip levels for the ranking loss
  bool augment = false;
  // Re-renders features for an augmented scene; required when augment is on.
  std::function<Tensor(const GroundTruthImage&)> render;
};

struct TrainResult {
  // (iteration, mean batch loss) every log_every iterations.
  std::vector<std::pair<int, double>> loss_history;
};

// lr(t) = lr_start * (lr_end / lr_start)^(t / iterations): exponential decay
// from lr_start towards lr_end.
double learning_rate_at(const TrainSchedule& s, int iteration);

// Adam over the summed per-image gradients; one detector personality is
// sampled per image per iteration. Deterministic given the schedule seed.
// Throws std::invalid_argument on an empty dataset or missing oracles.
TrainResult train(RankerNetwork& net, const std::vector<TrainExample>& dataset,
                  const TrainSchedule& schedule);

// Inference: refined confidences written back onto the detections. Rows that
// do not fit in the network capacity keep their raw confidence.
DetectionSet apply_ranker(const RankerNetwork& net, const Tensor& features,
                          const DetectionSet& ds);

}  // namespace crank
