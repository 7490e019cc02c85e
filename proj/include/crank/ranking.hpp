#pragma once

#include <span>
#include <vector>

#include "crank/geometry.hpp"

namespace crank {

// Label for a pair of oracle confidences: 0 when the first is strictly
// larger, 1 otherwise (ties count as 1).
int pair_label(double c_gt_1, double c_gt_2);

// Loss of a single confidence pair with analytic partials.
struct PairLoss {
  double value = 0.0;
  double d_c1 = 0.0;
  double d_c2 = 0.0;
};

// Sigmoid cross-entropy on the confidence difference (the RankNet form).
// With d = c1 - c2, p = sigmoid(d) and target t = 1 - y, the loss is
// -t*log(p) - (1-t)*log(1-p), computed as softplus(d) - t*d for stability.
PairLoss rank_loss(double c1, double c2, int y);

// Margin-rescaled variant: the logit becomes d' = (c1 - c2) - m*s with
// m = |c_gt_1 - c_gt_2| and s = +1 when the first should outrank the second,
// -1 otherwise. Reduces to rank_loss when the oracle gap is zero; pushes the
// pair apart proportionally to that gap.
PairLoss rank_loss_margin(double c1, double c2, double c_gt_1, double c_gt_2);

// Pair (i, j) of positions in a confidence-descending-sorted list, taken at
// skip distance k (j == i + k).
struct PairEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  int skip = 1;
};

struct PairSet {
  std::vector<PairEntry> pairs;
  int n = 1;  // max skip distance
};

// n-pair selection: for each skip level k in 1..n, all pairs (i, i+k).
// Level 1 is the neighbor pair; level 2 adds the odd and even pairs.
// Throws std::invalid_argument when the input is not sorted descending or
// n < 1.
PairSet select_pairs(std::span<const double> sorted_confidences, int n);

// Loss plus gradient w.r.t. each refined confidence.
struct VectorLoss {
  double value = 0.0;
  std::vector<double> grad;
};

enum class RankLossKind { kPlain, kMarginRescaled };

// Pairwise ranking loss over rows that are already sorted descending by raw
// detector confidence: skip level k is mean-reduced over its pairs and
// weighted 1/k, levels summed. Fewer than 2 rows gives zero loss and
// gradient.
VectorLoss ranked_pair_loss(std::span<const double> refined,
                            std::span<const double> oracle, int n,
                            RankLossKind kind = RankLossKind::kPlain);

// Same loss on a DetectionSet: sorts by raw confidence descending (stable by
// index), applies ranked_pair_loss, and scatters gradients back to the
// original detection order. Oracle and refined must be present on every
// detection.
VectorLoss image_rank_loss(const DetectionSet& ds, int n,
                           RankLossKind kind = RankLossKind::kPlain);

enum class RegressionKind { kL1, kL2, kSmoothL1, kCrossEntropy };

// Scalar regression loss with the analytic gradient w.r.t. the refined
// confidence; the Table-1-style ablation baselines. CrossEntropy clamps its
// logs at eps = 1e-7 and requires inputs in [0,1].
struct ScalarLoss {
  double value = 0.0;
  double d_refined = 0.0;
};
ScalarLoss regression_loss(RegressionKind kind, double c_refined, double c_oracle);

// Mean regression loss over rows (gradient per row).
VectorLoss vector_regression_loss(RegressionKind kind, std::span<const double> refined,
                                  std::span<const double> oracle);

const char* regression_kind_name(RegressionKind kind);

}  // namespace crank
