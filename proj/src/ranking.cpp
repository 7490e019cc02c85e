#include "crank/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crank {

namespace {

constexpr double kCrossEntropyEps = 1e-7;

double softplus(double x) {
  // max(x,0) + log1p(exp(-|x|)); exact for saturated inputs.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Cross-entropy of sigmoid(logit) against target t, with d(loss)/d(logit).
PairLoss logit_ce(double logit, double t) {
  PairLoss out;
  out.value = softplus(logit) - t * logit;
  const double g = sigmoid(logit) - t;
  out.d_c1 = g;
  out.d_c2 = -g;
  return out;
}

}  // namespace

int pair_label(double c_gt_1, double c_gt_2) { return c_gt_1 > c_gt_2 ? 0 : 1; }

PairLoss rank_loss(double c1, double c2, int y) {
  const double t = 1.0 - static_cast<double>(y);
  return logit_ce(c1 - c2, t);
}

PairLoss rank_loss_margin(double c1, double c2, double c_gt_1, double c_gt_2) {
  const int y = pair_label(c_gt_1, c_gt_2);
  const double t = 1.0 - static_cast<double>(y);
  const double m = std::abs(c_gt_1 - c_gt_2);
  const double s = (t == 1.0) ? 1.0 : -1.0;
  return logit_ce((c1 - c2) - m * s, t);
}

PairSet select_pairs(std::span<const double> sorted_confidences, int n) {
  if (n < 1) throw std::invalid_argument("select_pairs: n must be positive");
  for (std::size_t i = 1; i < sorted_confidences.size(); ++i) {
    if (sorted_confidences[i] > sorted_confidences[i - 1]) {
      throw std::invalid_argument("select_pairs: confidences not sorted descending");
    }
  }
  PairSet out;
  out.n = n;
  const std::size_t len = sorted_confidences.size();
  for (int k = 1; k <= n; ++k) {
    if (static_cast<std::size_t>(k) >= len) break;
    for (std::size_t i = 0; i + k < len; ++i) {
      out.pairs.push_back(PairEntry{i, i + static_cast<std::size_t>(k), k});
    }
  }
  return out;
}

VectorLoss ranked_pair_loss(std::span<const double> refined,
                            std::span<const double> oracle, int n,
                            RankLossKind kind) {
  if (n < 1) throw std::invalid_argument("ranked_pair_loss: n must be positive");
  if (refined.size() != oracle.size()) {
    throw std::invalid_argument("ranked_pair_loss: size mismatch");
  }
  VectorLoss out;
  out.grad.assign(refined.size(), 0.0);
  const std::size_t len = refined.size();
  if (len < 2) return out;

  // Skip level k contributes its pair mean weighted by 1/k, so the neighbor
  // level keeps full weight and n=1 reduces to the plain neighbor loss.
  for (int k = 1; k <= n; ++k) {
    const std::size_t sk = static_cast<std::size_t>(k);
    if (sk >= len) break;
    const std::size_t count = len - sk;
    const double scale = 1.0 / (static_cast<double>(count) * static_cast<double>(k));
    double level_sum = 0.0;
    for (std::size_t i = 0; i + sk < len; ++i) {
      const std::size_t j = i + sk;
      PairLoss pl;
      if (kind == RankLossKind::kMarginRescaled) {
        pl = rank_loss_margin(refined[i], refined[j], oracle[i], oracle[j]);
      } else {
        pl = rank_loss(refined[i], refined[j], pair_label(oracle[i], oracle[j]));
      }
      level_sum += pl.value;
      out.grad[i] += pl.d_c1 * scale;
      out.grad[j] += pl.d_c2 * scale;
    }
    out.value += level_sum * scale;
  }
  return out;
}

VectorLoss image_rank_loss(const DetectionSet& ds, int n, RankLossKind kind) {
  const std::size_t len = ds.detections.size();
  for (const auto& d : ds.detections) {
    if (!d.oracle || !d.refined) {
      throw std::invalid_argument("image_rank_loss: oracle and refined must be present");
    }
  }
  // Pairs are fixed by the raw detector confidence order so the pair set
  // does not drift as refined confidences move during training.
  const auto order = sorted_indices_desc(ds, ScoreField::kRaw);
  std::vector<double> refined(len), oracle(len);
  for (std::size_t r = 0; r < len; ++r) {
    refined[r] = *ds.detections[order[r]].refined;
    oracle[r] = *ds.detections[order[r]].oracle;
  }
  const VectorLoss sorted_loss = ranked_pair_loss(refined, oracle, n, kind);
  VectorLoss out;
  out.value = sorted_loss.value;
  out.grad.assign(len, 0.0);
  for (std::size_t r = 0; r < len; ++r) {
    out.grad[order[r]] = sorted_loss.grad[r];
  }
  return out;
}

ScalarLoss regression_loss(RegressionKind kind, double r, double o) {
  ScalarLoss out;
  switch (kind) {
    case RegressionKind::kL1: {
      const double d = r - o;
      out.value = std::abs(d);
      out.d_refined = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      return out;
    }
    case RegressionKind::kL2: {
      const double d = r - o;
      out.value = d * d;
      out.d_refined = 2.0 * d;
      return out;
    }
    case RegressionKind::kSmoothL1: {
      const double d = r - o;
      const double a = std::abs(d);
      if (a < 1.0) {
        out.value = 0.5 * d * d;
        out.d_refined = d;
      } else {
        out.value = a - 0.5;
        out.d_refined = d > 0.0 ? 1.0 : -1.0;
      }
      return out;
    }
    case RegressionKind::kCrossEntropy: {
      if (r < 0.0 || r > 1.0 || o < 0.0 || o > 1.0) {
        throw std::invalid_argument("regression_loss: cross entropy inputs must be in [0,1]");
      }
      const double rc = std::clamp(r, kCrossEntropyEps, 1.0 - kCrossEntropyEps);
      out.value = -o * std::log(rc) - (1.0 - o) * std::log(1.0 - rc);
      // Zero gradient where the clamp is active: the clamped loss is flat there.
      if (r > kCrossEntropyEps && r < 1.0 - kCrossEntropyEps) {
        out.d_refined = (rc - o) / (rc * (1.0 - rc));
      }
      return out;
    }
  }
  throw std::invalid_argument("regression_loss: unknown kind");
}

VectorLoss vector_regression_loss(RegressionKind kind, std::span<const double> refined,
                                  std::span<const double> oracle) {
  if (refined.size() != oracle.size()) {
    throw std::invalid_argument("vector_regression_loss: size mismatch");
  }
  VectorLoss out;
  out.grad.assign(refined.size(), 0.0);
  if (refined.empty()) return out;
  const double inv = 1.0 / static_cast<double>(refined.size());
  for (std::size_t i = 0; i < refined.size(); ++i) {
    const ScalarLoss sl = regression_loss(kind, refined[i], oracle[i]);
    out.value += sl.value * inv;
    out.grad[i] = sl.d_refined * inv;
  }
  return out;
}

const char* regression_kind_name(RegressionKind kind) {
  switch (kind) {
    case RegressionKind::kL1: return "l1";
    case RegressionKind::kL2: return "l2";
    case RegressionKind::kSmoothL1: return "smooth_l1";
    case RegressionKind::kCrossEntropy: return "cross_entropy";
  }
  return "?";
}

}  // namespace crank
