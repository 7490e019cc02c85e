#include "crank/train.hpp"

#include <cmath>
#include <stdexcept>

#include "crank/augment.hpp"
#include "crank/kernels.hpp"
#include "crank/oracle.hpp"
#include "crank/rng.hpp"

namespace crank {

const char* loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::kRank: return "rank";
    case LossKind::kMarginRank: return "margin_rank";
    case LossKind::kL1: return "l1";
    case LossKind::kL2: return "l2";
    case LossKind::kSmoothL1: return "smooth_l1";
    case LossKind::kCrossEntropy: return "cross_entropy";
  }
  return "?";
}

double learning_rate_at(const TrainSchedule& s, int iteration) {
  if (s.iterations <= 0) return s.lr_start;
  const double frac = static_cast<double>(iteration) / static_cast<double>(s.iterations);
  return s.lr_start * std::pow(s.lr_end / s.lr_start, frac);
}

namespace {

struct AdamState {
  std::vector<std::vector<double>> m, v;
  int t = 0;
};

VectorLoss image_loss(const TrainSchedule& s, std::span<const double> refined,
                      std::span<const double> oracle) {
  switch (s.loss) {
    case LossKind::kRank:
      return ranked_pair_loss(refined, oracle, s.pair_n, RankLossKind::kPlain);
    case LossKind::kMarginRank:
      return ranked_pair_loss(refined, oracle, s.pair_n, RankLossKind::kMarginRescaled);
    case LossKind::kL1:
      return vector_regression_loss(RegressionKind::kL1, refined, oracle);
    case LossKind::kL2:
      return vector_regression_loss(RegressionKind::kL2, refined, oracle);
    case LossKind::kSmoothL1:
      return vector_regression_loss(RegressionKind::kSmoothL1, refined, oracle);
    case LossKind::kCrossEntropy:
      return vector_regression_loss(RegressionKind::kCrossEntropy, refined, oracle);
  }
  throw std::invalid_argument("train: unknown loss kind");
}

BoxTransform sample_transform(Rng& rng, double w, double h) {
  BoxTransform t;
  const double fw = rng.uniform(0.7, 1.0);
  const double fh = rng.uniform(0.7, 1.0);
  const double cw = w * fw;
  const double ch = h * fh;
  t.crop = BoundingBox(rng.uniform(0.0, w - cw), rng.uniform(0.0, h - ch), cw, ch);
  t.scale = rng.uniform(0.8, 1.25);
  t.mirror = rng.bernoulli(0.5);
  return t;
}

}  // namespace

TrainResult train(RankerNetwork& net, const std::vector<TrainExample>& dataset,
                  const TrainSchedule& schedule) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (schedule.batch_size < 1) throw std::invalid_argument("train: batch_size must be positive");
  if (schedule.augment && !schedule.render) {
    throw std::invalid_argument("train: augmentation requires a render callback");
  }
  for (const auto& ex : dataset) {
    if (ex.variants.empty()) throw std::invalid_argument("train: example without detections");
    for (const auto& v : ex.variants) {
      for (const auto& d : v.detections) {
        if (!d.oracle) throw std::invalid_argument("train: detection without oracle confidence");
      }
    }
  }

  const auto& cfg = net.config;
  const auto& ops = kern::active_ops();
  auto param_refs = parameters(net);
  AdamState adam;
  adam.m.resize(param_refs.size());
  adam.v.resize(param_refs.size());
  for (std::size_t i = 0; i < param_refs.size(); ++i) {
    adam.m[i].assign(param_refs[i].tensor->numel(), 0.0);
    adam.v[i].assign(param_refs[i].tensor->numel(), 0.0);
  }

  Rng rng(schedule.seed);
  TrainResult result;

  for (int iter = 0; iter < schedule.iterations; ++iter) {
    Gradients acc = zero_gradients(cfg);
    double batch_loss = 0.0;

    for (int b = 0; b < schedule.batch_size; ++b) {
      const auto& ex = dataset[rng.uniform_int(dataset.size())];
      const auto& variant = ex.variants[rng.uniform_int(ex.variants.size())];

      const DetectionSet* ds = &variant;
      const Tensor* features = &ex.features;
      DetectionSet aug_ds;
      Tensor aug_features;
      if (schedule.augment) {
        const BoxTransform t = sample_transform(rng, variant.image_width, variant.image_height);
        auto [tds, tgt] = augment_boxes(variant, ex.gt, t);
        aug_ds = assign_oracle(tds, tgt);
        aug_features = schedule.render(tgt);
        ds = &aug_ds;
        features = &aug_features;
      }

      const BoxMatrix bm = build_box_matrix(*ds, cfg.capacity_n);
      ForwardResult fr = forward(net, *features, bm.matrix, bm.raw_conf);

      const std::span<const double> refined_rows(fr.refined.data(),
                                                 static_cast<std::size_t>(bm.count));
      const std::span<const double> oracle_rows(bm.oracle.data(),
                                                static_cast<std::size_t>(bm.count));
      const VectorLoss vl = image_loss(schedule, refined_rows, oracle_rows);
      batch_loss += vl.value;

      std::vector<double> d_refined(static_cast<std::size_t>(cfg.capacity_n), 0.0);
      for (int r = 0; r < bm.count; ++r) {
        d_refined[static_cast<std::size_t>(r)] = vl.grad[static_cast<std::size_t>(r)];
      }
      Gradients g = backward(net, fr.trace, d_refined);

      auto acc_refs = parameters(acc, cfg);
      auto g_refs = parameters(g, cfg);
      for (std::size_t i = 0; i < acc_refs.size(); ++i) {
        ops.add_inplace(acc_refs[i].tensor->ptr(), g_refs[i].tensor->ptr(),
                        g_refs[i].tensor->numel());
      }
    }

    const double inv_batch = 1.0 / static_cast<double>(schedule.batch_size);
    auto acc_refs = parameters(acc, cfg);
    for (auto& r : acc_refs) {
      for (double& v : r.tensor->data) v *= inv_batch;
    }

    ++adam.t;
    kern::AdamParams ap;
    ap.lr = learning_rate_at(schedule, iter);
    ap.bias1 = 1.0 - std::pow(ap.beta1, adam.t);
    ap.bias2 = 1.0 - std::pow(ap.beta2, adam.t);
    for (std::size_t i = 0; i < param_refs.size(); ++i) {
      ops.adam_step(param_refs[i].tensor->ptr(), acc_refs[i].tensor->ptr(),
                    adam.m[i].data(), adam.v[i].data(),
                    param_refs[i].tensor->numel(), ap);
    }
    ++net.version;

    if (schedule.log_every > 0 &&
        (iter % schedule.log_every == 0 || iter + 1 == schedule.iterations)) {
      result.loss_history.emplace_back(iter, batch_loss * inv_batch);
    }
  }
  return result;
}

DetectionSet apply_ranker(const RankerNetwork& net, const Tensor& features,
                          const DetectionSet& ds) {
  const BoxMatrix bm = build_box_matrix(ds, net.config.capacity_n);
  const ForwardResult fr = forward(net, features, bm.matrix, bm.raw_conf);
  DetectionSet out = ds;
  for (auto& d : out.detections) d.refined = d.confidence;
  for (int r = 0; r < bm.count; ++r) {
    out.detections[bm.row_to_detection[static_cast<std::size_t>(r)]].refined =
        fr.refined[static_cast<std::size_t>(r)];
  }
  return out;
}

}  // namespace crank
