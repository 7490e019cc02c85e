#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crank/net.hpp"
#include "crank/synth.hpp"
#include "crank/train.hpp"

namespace crank {

// Everything a run needs, loadable from a single JSON file with flag
// overrides on top. Defaults mirror the full-scale configuration
// (N = 5000, batch 32, 100K iterations, lr 1e-3 -> 1e-6, 10 pairs,
// NMS IoU 0.4); desk_config() is the small preset the bundled experiments
// and tests use.
struct RunConfig {
  int capacity_n = 5000;
  int pair_n = 10;
  double nms_iou = 0.4;
  double voting_iou = 0.4;
  std::vector<double> fusion_scales = {500, 800, 1100, 1400, 1700};
  bool fusion_flip = true;
  double match_iou = 0.5;

  int batch_size = 32;
  int iterations = 100000;
  double lr_start = 1e-3;
  double lr_end = 1e-6;
  std::uint64_t seed = 0;
  int log_every = 50;
  std::string loss = "rank";
  bool augment = false;

  RankerConfig ranker;       // capacity_n is kept in sync on load
  SceneSpec scene;
  std::vector<DetectorPersonality> personalities = default_personalities();
  int corpus_images = 100;
  double val_fraction = 0.2;

  RunConfig() { ranker.capacity_n = capacity_n; }

  TrainSchedule schedule() const;
  LossKind loss_kind() const;  // throws on an unknown loss name
};

// Partial JSON: absent keys keep their defaults. Unknown keys are an error.
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text, const std::string& origin);

// The frozen desk-scale preset: 64-box capacity, 100-image default corpus,
// and a training budget that fits a laptop CPU.
RunConfig desk_config();

}  // namespace crank
