#include "crank/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace crank {

using json = nlohmann::ordered_json;

namespace {

template <typename T>
void pull(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void check_known_keys(const json& j, std::initializer_list<const char*> known,
                      const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* k : known) {
      if (key == k) { ok = true; break; }
    }
    if (!ok) throw std::runtime_error(where + ": unknown key '" + key + "'");
  }
}

json ranker_to_json(const RankerConfig& c) {
  json j;
  j["capacity_n"] = c.capacity_n;
  j["bpn_channels"] = c.bpn_channels;
  j["bpn_depth"] = c.bpn_depth;
  j["interleave"] = c.interleave;
  j["scales"] = c.scales;
  j["fpn_channels"] = c.fpn_channels;
  j["backbone_channels"] = c.backbone_channels;
  j["image_size"] = c.image_size;
  j["leaky_alpha"] = c.leaky_alpha;
  return j;
}

void ranker_from_json(const json& j, RankerConfig& c, const std::string& where) {
  check_known_keys(j,
                   {"capacity_n", "bpn_channels", "bpn_depth", "interleave", "scales",
                    "fpn_channels", "backbone_channels", "image_size", "leaky_alpha"},
                   where);
  pull(j, "capacity_n", c.capacity_n);
  pull(j, "bpn_channels", c.bpn_channels);
  pull(j, "bpn_depth", c.bpn_depth);
  pull(j, "interleave", c.interleave);
  pull(j, "scales", c.scales);
  pull(j, "fpn_channels", c.fpn_channels);
  pull(j, "backbone_channels", c.backbone_channels);
  pull(j, "image_size", c.image_size);
  pull(j, "leaky_alpha", c.leaky_alpha);
}

json scene_to_json(const SceneSpec& s) {
  json j;
  j["frame_width"] = s.frame_width;
  j["frame_height"] = s.frame_height;
  j["min_boxes"] = s.min_boxes;
  j["max_boxes"] = s.max_boxes;
  j["min_height"] = s.min_height;
  j["max_height"] = s.max_height;
  j["min_aspect"] = s.min_aspect;
  j["max_aspect"] = s.max_aspect;
  j["max_gt_overlap"] = s.max_gt_overlap;
  j["feature_size"] = s.feature_size;
  return j;
}

void scene_from_json(const json& j, SceneSpec& s, const std::string& where) {
  check_known_keys(j,
                   {"frame_width", "frame_height", "min_boxes", "max_boxes", "min_height",
                    "max_height", "min_aspect", "max_aspect", "max_gt_overlap",
                    "feature_size"},
                   where);
  pull(j, "frame_width", s.frame_width);
  pull(j, "frame_height", s.frame_height);
  pull(j, "min_boxes", s.min_boxes);
  pull(j, "max_boxes", s.max_boxes);
  pull(j, "min_height", s.min_height);
  pull(j, "max_height", s.max_height);
  pull(j, "min_aspect", s.min_aspect);
  pull(j, "max_aspect", s.max_aspect);
  pull(j, "max_gt_overlap", s.max_gt_overlap);
  pull(j, "feature_size", s.feature_size);
}

json personality_to_json(const DetectorPersonality& p) {
  json j;
  j["name"] = p.name;
  j["loc_noise"] = p.loc_noise;
  j["duplicates"] = p.duplicates;
  j["fp_rate"] = p.fp_rate;
  j["conf_intercept"] = p.conf_intercept;
  j["conf_slope"] = p.conf_slope;
  j["conf_noise"] = p.conf_noise;
  j["inversion_prob"] = p.inversion_prob;
  return j;
}

void personality_from_json(const json& j, DetectorPersonality& p, const std::string& where) {
  check_known_keys(j,
                   {"name", "loc_noise", "duplicates", "fp_rate", "conf_intercept",
                    "conf_slope", "conf_noise", "inversion_prob"},
                   where);
  pull(j, "name", p.name);
  pull(j, "loc_noise", p.loc_noise);
  pull(j, "duplicates", p.duplicates);
  pull(j, "fp_rate", p.fp_rate);
  pull(j, "conf_intercept", p.conf_intercept);
  pull(j, "conf_slope", p.conf_slope);
  pull(j, "conf_noise", p.conf_noise);
  pull(j, "inversion_prob", p.inversion_prob);
}

}  // namespace

TrainSchedule RunConfig::schedule() const {
  TrainSchedule s;
  s.batch_size = batch_size;
  s.iterations = iterations;
  s.lr_start = lr_start;
  s.lr_end = lr_end;
  s.seed = seed;
  s.log_every = log_every;
  s.loss = loss_kind();
  s.pair_n = pair_n;
  s.augment = augment;
  return s;
}

LossKind RunConfig::loss_kind() const {
  if (loss == "rank") return LossKind::kRank;
  if (loss == "margin_rank") return LossKind::kMarginRank;
  if (loss == "l1") return LossKind::kL1;
  if (loss == "l2") return LossKind::kL2;
  if (loss == "smooth_l1") return LossKind::kSmoothL1;
  if (loss == "cross_entropy") return LossKind::kCrossEntropy;
  throw std::runtime_error("unknown loss '" + loss + "'");
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["capacity_n"] = cfg.capacity_n;
  j["pair_n"] = cfg.pair_n;
  j["nms_iou"] = cfg.nms_iou;
  j["voting_iou"] = cfg.voting_iou;
  j["fusion_scales"] = cfg.fusion_scales;
  j["fusion_flip"] = cfg.fusion_flip;
  j["match_iou"] = cfg.match_iou;
  j["batch_size"] = cfg.batch_size;
  j["iterations"] = cfg.iterations;
  j["lr_start"] = cfg.lr_start;
  j["lr_end"] = cfg.lr_end;
  j["seed"] = cfg.seed;
  j["log_every"] = cfg.log_every;
  j["loss"] = cfg.loss;
  j["augment"] = cfg.augment;
  j["ranker"] = ranker_to_json(cfg.ranker);
  j["scene"] = scene_to_json(cfg.scene);
  json ps = json::array();
  for (const auto& p : cfg.personalities) ps.push_back(personality_to_json(p));
  j["personalities"] = ps;
  j["corpus_images"] = cfg.corpus_images;
  j["val_fraction"] = cfg.val_fraction;
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(origin + ": " + e.what());
  }
  check_known_keys(j,
                   {"capacity_n", "pair_n", "nms_iou", "voting_iou", "fusion_scales",
                    "fusion_flip", "match_iou", "batch_size", "iterations", "lr_start",
                    "lr_end", "seed", "log_every", "loss", "augment", "ranker", "scene",
                    "personalities", "corpus_images", "val_fraction"},
                   origin);
  RunConfig cfg;
  pull(j, "capacity_n", cfg.capacity_n);
  pull(j, "pair_n", cfg.pair_n);
  pull(j, "nms_iou", cfg.nms_iou);
  pull(j, "voting_iou", cfg.voting_iou);
  pull(j, "fusion_scales", cfg.fusion_scales);
  pull(j, "fusion_flip", cfg.fusion_flip);
  pull(j, "match_iou", cfg.match_iou);
  pull(j, "batch_size", cfg.batch_size);
  pull(j, "iterations", cfg.iterations);
  pull(j, "lr_start", cfg.lr_start);
  pull(j, "lr_end", cfg.lr_end);
  pull(j, "seed", cfg.seed);
  pull(j, "log_every", cfg.log_every);
  pull(j, "loss", cfg.loss);
  pull(j, "augment", cfg.augment);
  if (j.contains("ranker")) ranker_from_json(j.at("ranker"), cfg.ranker, origin + ": ranker");
  if (j.contains("scene")) scene_from_json(j.at("scene"), cfg.scene, origin + ": scene");
  if (j.contains("personalities")) {
    cfg.personalities.clear();
    for (const auto& pj : j.at("personalities")) {
      DetectorPersonality p;
      personality_from_json(pj, p, origin + ": personality");
      cfg.personalities.push_back(p);
    }
  }
  pull(j, "corpus_images", cfg.corpus_images);
  pull(j, "val_fraction", cfg.val_fraction);
  // The run-level capacity is authoritative unless the ranker block set its
  // own value explicitly.
  if (!(j.contains("ranker") && j.at("ranker").contains("capacity_n"))) {
    cfg.ranker.capacity_n = cfg.capacity_n;
  } else {
    cfg.capacity_n = cfg.ranker.capacity_n;
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return run_config_from_json(ss.str(), path);
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << run_config_to_json(cfg);
  if (!os) throw std::runtime_error("write failed for " + path);
}

RunConfig desk_config() {
  RunConfig cfg;
  cfg.capacity_n = 64;
  cfg.ranker.capacity_n = 64;
  cfg.batch_size = 16;
  cfg.iterations = 400;
  cfg.lr_start = 1e-3;
  cfg.lr_end = 3e-5;
  cfg.seed = 1234;
  cfg.log_every = 20;
  cfg.corpus_images = 100;
  return cfg;
}

}  // namespace crank
