#include "crank/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "crank/checkpoint.hpp"
#include "crank/formats.hpp"
#include "crank/oracle.hpp"
#include "crank/suppression.hpp"

namespace crank {

namespace fs = std::filesystem;

EvalSet corpus_eval_units(const SyntheticCorpus& corpus,
                          std::span<const std::size_t> indices) {
  EvalSet out;
  for (std::size_t idx : indices) {
    const CorpusImage& img = corpus.images[idx];
    for (std::size_t p = 0; p < img.variants.size(); ++p) {
      DetectionSet ds = img.variants[p];
      GroundTruthImage gt = img.gt;
      const std::string unit_id = img.gt.image_id + "#" + std::to_string(p);
      ds.image_id = unit_id;
      gt.image_id = unit_id;
      out.dets.push_back(std::move(ds));
      out.gts.push_back(std::move(gt));
    }
  }
  return out;
}

ApReport evaluate_sets(const EvalSet& set, ScoreField field, const RunConfig& cfg,
                       bool with_nms) {
  std::vector<DetectionSet> dets;
  dets.reserve(set.dets.size());
  for (const auto& ds : set.dets) {
    dets.push_back(with_nms ? nms(ds, field, cfg.nms_iou) : ds);
  }
  return bucketed_ap(dets, set.gts, field, cfg.match_iou);
}

double mean_kendall_tau_vs_oracle(const EvalSet& set, ScoreField field) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& ds : set.dets) {
    if (ds.detections.size() < 2) continue;
    std::vector<double> scores, oracles;
    for (const auto& d : ds.detections) {
      scores.push_back(score_of(d, field));
      oracles.push_back(score_of(d, ScoreField::kOracle));
    }
    sum += kendall_tau(scores, oracles);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

std::vector<TrainExample> corpus_train_examples(const SyntheticCorpus& corpus,
                                                std::span<const std::size_t> indices) {
  std::vector<TrainExample> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    const CorpusImage& img = corpus.images[idx];
    TrainExample ex;
    ex.features = img.features;
    ex.gt = img.gt;
    ex.variants = img.variants;
    out.push_back(std::move(ex));
  }
  return out;
}

EvalSet rescore_with_ranker(const RankerNetwork& net, const SyntheticCorpus& corpus,
                            std::span<const std::size_t> indices) {
  EvalSet out;
  for (std::size_t idx : indices) {
    const CorpusImage& img = corpus.images[idx];
    for (std::size_t p = 0; p < img.variants.size(); ++p) {
      DetectionSet ds = apply_ranker(net, img.features, img.variants[p]);
      GroundTruthImage gt = img.gt;
      const std::string unit_id = img.gt.image_id + "#" + std::to_string(p);
      ds.image_id = unit_id;
      gt.image_id = unit_id;
      out.dets.push_back(std::move(ds));
      out.gts.push_back(std::move(gt));
    }
  }
  return out;
}

EvalSet rescore_with_oracle(const EvalSet& set) {
  EvalSet out;
  out.gts = set.gts;
  for (std::size_t i = 0; i < set.dets.size(); ++i) {
    out.dets.push_back(oracle_rescore(set.dets[i], set.gts[i]));
  }
  return out;
}

namespace {

double report_value(const std::optional<double>& v) { return v ? *v : -1.0; }

std::string format_report_line(const char* bucket, const std::optional<double>& v) {
  char buf[64];
  if (v) {
    std::snprintf(buf, sizeof(buf), "%s %.6f\n", bucket, *v);
  } else {
    std::snprintf(buf, sizeof(buf), "%s absent\n", bucket);
  }
  return buf;
}

AblationRow evaluate_trained(const std::string& name, const SyntheticCorpus& corpus,
                             const RunConfig& cfg, const TrainSchedule& schedule) {
  RankerNetwork net = init_network(cfg.ranker, cfg.seed);
  const auto examples = corpus_train_examples(corpus, corpus.train_indices);
  train(net, examples, schedule);
  const EvalSet refined = rescore_with_ranker(net, corpus, corpus.val_indices);
  AblationRow row;
  row.name = name;
  row.report = evaluate_sets(refined, ScoreField::kRefined, cfg);
  row.tau = mean_kendall_tau_vs_oracle(refined, ScoreField::kRefined);
  return row;
}

}  // namespace

std::vector<AblationRow> run_loss_ablation(const SyntheticCorpus& corpus,
                                           const RunConfig& cfg) {
  std::vector<AblationRow> rows;
  const std::vector<LossKind> kinds = {LossKind::kRank, LossKind::kL1, LossKind::kL2,
                                       LossKind::kSmoothL1, LossKind::kCrossEntropy};
  for (LossKind kind : kinds) {
    TrainSchedule s = cfg.schedule();
    s.loss = kind;
    rows.push_back(evaluate_trained(loss_kind_name(kind), corpus, cfg, s));
  }
  return rows;
}

std::vector<AblationRow> run_pair_ablation(const SyntheticCorpus& corpus,
                                           const RunConfig& cfg,
                                           std::span<const int> pair_grid) {
  std::vector<AblationRow> rows;
  for (int n : pair_grid) {
    TrainSchedule s = cfg.schedule();
    s.loss = LossKind::kRank;
    s.pair_n = n;
    rows.push_back(evaluate_trained("n=" + std::to_string(n), corpus, cfg, s));
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows,
                           const std::string& label_header) {
  std::string out = label_header + " ap_easy ap_medium ap_hard tau\n";
  char buf[192];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s %.6f %.6f %.6f %.6f\n", r.name.c_str(),
                  report_value(r.report.ap_easy), report_value(r.report.ap_medium),
                  report_value(r.report.ap_hard), r.tau);
    out += buf;
  }
  return out;
}

// --- file-level subcommands ------------------------------------------------

void cmd_synth(const std::string& out_dir, const RunConfig& cfg) {
  const SyntheticCorpus corpus = build_corpus(cfg.corpus_images, cfg.scene,
                                              cfg.personalities, cfg.seed,
                                              cfg.val_fraction);
  fs::create_directories(out_dir);

  std::vector<GroundTruthImage> gts;
  std::vector<std::pair<std::string, Tensor>> features;
  for (const auto& img : corpus.images) {
    gts.push_back(img.gt);
    features.emplace_back(img.gt.image_id, img.features);
  }
  write_annotations((fs::path(out_dir) / "annotations.txt").string(), gts);
  write_features((fs::path(out_dir) / "features.bin").string(), features);

  for (std::size_t p = 0; p < cfg.personalities.size(); ++p) {
    std::vector<DetectionSet> dumps;
    for (const auto& img : corpus.images) dumps.push_back(img.variants[p]);
    char name[128];
    std::snprintf(name, sizeof(name), "detections_%zu_%s.txt", p,
                  cfg.personalities[p].name.c_str());
    write_detections((fs::path(out_dir) / name).string(), dumps, ScoreField::kRaw);
  }

  std::ofstream meta((fs::path(out_dir) / "meta.json").string());
  if (!meta) throw std::runtime_error("cannot write meta.json in " + out_dir);
  meta << run_config_to_json(cfg);
}

RunConfig load_corpus_config(const std::string& dir) {
  return load_run_config((fs::path(dir) / "meta.json").string());
}

SyntheticCorpus load_corpus_dir(const std::string& dir) {
  const RunConfig cfg = load_corpus_config(dir);
  SyntheticCorpus corpus;
  corpus.spec = cfg.scene;
  corpus.personalities = cfg.personalities;

  const auto gts = parse_annotations((fs::path(dir) / "annotations.txt").string(),
                                     cfg.scene.frame_width, cfg.scene.frame_height);
  auto features = read_features((fs::path(dir) / "features.bin").string());
  if (features.size() != gts.size()) {
    throw std::runtime_error("corpus: feature/annotation image count mismatch in " + dir);
  }
  std::map<std::string, const Tensor*> feature_by_id;
  for (const auto& [id, t] : features) feature_by_id[id] = &t;

  std::vector<std::vector<DetectionSet>> dumps;
  for (std::size_t p = 0; p < cfg.personalities.size(); ++p) {
    char name[128];
    std::snprintf(name, sizeof(name), "detections_%zu_%s.txt", p,
                  cfg.personalities[p].name.c_str());
    dumps.push_back(parse_detections((fs::path(dir) / name).string(),
                                     cfg.scene.frame_width, cfg.scene.frame_height));
    if (dumps.back().size() != gts.size()) {
      throw std::runtime_error(std::string("corpus: image count mismatch in ") + name);
    }
  }

  for (std::size_t i = 0; i < gts.size(); ++i) {
    CorpusImage img;
    img.gt = gts[i];
    const auto it = feature_by_id.find(gts[i].image_id);
    if (it == feature_by_id.end()) {
      throw std::runtime_error("corpus: missing features for " + gts[i].image_id);
    }
    img.features = *it->second;
    for (auto& dump : dumps) {
      if (dump[i].image_id != gts[i].image_id) {
        throw std::runtime_error("corpus: image order mismatch at " + gts[i].image_id);
      }
      img.variants.push_back(assign_oracle(dump[i], gts[i]));
    }
    corpus.images.push_back(std::move(img));
  }

  const int n = static_cast<int>(corpus.images.size());
  const int n_val = static_cast<int>(std::lround(n * cfg.val_fraction));
  for (int i = 0; i < n - n_val; ++i) corpus.train_indices.push_back(static_cast<std::size_t>(i));
  for (int i = n - n_val; i < n; ++i) corpus.val_indices.push_back(static_cast<std::size_t>(i));
  return corpus;
}

std::vector<std::size_t> split_indices(const SyntheticCorpus& corpus,
                                       const std::string& split) {
  if (split == "train") return corpus.train_indices;
  if (split == "val") return corpus.val_indices;
  if (split == "all") {
    std::vector<std::size_t> all;
    for (std::size_t i = 0; i < corpus.images.size(); ++i) all.push_back(i);
    return all;
  }
  throw std::runtime_error("unknown split '" + split + "' (expected train|val|all)");
}

OracleEvalResult cmd_oracle_eval(const std::string& corpus_dir, const std::string& split,
                                 const std::string& out_path) {
  const SyntheticCorpus corpus = load_corpus_dir(corpus_dir);
  const RunConfig cfg = load_corpus_config(corpus_dir);
  const auto indices = split_indices(corpus, split);
  const EvalSet units = corpus_eval_units(corpus, indices);

  OracleEvalResult result;
  result.raw = evaluate_sets(units, ScoreField::kRaw, cfg);
  const EvalSet oracle_units = rescore_with_oracle(units);
  result.oracle = evaluate_sets(oracle_units, ScoreField::kRefined, cfg);

  std::string text = "bucket ap_raw ap_oracle\n";
  char buf[96];
  auto fmt = [&buf](const std::optional<double>& v) {
    if (!v) return std::string("absent");
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return std::string(buf);
  };
  text += "easy " + fmt(result.raw.ap_easy) + " " + fmt(result.oracle.ap_easy) + "\n";
  text += "medium " + fmt(result.raw.ap_medium) + " " + fmt(result.oracle.ap_medium) + "\n";
  text += "hard " + fmt(result.raw.ap_hard) + " " + fmt(result.oracle.ap_hard) + "\n";

  if (!out_path.empty()) {
    std::ofstream os(out_path);
    if (!os) throw std::runtime_error("cannot open " + out_path + " for writing");
    os << text;
  }
  std::fputs(text.c_str(), stdout);
  return result;
}

void cmd_train(const std::string& corpus_dir, const RunConfig& cfg,
               const std::string& checkpoint_path, const std::string& history_path) {
  const SyntheticCorpus corpus = load_corpus_dir(corpus_dir);
  const auto examples = corpus_train_examples(corpus, corpus.train_indices);

  RankerNetwork net = init_network(cfg.ranker, cfg.seed);
  TrainSchedule schedule = cfg.schedule();
  if (schedule.augment) {
    const int sz = cfg.ranker.image_size;
    schedule.render = [sz](const GroundTruthImage& gt) { return render_features(gt, sz); };
  }
  const TrainResult result = train(net, examples, schedule);
  save_checkpoint(net, checkpoint_path);

  if (!history_path.empty()) {
    std::ofstream os(history_path);
    if (!os) throw std::runtime_error("cannot open " + history_path + " for writing");
    char buf[64];
    for (const auto& [iter, loss] : result.loss_history) {
      std::snprintf(buf, sizeof(buf), "%d %.6f\n", iter, loss);
      os << buf;
    }
  }
}

void cmd_rerank(const std::string& checkpoint_path, const std::string& detections_path,
                const std::string& features_path, const std::string& out_path,
                double frame_width, double frame_height) {
  const RankerNetwork net = load_checkpoint(checkpoint_path);
  const auto dumps = parse_detections(detections_path, frame_width, frame_height);
  const auto features = read_features(features_path);
  std::map<std::string, const Tensor*> feature_by_id;
  for (const auto& [id, t] : features) feature_by_id[id] = &t;

  std::vector<DetectionSet> out;
  out.reserve(dumps.size());
  for (const auto& ds : dumps) {
    const auto it = feature_by_id.find(ds.image_id);
    if (it == feature_by_id.end()) {
      throw std::runtime_error("rerank: missing features for " + ds.image_id);
    }
    out.push_back(apply_ranker(net, *it->second, ds));
  }
  write_detections(out_path, out, ScoreField::kRefined);
}

EvalCmdResult cmd_eval(const std::string& detections_path,
                       const std::string& annotations_path, const std::string& out_dir,
                       double frame_width, double frame_height, const RunConfig& cfg,
                       bool with_nms) {
  const auto gts = parse_annotations(annotations_path, frame_width, frame_height);
  const auto dumps = parse_detections(detections_path, frame_width, frame_height);
  std::map<std::string, const DetectionSet*> by_id;
  for (const auto& ds : dumps) by_id[ds.image_id] = &ds;

  EvalSet set;
  for (const auto& gt : gts) {
    const auto it = by_id.find(gt.image_id);
    if (it != by_id.end()) {
      set.dets.push_back(*it->second);
    } else {
      DetectionSet empty;
      empty.image_id = gt.image_id;
      empty.image_width = frame_width;
      empty.image_height = frame_height;
      set.dets.push_back(std::move(empty));
    }
    set.gts.push_back(gt);
  }

  EvalCmdResult result;
  result.report = evaluate_sets(set, ScoreField::kRaw, cfg, with_nms);

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream os((fs::path(out_dir) / "report.txt").string());
    if (!os) throw std::runtime_error("cannot write report.txt in " + out_dir);
    os << format_report_line("ap_easy", result.report.ap_easy);
    os << format_report_line("ap_medium", result.report.ap_medium);
    os << format_report_line("ap_hard", result.report.ap_hard);
    auto dump_curve = [&](const char* name, const PRCurve& curve,
                          const std::optional<double>& present) {
      if (!present) return;
      std::ofstream cs((fs::path(out_dir) / name).string());
      if (!cs) throw std::runtime_error(std::string("cannot write ") + name);
      cs << pr_curve_to_text(curve);
    };
    dump_curve("pr_easy.txt", result.report.curve_easy, result.report.ap_easy);
    dump_curve("pr_medium.txt", result.report.curve_medium, result.report.ap_medium);
    dump_curve("pr_hard.txt", result.report.curve_hard, result.report.ap_hard);
  }

  std::string text = format_report_line("ap_easy", result.report.ap_easy) +
                     format_report_line("ap_medium", result.report.ap_medium) +
                     format_report_line("ap_hard", result.report.ap_hard);
  std::fputs(text.c_str(), stdout);
  return result;
}

void cmd_fuse(const std::vector<std::string>& input_paths, const std::string& out_path,
              const RunConfig& cfg) {
  if (input_paths.empty()) throw std::runtime_error("fuse: no input files");
  // Fusion is frame-agnostic: boxes stay in their original coordinates.
  std::vector<std::vector<DetectionSet>> per_file;
  per_file.reserve(input_paths.size());
  for (const auto& p : input_paths) per_file.push_back(parse_detections(p, 1.0, 1.0));

  std::vector<std::string> id_order;
  std::map<std::string, std::vector<DetectionSet>> by_id;
  for (const auto& file : per_file) {
    for (const auto& ds : file) {
      if (by_id.find(ds.image_id) == by_id.end()) id_order.push_back(ds.image_id);
      by_id[ds.image_id].push_back(ds);
    }
  }

  FusionConfig fusion;
  fusion.nms_iou = cfg.nms_iou;
  fusion.voting_iou = cfg.voting_iou;
  fusion.scales = cfg.fusion_scales;
  fusion.flip = cfg.fusion_flip;

  std::vector<DetectionSet> fused;
  fused.reserve(id_order.size());
  for (const auto& id : id_order) {
    fused.push_back(multiscale_fuse(by_id[id], fusion, ScoreField::kRaw));
  }
  write_detections(out_path, fused, ScoreField::kRaw);
}

void cmd_ablate(const std::string& corpus_dir, const RunConfig& cfg,
                const std::string& out_dir, std::span<const int> pair_grid) {
  const SyntheticCorpus corpus = load_corpus_dir(corpus_dir);
  fs::create_directories(out_dir);

  const auto loss_rows = run_loss_ablation(corpus, cfg);
  const std::string loss_table = ablation_table(loss_rows, "loss");
  {
    std::ofstream os((fs::path(out_dir) / "losses.txt").string());
    if (!os) throw std::runtime_error("cannot write losses.txt in " + out_dir);
    os << loss_table;
  }
  std::fputs(loss_table.c_str(), stdout);

  const auto pair_rows = run_pair_ablation(corpus, cfg, pair_grid);
  const std::string pair_table = ablation_table(pair_rows, "pairs");
  {
    std::ofstream os((fs::path(out_dir) / "pairs.txt").string());
    if (!os) throw std::runtime_error("cannot write pairs.txt in " + out_dir);
    os << pair_table;
  }
  std::fputs(pair_table.c_str(), stdout);
}

}  // namespace crank
