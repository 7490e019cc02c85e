// crank: confidence re-ranking for object detections.
//
// Subcommands: synth, oracle-eval, train, rerank, ablate, fuse, eval.
// Exit code 0 on success; on failure a single "error: ..." line goes to
// stderr and the exit code is nonzero.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crank/kernels.hpp"
#include "crank/pipeline.hpp"

namespace {

// Config file first, then flag overrides on top.
struct ConfigArgs {
  std::string config_path;
  bool desk = false;

  // overridable knobs (negative / NaN means "not set")
  int capacity_n = -1;
  int pair_n = -1;
  int batch_size = -1;
  int iterations = -1;
  int corpus_images = -1;
  double nms_iou = -1.0;
  double voting_iou = -1.0;
  double match_iou = -1.0;
  double lr_start = -1.0;
  double lr_end = -1.0;
  long long seed = -1;
  std::string loss;
  int augment = -1;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON run configuration");
    app->add_flag("--desk", desk, "start from the desk-scale preset instead of full-scale defaults");
    app->add_option("--capacity", capacity_n, "detections per image (N)");
    app->add_option("--pairs", pair_n, "ranking-loss pair count (n)");
    app->add_option("--batch", batch_size, "training batch size");
    app->add_option("--iterations", iterations, "training iterations");
    app->add_option("--images", corpus_images, "synthetic corpus size");
    app->add_option("--nms-iou", nms_iou, "NMS IoU threshold");
    app->add_option("--voting-iou", voting_iou, "box voting IoU threshold");
    app->add_option("--match-iou", match_iou, "evaluation match IoU threshold");
    app->add_option("--lr-start", lr_start, "initial learning rate");
    app->add_option("--lr-end", lr_end, "final learning rate");
    app->add_option("--seed", seed, "run seed");
    app->add_option("--loss", loss, "rank|margin_rank|l1|l2|smooth_l1|cross_entropy");
    app->add_option("--augment", augment, "1 to enable box-space augmentation");
  }

  crank::RunConfig resolve() const {
    crank::RunConfig cfg = desk ? crank::desk_config() : crank::RunConfig{};
    if (!config_path.empty()) cfg = crank::load_run_config(config_path);
    if (capacity_n > 0) {
      cfg.capacity_n = capacity_n;
      cfg.ranker.capacity_n = capacity_n;
    }
    if (pair_n > 0) cfg.pair_n = pair_n;
    if (batch_size > 0) cfg.batch_size = batch_size;
    if (iterations >= 0) cfg.iterations = iterations;
    if (corpus_images > 0) cfg.corpus_images = corpus_images;
    if (nms_iou > 0.0) cfg.nms_iou = nms_iou;
    if (voting_iou > 0.0) cfg.voting_iou = voting_iou;
    if (match_iou > 0.0) cfg.match_iou = match_iou;
    if (lr_start > 0.0) cfg.lr_start = lr_start;
    if (lr_end > 0.0) cfg.lr_end = lr_end;
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!loss.empty()) cfg.loss = loss;
    if (augment >= 0) cfg.augment = augment != 0;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"confidence re-ranking for object detections"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate and export a synthetic corpus");
  std::string synth_out;
  ConfigArgs synth_cfg;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth_cfg.attach(synth);

  // oracle-eval
  auto* oracle_eval = app.add_subcommand(
      "oracle-eval", "report AP(raw) vs AP(oracle rescoring) per bucket");
  std::string oe_corpus, oe_split = "val", oe_out;
  oracle_eval->add_option("--corpus", oe_corpus, "corpus directory")->required();
  oracle_eval->add_option("--split", oe_split, "train|val|all (default val)");
  oracle_eval->add_option("--out", oe_out, "report file");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the confidence ranker");
  std::string train_corpus, train_ckpt, train_history;
  ConfigArgs train_cfg;
  train_cmd->add_option("--corpus", train_corpus, "corpus directory")->required();
  train_cmd->add_option("--out", train_ckpt, "checkpoint output path")->required();
  train_cmd->add_option("--history", train_history, "loss history output path");
  train_cfg.attach(train_cmd);
  bool train_use_meta = false;
  train_cmd->add_flag("--use-corpus-config", train_use_meta,
                      "take the configuration from the corpus meta.json");

  // rerank
  auto* rerank = app.add_subcommand("rerank", "apply a checkpoint to a detection dump");
  std::string rr_ckpt, rr_dets, rr_feats, rr_out;
  double rr_w = 0.0, rr_h = 0.0;
  std::string rr_corpus;
  rerank->add_option("--checkpoint", rr_ckpt, "checkpoint path")->required();
  rerank->add_option("--detections", rr_dets, "detection dump")->required();
  rerank->add_option("--features", rr_feats, "feature container")->required();
  rerank->add_option("--out", rr_out, "refined dump output")->required();
  rerank->add_option("--frame-width", rr_w, "image width for all images");
  rerank->add_option("--frame-height", rr_h, "image height for all images");
  rerank->add_option("--corpus", rr_corpus, "corpus directory (frame size from its meta.json)");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "loss-function and pair-count grids");
  std::string ab_corpus, ab_out;
  ConfigArgs ab_cfg;
  std::vector<int> ab_pairs = {1, 2, 10, 100};
  ablate->add_option("--corpus", ab_corpus, "corpus directory")->required();
  ablate->add_option("--out", ab_out, "output directory")->required();
  ablate->add_option("--pair-grid", ab_pairs, "pair counts to sweep");
  ab_cfg.attach(ablate);
  bool ab_use_meta = false;
  ablate->add_flag("--use-corpus-config", ab_use_meta,
                   "take the configuration from the corpus meta.json");

  // fuse
  auto* fuse = app.add_subcommand("fuse", "multi-scale fusion with box voting");
  std::vector<std::string> fuse_inputs;
  std::string fuse_out;
  ConfigArgs fuse_cfg;
  fuse->add_option("--inputs", fuse_inputs, "detection dumps (one per scale)")
      ->required()
      ->expected(-1);
  fuse->add_option("--out", fuse_out, "fused dump output")->required();
  fuse_cfg.attach(fuse);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "AP report and PR curves for a dump");
  std::string ev_dets, ev_ann, ev_out;
  double ev_w = 0.0, ev_h = 0.0;
  std::string ev_corpus;
  bool ev_no_nms = false;
  ConfigArgs ev_cfg;
  eval_cmd->add_option("--detections", ev_dets, "detection dump")->required();
  eval_cmd->add_option("--annotations", ev_ann, "annotation file")->required();
  eval_cmd->add_option("--out", ev_out, "output directory for report and PR curves");
  eval_cmd->add_option("--frame-width", ev_w, "image width for all images");
  eval_cmd->add_option("--frame-height", ev_h, "image height for all images");
  eval_cmd->add_option("--corpus", ev_corpus, "corpus directory (frame size from its meta.json)");
  eval_cmd->add_flag("--no-nms", ev_no_nms, "evaluate the dump without running NMS first");
  ev_cfg.attach(eval_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      crank::cmd_synth(synth_out, synth_cfg.resolve());
      std::printf("synth: wrote corpus to %s\n", synth_out.c_str());
    } else if (oracle_eval->parsed()) {
      crank::cmd_oracle_eval(oe_corpus, oe_split, oe_out);
    } else if (train_cmd->parsed()) {
      crank::RunConfig cfg = train_use_meta ? crank::load_corpus_config(train_corpus)
                                            : train_cfg.resolve();
      crank::cmd_train(train_corpus, cfg, train_ckpt, train_history);
      std::printf("train: wrote checkpoint to %s (%s kernels)\n", train_ckpt.c_str(),
                  crank::kern::active_name());
    } else if (rerank->parsed()) {
      double w = rr_w, h = rr_h;
      if (!rr_corpus.empty()) {
        const crank::RunConfig meta = crank::load_corpus_config(rr_corpus);
        w = meta.scene.frame_width;
        h = meta.scene.frame_height;
      }
      if (!(w > 0.0) || !(h > 0.0)) {
        throw std::runtime_error("rerank: provide --frame-width/--frame-height or --corpus");
      }
      crank::cmd_rerank(rr_ckpt, rr_dets, rr_feats, rr_out, w, h);
      std::printf("rerank: wrote %s\n", rr_out.c_str());
    } else if (ablate->parsed()) {
      crank::RunConfig cfg = ab_use_meta ? crank::load_corpus_config(ab_corpus)
                                         : ab_cfg.resolve();
      crank::cmd_ablate(ab_corpus, cfg, ab_out, ab_pairs);
    } else if (fuse->parsed()) {
      crank::cmd_fuse(fuse_inputs, fuse_out, fuse_cfg.resolve());
      std::printf("fuse: wrote %s\n", fuse_out.c_str());
    } else if (eval_cmd->parsed()) {
      double w = ev_w, h = ev_h;
      if (!ev_corpus.empty()) {
        const crank::RunConfig meta = crank::load_corpus_config(ev_corpus);
        w = meta.scene.frame_width;
        h = meta.scene.frame_height;
      }
      if (!(w > 0.0) || !(h > 0.0)) {
        throw std::runtime_error("eval: provide --frame-width/--frame-height or --corpus");
      }
      crank::cmd_eval(ev_dets, ev_ann, ev_out, w, h, ev_cfg.resolve(), !ev_no_nms);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
