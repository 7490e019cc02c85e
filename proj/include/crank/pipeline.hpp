#pragma once

#include <span>
#include <string>
#include <vector>

#include "crank/config.hpp"
#include "crank/evaluation.hpp"
#include "crank/net.hpp"
#include "crank/synth.hpp"
#include "crank/train.hpp"

namespace crank {

// Paired detection/ground-truth lists where each (image, personality)
// combination is evaluated as its own virtual image.
struct EvalSet {
  std::vector<DetectionSet> dets;
  std::vector<GroundTruthImage> gts;
};

EvalSet corpus_eval_units(const SyntheticCorpus& corpus,
                          std::span<const std::size_t> indices);

// NMS on the selected field (unless with_nms is false), then bucketed AP.
ApReport evaluate_sets(const EvalSet& set, ScoreField field, const RunConfig& cfg,
                       bool with_nms = true);

// Mean per-unit Kendall tau between the selected field and the oracle
// confidences (units with fewer than 2 detections are skipped).
double mean_kendall_tau_vs_oracle(const EvalSet& set, ScoreField field);

std::vector<TrainExample> corpus_train_examples(const SyntheticCorpus& corpus,
                                                std::span<const std::size_t> indices);

// Refined confidences from the ranker / from oracle rescoring.
EvalSet rescore_with_ranker(const RankerNetwork& net, const SyntheticCorpus& corpus,
                            std::span<const std::size_t> indices);
EvalSet rescore_with_oracle(const EvalSet& set);

// --- ablation harness ---------------------------------------------------

struct AblationRow {
  std::string name;
  ApReport report;
  double tau = 0.0;
};

// Trains one ranker per loss under identical budgets (rank first).
std::vector<AblationRow> run_loss_ablation(const SyntheticCorpus& corpus,
                                           const RunConfig& cfg);
// Trains one ranker per pair count with the ranking loss.
std::vector<AblationRow> run_pair_ablation(const SyntheticCorpus& corpus,
                                           const RunConfig& cfg,
                                           std::span<const int> pair_grid);
std::string ablation_table(const std::vector<AblationRow>& rows,
                           const std::string& label_header);

// --- file-level subcommands ----------------------------------------------
// Each throws on failure; the CLI translates exceptions into an error line
// and a nonzero exit code. All outputs are byte-deterministic for a fixed
// seed and fixed inputs.

// Writes annotations.txt, features.bin, one detections_<i>_<name>.txt per
// personality, and meta.json (the exact config echo) into out_dir.
void cmd_synth(const std::string& out_dir, const RunConfig& cfg);

// Reads the files cmd_synth wrote back into a corpus.
SyntheticCorpus load_corpus_dir(const std::string& dir);
RunConfig load_corpus_config(const std::string& dir);

std::vector<std::size_t> split_indices(const SyntheticCorpus& corpus,
                                       const std::string& split);

// AP(raw) vs AP(oracle rescoring) per bucket on the given split.
struct OracleEvalResult {
  ApReport raw;
  ApReport oracle;
};
OracleEvalResult cmd_oracle_eval(const std::string& corpus_dir, const std::string& split,
                                 const std::string& out_path);

void cmd_train(const std::string& corpus_dir, const RunConfig& cfg,
               const std::string& checkpoint_path, const std::string& history_path);

void cmd_rerank(const std::string& checkpoint_path, const std::string& detections_path,
                const std::string& features_path, const std::string& out_path,
                double frame_width, double frame_height);

struct EvalCmdResult {
  ApReport report;
};
EvalCmdResult cmd_eval(const std::string& detections_path,
                       const std::string& annotations_path, const std::string& out_dir,
                       double frame_width, double frame_height, const RunConfig& cfg,
                       bool with_nms);

void cmd_fuse(const std::vector<std::string>& input_paths, const std::string& out_path,
              const RunConfig& cfg);

void cmd_ablate(const std::string& corpus_dir, const RunConfig& cfg,
                const std::string& out_dir, std::span<const int> pair_grid);

}  // namespace crank
