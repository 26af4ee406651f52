#pragma once

#include <string>
#include <vector>

#include "geoadapt/dataset.hpp"
#include "geoadapt/evaluate.hpp"
#include "geoadapt/registry.hpp"
#include "geoadapt/trainer.hpp"

namespace geoadapt {

// Batch experiment driver: leave-one-family-out pretraining, the three
// adaptation strategies, sweeps, baselines, and the normalization ablation.
struct ExperimentConfig {
  std::string dataset_dir;
  std::string out_dir = "runs";
  uint64_t master_seed = 1;
  std::vector<uint64_t> ft_seeds = {1, 2, 3};
  std::string target_family = "F3";
  ModelConfig model = ModelConfig::desk();
  TrainHyper pretrain_hyper = TrainHyper::pretrain_desk();
  TrainHyper finetune_hyper = TrainHyper::finetune();
  int lft_trainable_tail = 2;
  int lora_rank = 64;
  double lora_alpha = 128.0;
  size_t ft_train = 20;
  size_t ft_val = 10;

  std::string canonical_json() const;
  static ExperimentConfig from_json_file(const std::string& path);
  void apply_json(const std::string& json_text);
};

struct FamilySplits {
  std::vector<size_t> train, val, test;  // indices into Dataset::cases
};

// Per-family 80/10/10 pretraining split, deterministic in the master seed.
FamilySplits pretrain_split(const Dataset& ds, const std::string& family, uint64_t master_seed);
// 20 train + 10 val from the held-out family, remainder test; deterministic
// in (master seed, fine-tune seed).
FamilySplits finetune_split(const Dataset& ds, const std::string& family, uint64_t master_seed,
                            uint64_t ft_seed, size_t n_train, size_t n_val);

// Pretrains on the four non-held-out families (or loads the cached
// checkpoint keyed by the config hash). Returns the checkpoint path.
std::string ensure_pretrained(const ExperimentConfig& cfg, const Dataset& ds,
                              const std::string& held_out);

struct RunArtifacts {
  FamilyMetrics summary;
  std::string artifact_path;        // fine-tuned checkpoint or adapter file
  std::string artifact_fingerprint;
  std::string run_dir;
};

RunArtifacts run_zero_shot(const ExperimentConfig& cfg, const Dataset& ds,
                           const std::string& family, uint64_t ft_seed);
RunArtifacts run_finetune(const ExperimentConfig& cfg, const Dataset& ds,
                          const std::string& family, StrategyKind kind, uint64_t ft_seed,
                          int lora_rank_override = 0);

struct LofoReport {
  std::vector<FamilyMetrics> summaries;
  std::vector<std::string> failed_families;
};
LofoReport run_lofo(const ExperimentConfig& cfg, const Dataset& ds);

struct RankSweepRow {
  int rank = 0;
  size_t adapter_params = 0;
  FamilyMetrics metrics;
};
std::vector<RankSweepRow> run_rank_sweep(const ExperimentConfig& cfg, const Dataset& ds,
                                         const std::vector<int>& ranks);

struct KfoldReport {
  std::vector<FamilyMetrics> folds;
  double mean_r2_pressure = 0, std_r2_pressure = 0;
  double mean_rel_l2_pressure = 0, std_rel_l2_pressure = 0;
};
KfoldReport run_kfold(const ExperimentConfig& cfg, const Dataset& ds, int k);

struct LrSweepRow {
  std::string family;
  double rate = 0;
  FamilyMetrics metrics;
};
struct LrSweepReport {
  std::vector<LrSweepRow> rows;
  std::vector<std::string> families;
  std::vector<bool> monotone_degradation;  // per family, rates high -> low
};
LrSweepReport run_lr_sweep(const ExperimentConfig& cfg, const Dataset& ds,
                           const std::vector<double>& rates,
                           const std::vector<std::string>& families);

// budget: "30" (20 train + 10 val from the target, honest test split) or
// "full" (target treated like a pretraining family; test overlaps training,
// mirroring the conventional all-data baseline).
RunArtifacts run_from_scratch(const ExperimentConfig& cfg, const Dataset& ds,
                              const std::string& budget);

struct NormAblationReport {
  FamilyMetrics consistent;
  FamilyMetrics corrupted;
};
NormAblationReport run_norm_ablation(const ExperimentConfig& cfg, const Dataset& ds,
                                     bool allow_override);

// Consolidates every metrics_summary.csv under the run directory into one
// CSV plus a markdown table.
void write_consolidated_report(const std::string& out_dir);

}  // namespace geoadapt
