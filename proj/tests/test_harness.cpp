#include "doctest.h"

#include <filesystem>
#include <set>

#include "geoadapt/experiments.hpp"
#include "geoadapt/sha256.hpp"

using namespace geoadapt;
namespace fs = std::filesystem;

namespace {

// Micro configuration: full pipeline shape at toy cost.
ExperimentConfig micro_config(const std::string& data_dir, const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.dataset_dir = data_dir;
  cfg.out_dir = out_dir;
  cfg.master_seed = 5;
  cfg.ft_seeds = {1};
  cfg.target_family = "F3";
  cfg.model.d_model = 16;
  cfg.model.n_heads = 2;
  cfg.model.n_geo_blocks = 1;
  cfg.model.n_surface_blocks = 2;
  cfg.model.n_latent = 4;
  cfg.model.n_supernodes = 8;
  cfg.model.n_anchors = 16;
  cfg.model.n_fourier = 4;
  cfg.pretrain_hyper.total_epochs = 2;
  cfg.pretrain_hyper.warmup_epochs = 1;
  cfg.pretrain_hyper.batch = 4;
  cfg.finetune_hyper.total_epochs = 2;
  cfg.finetune_hyper.warmup_epochs = 1;
  cfg.finetune_hyper.batch = 1;
  cfg.lora_rank = 4;
  cfg.lora_alpha = 8.0;
  cfg.ft_train = 3;
  cfg.ft_val = 2;
  return cfg;
}

struct MicroWorld {
  std::string data_dir = "harness_data";
  std::string out_dir = "harness_runs";
  MicroWorld() {
    if (!fs::exists(data_dir + "/manifest.json"))
      generate_dataset(data_dir, 10, 48, 31);
  }
};

MicroWorld& world() {
  static MicroWorld w;
  return w;
}

}  // namespace

TEST_CASE("experiment config: json overrides") {
  ExperimentConfig cfg;
  cfg.apply_json(R"({"seed": 42, "target_family": "F5",
                     "model": {"d_model": 32, "n_heads": 4},
                     "finetune": {"lr_max": 2e-5, "total_epochs": 10},
                     "strategies": {"lora_rank": 16, "lora_alpha": 32}})");
  CHECK(cfg.master_seed == 42);
  CHECK(cfg.target_family == "F5");
  CHECK(cfg.model.d_model == 32);
  CHECK(cfg.model.n_surface_blocks == 3);  // untouched default
  CHECK(cfg.finetune_hyper.lr_max == 2e-5);
  CHECK(cfg.finetune_hyper.total_epochs == 10);
  CHECK(cfg.lora_rank == 16);
}

TEST_CASE("splits: sizes, disjointness, determinism") {
  Dataset ds = load_dataset(world().data_dir);
  FamilySplits pre = pretrain_split(ds, "F1", 5);
  CHECK(pre.train.size() == 8);  // 10 cases: 80/10/10 -> 8/1/1
  FamilySplits ft = finetune_split(ds, "F3", 5, 1, 3, 2);
  CHECK(ft.train.size() == 3);
  CHECK(ft.val.size() == 2);
  CHECK(ft.test.size() == 5);
  std::set<size_t> all(ft.train.begin(), ft.train.end());
  for (size_t i : ft.val) CHECK(all.insert(i).second);
  for (size_t i : ft.test) CHECK(all.insert(i).second);

  FamilySplits ft2 = finetune_split(ds, "F3", 5, 1, 3, 2);
  CHECK(ft.train == ft2.train);
  FamilySplits ft_other_seed = finetune_split(ds, "F3", 5, 2, 3, 2);
  CHECK(ft.train != ft_other_seed.train);
}

TEST_CASE("pretrain caching is a no-op on re-invocation") {
  fs::remove_all(world().out_dir);
  ExperimentConfig cfg = micro_config(world().data_dir, world().out_dir);
  Dataset ds = load_dataset(cfg.dataset_dir);
  const std::string p1 = ensure_pretrained(cfg, ds, "F3");
  const std::string h1 = sha256_file(p1);
  const std::string p2 = ensure_pretrained(cfg, ds, "F3");
  CHECK(p1 == p2);
  CHECK(sha256_file(p2) == h1);
}

TEST_CASE("lofo: 5 families x (zero-shot + 3 strategies) = 20 summaries, resumable") {
  ExperimentConfig cfg = micro_config(world().data_dir, world().out_dir);
  Dataset ds = load_dataset(cfg.dataset_dir);
  LofoReport report = run_lofo(cfg, ds);
  CHECK(report.summaries.size() == 20);
  CHECK(report.failed_families.empty());

  std::set<std::string> strategies;
  for (const auto& fm : report.summaries) strategies.insert(fm.strategy);
  CHECK(strategies ==
        std::set<std::string>{"zero-shot", "fft", "lft", "lora_r4"});

  // Every row carries provenance.
  for (const auto& fm : report.summaries) {
    CHECK(fm.dataset_hash == ds.manifest.manifest_hash);
    CHECK_FALSE(fm.checkpoint_fingerprint.empty());
  }

  // Re-running resumes from persisted rows: identical summaries.
  LofoReport again = run_lofo(cfg, ds);
  REQUIRE(again.summaries.size() == report.summaries.size());
  for (size_t i = 0; i < report.summaries.size(); ++i) {
    CHECK(again.summaries[i].r2_pressure == report.summaries[i].r2_pressure);
    CHECK(again.summaries[i].mean_rel_l2_friction == report.summaries[i].mean_rel_l2_friction);
  }

  // The adapter registry holds one entry per backbone.
  size_t registries = 0;
  for (auto& e : fs::directory_iterator(fs::path(world().out_dir) / "registry"))
    if (e.is_directory()) ++registries;
  CHECK(registries == 5);

  write_consolidated_report(cfg.out_dir);
  CHECK(fs::exists(fs::path(cfg.out_dir) / "report.csv"));
  CHECK(fs::exists(fs::path(cfg.out_dir) / "report.md"));
}

TEST_CASE("strategies within a cell share one backbone checkpoint") {
  ExperimentConfig cfg = micro_config(world().data_dir, world().out_dir);
  Dataset ds = load_dataset(cfg.dataset_dir);
  const std::string p = ensure_pretrained(cfg, ds, "F2");
  // Strategy runs all resolve the identical cached checkpoint.
  CHECK(ensure_pretrained(cfg, ds, "F2") == p);
  LoadedCheckpoint lora_adapter = load_checkpoint(
      (fs::path(cfg.out_dir) / "F2" / "seed1" / "lora_r4" / "adapter.adapter").string());
  CHECK(lora_adapter.meta.base_fingerprint == checkpoint_fingerprint(p));
}

TEST_CASE("kfold: k=1 degenerates to a single fold; too-large k rejected") {
  ExperimentConfig cfg = micro_config(world().data_dir, world().out_dir);
  Dataset ds = load_dataset(cfg.dataset_dir);
  KfoldReport r = run_kfold(cfg, ds, 1);
  CHECK(r.folds.size() == 1);
  CHECK(std::isfinite(r.folds[0].r2_pressure));
  // 10 cases per family, 5 per fold: k = 3 would need 15.
  CHECK_THROWS_AS(run_kfold(cfg, ds, 3), ConfigError);
}

TEST_CASE("norm ablation: refuses without override, tags with it") {
  ExperimentConfig cfg = micro_config(world().data_dir, world().out_dir);
  Dataset ds = load_dataset(cfg.dataset_dir);
  CHECK_THROWS_AS(run_norm_ablation(cfg, ds, false), ContractMismatchError);
  NormAblationReport rep = run_norm_ablation(cfg, ds, true);
  CHECK_FALSE(rep.consistent.contract_mismatch);
  CHECK(rep.corrupted.contract_mismatch);
}

TEST_CASE("rank sweep: rows echo ranks, params linear in rank") {
  ExperimentConfig cfg = micro_config(world().data_dir, world().out_dir);
  Dataset ds = load_dataset(cfg.dataset_dir);
  auto rows = run_rank_sweep(cfg, ds, {2, 4});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].rank == 2);
  CHECK(rows[1].rank == 4);
  CHECK(rows[1].adapter_params == 2 * rows[0].adapter_params);
}
