#include "geoadapt/experiments.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "geoadapt/sha256.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace geoadapt {

namespace {

ordered_json hyper_to_json(const TrainHyper& h) {
  ordered_json j;
  j["lr_max"] = h.lr_max;
  j["warmup_epochs"] = h.warmup_epochs;
  j["total_epochs"] = h.total_epochs;
  j["weight_decay"] = h.weight_decay;
  j["clip_norm"] = h.clip_norm;
  j["batch"] = h.batch;
  return j;
}

TrainHyper hyper_from_json(const ordered_json& j, TrainHyper base) {
  if (j.contains("lr_max")) base.lr_max = j.at("lr_max").get<double>();
  if (j.contains("warmup_epochs")) base.warmup_epochs = j.at("warmup_epochs").get<int>();
  if (j.contains("total_epochs")) base.total_epochs = j.at("total_epochs").get<int>();
  if (j.contains("weight_decay")) base.weight_decay = j.at("weight_decay").get<double>();
  if (j.contains("clip_norm")) base.clip_norm = j.at("clip_norm").get<double>();
  if (j.contains("batch")) base.batch = j.at("batch").get<int>();
  return base;
}

}  // namespace

std::string ExperimentConfig::canonical_json() const {
  ordered_json j;
  j["dataset"] = dataset_dir;
  j["out"] = out_dir;
  j["seed"] = master_seed;
  j["ft_seeds"] = ft_seeds;
  j["target_family"] = target_family;
  j["model"] = ordered_json::parse(model.to_json_string());
  j["pretrain"] = hyper_to_json(pretrain_hyper);
  j["finetune"] = hyper_to_json(finetune_hyper);
  j["strategies"] = {{"lft_trainable_tail", lft_trainable_tail},
                     {"lora_rank", lora_rank},
                     {"lora_alpha", lora_alpha}};
  j["ft_split"] = {{"train", ft_train}, {"val", ft_val}};
  return j.dump();
}

void ExperimentConfig::apply_json(const std::string& json_text) {
  ordered_json j = ordered_json::parse(json_text);
  if (j.contains("dataset")) dataset_dir = j.at("dataset").get<std::string>();
  if (j.contains("out")) out_dir = j.at("out").get<std::string>();
  if (j.contains("seed")) master_seed = j.at("seed").get<uint64_t>();
  if (j.contains("ft_seeds")) ft_seeds = j.at("ft_seeds").get<std::vector<uint64_t>>();
  if (j.contains("target_family")) target_family = j.at("target_family").get<std::string>();
  if (j.contains("model")) {
    ordered_json m = ordered_json::parse(model.to_json_string());
    for (const auto& [k, v] : j.at("model").items()) m[k] = v;
    model = ModelConfig::from_json_string(m.dump());
  }
  if (j.contains("pretrain")) pretrain_hyper = hyper_from_json(j.at("pretrain"), pretrain_hyper);
  if (j.contains("finetune")) finetune_hyper = hyper_from_json(j.at("finetune"), finetune_hyper);
  if (j.contains("strategies")) {
    const auto& s = j.at("strategies");
    if (s.contains("lft_trainable_tail"))
      lft_trainable_tail = s.at("lft_trainable_tail").get<int>();
    if (s.contains("lora_rank")) lora_rank = s.at("lora_rank").get<int>();
    if (s.contains("lora_alpha")) lora_alpha = s.at("lora_alpha").get<double>();
  }
  if (j.contains("ft_split")) {
    ft_train = j.at("ft_split").at("train").get<size_t>();
    ft_val = j.at("ft_split").at("val").get<size_t>();
  }
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("experiment config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg;
  cfg.apply_json(ss.str());
  return cfg;
}

FamilySplits pretrain_split(const Dataset& ds, const std::string& family,
                            uint64_t master_seed) {
  std::vector<size_t> idx = ds.family_case_indices(family);
  if (idx.size() < 10) throw ConfigError("pretrain_split: family " + family + " too small");
  RandomStream rng(derive_seed(master_seed, "pretrain-split-" + family));
  rng.shuffle(idx);
  FamilySplits sp;
  const size_t n = idx.size();
  const size_t n_train = n * 8 / 10;
  const size_t n_val = n / 10;
  sp.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
  sp.val.assign(idx.begin() + static_cast<long>(n_train),
                idx.begin() + static_cast<long>(n_train + n_val));
  sp.test.assign(idx.begin() + static_cast<long>(n_train + n_val), idx.end());
  return sp;
}

FamilySplits finetune_split(const Dataset& ds, const std::string& family, uint64_t master_seed,
                            uint64_t ft_seed, size_t n_train, size_t n_val) {
  std::vector<size_t> idx = ds.family_case_indices(family);
  if (idx.size() < n_train + n_val + 1)
    throw ConfigError("finetune_split: family " + family + " has too few cases");
  RandomStream rng(derive_seed(derive_seed(master_seed, "ft-split-" + family), "seed", ft_seed));
  rng.shuffle(idx);
  FamilySplits sp;
  sp.train.assign(idx.begin(), idx.begin() + static_cast<long>(n_train));
  sp.val.assign(idx.begin() + static_cast<long>(n_train),
                idx.begin() + static_cast<long>(n_train + n_val));
  sp.test.assign(idx.begin() + static_cast<long>(n_train + n_val), idx.end());
  return sp;
}

namespace {

std::vector<const SurfaceCase*> gather(const Dataset& ds, const std::vector<size_t>& idx) {
  std::vector<const SurfaceCase*> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(&ds.cases[i]);
  return out;
}

NormalizationContract fit_pretrain_contract(const Dataset& ds, const std::string& held_out) {
  // Statistics over the entire pretraining corpus: all cases of the four
  // non-held-out families.
  std::vector<const SurfaceCase*> cases;
  for (const SurfaceCase& sc : ds.cases)
    if (sc.family != held_out) cases.push_back(&sc);
  return fit_contract(cases, ds.manifest.manifest_hash);
}

std::optional<std::vector<CaseMetricsRow>> try_load_rows(const std::string& run_dir) {
  const std::string percase = (fs::path(run_dir) / "metrics_percase.csv").string();
  if (!fs::exists(percase)) return std::nullopt;
  return read_percase_csv(percase);
}

FamilyMetrics persist_eval(const std::string& run_dir, const std::vector<CaseMetricsRow>& rows) {
  fs::create_directories(run_dir);
  write_percase_csv((fs::path(run_dir) / "metrics_percase.csv").string(), rows);
  FamilyMetrics fm = aggregate_rows(rows);
  write_summary_csv((fs::path(run_dir) / "metrics_summary.csv").string(), {fm});
  return fm;
}

StrategyConfig strategy_config_for(const ExperimentConfig& cfg, StrategyKind kind, int rank) {
  StrategyConfig sc;
  sc.kind = kind;
  sc.lft_trainable_tail = cfg.lft_trainable_tail;
  sc.lora_rank = rank > 0 ? rank : cfg.lora_rank;
  sc.lora_alpha = rank > 0 ? 2.0 * rank : cfg.lora_alpha;
  return sc;
}

}  // namespace

std::string ensure_pretrained(const ExperimentConfig& cfg, const Dataset& ds,
                              const std::string& held_out) {
  ordered_json key_src;
  key_src["manifest"] = ds.manifest.manifest_hash;
  key_src["held_out"] = held_out;
  key_src["model"] = ordered_json::parse(cfg.model.to_json_string());
  key_src["hyper"] = hyper_to_json(cfg.pretrain_hyper);
  key_src["seed"] = cfg.master_seed;
  const std::string key = sha256_hex(key_src.dump()).substr(0, 16);
  const std::string cache_dir = (fs::path(cfg.out_dir) / "cache").string();
  fs::create_directories(cache_dir);
  const std::string path =
      (fs::path(cache_dir) / ("pretrain_" + held_out + "_" + key + ".ckpt")).string();
  if (fs::exists(path)) return path;

  NormalizationContract contract = fit_pretrain_contract(ds, held_out);

  std::vector<const SurfaceCase*> train_cases, val_cases;
  for (const std::string& fam : ds.manifest.families) {
    if (fam == held_out) continue;
    FamilySplits sp = pretrain_split(ds, fam, cfg.master_seed);
    for (const SurfaceCase* c : gather(ds, sp.train)) train_cases.push_back(c);
    for (const SurfaceCase* c : gather(ds, sp.val)) val_cases.push_back(c);
  }

  ParameterStore store =
      build_parameter_store(cfg.model, derive_seed(cfg.master_seed, "init-" + held_out));
  StrategyConfig sc;
  sc.kind = StrategyKind::FFT;  // pretraining trains everything
  AdaptationPlan plan = build_plan(sc, store, cfg.model, cfg.master_seed);

  TrainHyper hyper = cfg.pretrain_hyper;
  hyper.seed = derive_seed(cfg.master_seed, "pretrain-" + held_out);
  TrainResult tr = train(cfg.model, store, plan, train_cases, val_cases, hyper, contract);

  CheckpointMeta meta;
  meta.kind = "checkpoint";
  meta.config = cfg.model;
  meta.contract = contract;
  meta.strategy = "pretrain";
  meta.epoch = tr.best_epoch;
  meta.val_loss = tr.best_val_loss;
  meta.seed = hyper.seed;
  const std::string tmp = path + ".tmp";
  save_checkpoint(tmp, meta, tr.best_store);
  fs::rename(tmp, path);
  write_history_csv(
      (fs::path(cache_dir) / ("pretrain_" + held_out + "_" + key + "_history.csv")).string(),
      tr.history);
  return path;
}

RunArtifacts run_zero_shot(const ExperimentConfig& cfg, const Dataset& ds,
                           const std::string& family, uint64_t ft_seed) {
  const std::string run_dir =
      (fs::path(cfg.out_dir) / family / ("seed" + std::to_string(ft_seed)) / "zero-shot")
          .string();
  const std::string ckpt_path = ensure_pretrained(cfg, ds, family);

  RunArtifacts out;
  out.run_dir = run_dir;
  out.artifact_path = ckpt_path;
  out.artifact_fingerprint = checkpoint_fingerprint(ckpt_path);
  if (auto rows = try_load_rows(run_dir)) {
    out.summary = aggregate_rows(*rows);
    return out;
  }

  LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  verify_contract(lc.meta.contract, lc.meta.contract, false);
  FamilySplits sp =
      finetune_split(ds, family, cfg.master_seed, ft_seed, cfg.ft_train, cfg.ft_val);
  EvalTags tags;
  tags.strategy = "zero-shot";
  tags.seed = ft_seed;
  tags.dataset_hash = ds.manifest.manifest_hash;
  tags.checkpoint_fingerprint = out.artifact_fingerprint;
  auto rows = evaluate_family(lc.meta.config, lc.store, nullptr, gather(ds, sp.test),
                              lc.meta.contract, tags);
  out.summary = persist_eval(run_dir, rows);
  return out;
}

RunArtifacts run_finetune(const ExperimentConfig& cfg, const Dataset& ds,
                          const std::string& family, StrategyKind kind, uint64_t ft_seed,
                          int lora_rank_override) {
  const StrategyConfig strat = strategy_config_for(cfg, kind, lora_rank_override);
  std::string run_name = strategy_name(kind);
  if (kind == StrategyKind::LoRA) run_name += "_r" + std::to_string(strat.lora_rank);
  const std::string run_dir =
      (fs::path(cfg.out_dir) / family / ("seed" + std::to_string(ft_seed)) / run_name).string();

  const std::string ckpt_path = ensure_pretrained(cfg, ds, family);
  const std::string backbone_fp = checkpoint_fingerprint(ckpt_path);

  RunArtifacts out;
  out.run_dir = run_dir;
  const std::string artifact_name =
      kind == StrategyKind::LoRA ? "adapter.adapter" : "model.ckpt";
  out.artifact_path = (fs::path(run_dir) / artifact_name).string();
  if (auto rows = try_load_rows(run_dir)) {
    out.summary = aggregate_rows(*rows);
    out.artifact_fingerprint =
        fs::exists(out.artifact_path) ? checkpoint_fingerprint(out.artifact_path) : backbone_fp;
    return out;
  }
  fs::create_directories(run_dir);

  LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  verify_contract(lc.meta.contract, lc.meta.contract, false);

  FamilySplits sp =
      finetune_split(ds, family, cfg.master_seed, ft_seed, cfg.ft_train, cfg.ft_val);
  auto train_cases = gather(ds, sp.train);
  auto val_cases = gather(ds, sp.val);

  AdaptationPlan plan = build_plan(strat, lc.store, lc.meta.config,
                                   derive_seed(cfg.master_seed, "plan-" + family, ft_seed));
  TrainHyper hyper = cfg.finetune_hyper;
  // Identical hyperparameters (including the subsampling stream) across
  // strategies within one (family, seed) cell.
  hyper.seed = derive_seed(derive_seed(cfg.master_seed, "ft-" + family), "seed", ft_seed);
  TrainResult tr =
      train(lc.meta.config, lc.store, plan, train_cases, val_cases, hyper, lc.meta.contract);
  write_history_csv((fs::path(run_dir) / "history.csv").string(), tr.history);

  CheckpointMeta meta;
  meta.config = lc.meta.config;
  meta.contract = lc.meta.contract;
  meta.strategy = run_name;
  meta.epoch = tr.best_epoch;
  meta.val_loss = tr.best_val_loss;
  meta.seed = ft_seed;
  meta.family = family;

  AdapterMap eval_adapters;
  ParameterStore* eval_store = &tr.best_store;
  if (kind == StrategyKind::LoRA) {
    meta.kind = "adapter";
    meta.lora_rank = strat.lora_rank;
    meta.lora_alpha = strat.lora_alpha;
    meta.base_fingerprint = backbone_fp;
    save_adapter(out.artifact_path, meta, *tr.best_adapter_store);
    eval_adapters =
        adapter_map_from_store(*tr.best_adapter_store, strat.lora_rank, strat.lora_alpha);
  } else {
    meta.kind = "checkpoint";
    save_checkpoint(out.artifact_path, meta, tr.best_store);
  }
  out.artifact_fingerprint = checkpoint_fingerprint(out.artifact_path);

  EvalTags tags;
  tags.strategy = run_name;
  tags.lora_rank = kind == StrategyKind::LoRA ? strat.lora_rank : 0;
  tags.seed = ft_seed;
  tags.dataset_hash = ds.manifest.manifest_hash;
  tags.checkpoint_fingerprint = out.artifact_fingerprint;
  auto rows = evaluate_family(lc.meta.config, *eval_store,
                              eval_adapters.empty() ? nullptr : &eval_adapters,
                              gather(ds, sp.test), lc.meta.contract, tags);
  out.summary = persist_eval(run_dir, rows);
  return out;
}

LofoReport run_lofo(const ExperimentConfig& cfg, const Dataset& ds) {
  LofoReport report;
  for (const std::string& family : ds.manifest.families) {
    const std::string fail_marker = (fs::path(cfg.out_dir) / family / "FAILED").string();
    try {
      const std::string ckpt = ensure_pretrained(cfg, ds, family);
      const std::string backbone_fp = checkpoint_fingerprint(ckpt);
      for (uint64_t seed : cfg.ft_seeds) {
        report.summaries.push_back(run_zero_shot(cfg, ds, family, seed).summary);
        for (StrategyKind kind : {StrategyKind::FFT, StrategyKind::LFT, StrategyKind::LoRA}) {
          RunArtifacts ra = run_finetune(cfg, ds, family, kind, seed);
          report.summaries.push_back(ra.summary);
          if (kind == StrategyKind::LoRA && seed == cfg.ft_seeds.front()) {
            // Deployment registry: one per backbone fingerprint.
            AdapterRegistry reg = AdapterRegistry::open(
                (fs::path(cfg.out_dir) / "registry" / backbone_fp.substr(0, 16)).string(),
                backbone_fp);
            AdapterRegistry::Entry e;
            e.family = family;
            const std::string reg_rel =
                family + "_r" + std::to_string(cfg.lora_rank) + ".adapter";
            fs::copy_file(ra.artifact_path, fs::path(reg.dir()) / reg_rel,
                          fs::copy_options::overwrite_existing);
            e.path = reg_rel;
            e.base_fingerprint = backbone_fp;
            e.rank = cfg.lora_rank;
            e.alpha = cfg.lora_alpha;
            e.r2_pressure = ra.summary.r2_pressure;
            e.rel_l2_pressure = ra.summary.mean_rel_l2_pressure;
            reg.put(e);
          }
        }
      }
      if (fs::exists(fail_marker)) fs::remove(fail_marker);
    } catch (const std::exception& e) {
      fs::create_directories(fs::path(cfg.out_dir) / family);
      std::ofstream marker(fail_marker);
      marker << e.what() << "\n";
      report.failed_families.push_back(family + ": " + e.what());
    }
  }
  write_summary_csv((fs::path(cfg.out_dir) / "metrics_summary_all.csv").string(),
                    report.summaries);
  if (!report.failed_families.empty()) {
    std::string msg = "lofo: failed families:";
    for (const auto& f : report.failed_families) msg += " [" + f + "]";
    throw NumericError(msg);
  }
  return report;
}

std::vector<RankSweepRow> run_rank_sweep(const ExperimentConfig& cfg, const Dataset& ds,
                                         const std::vector<int>& ranks) {
  std::vector<RankSweepRow> rows;
  for (int r : ranks) {
    if (r < 1) throw ConfigError("rank sweep: rank must be >= 1");
    ExperimentConfig sweep_cfg = cfg;
    sweep_cfg.out_dir = (fs::path(cfg.out_dir) / "rank_sweep").string();
    RunArtifacts ra =
        run_finetune(sweep_cfg, ds, cfg.target_family, StrategyKind::LoRA,
                     cfg.ft_seeds.front(), r);
    RankSweepRow row;
    row.rank = r;
    size_t params = 0;
    const size_t d = cfg.model.d_model;
    for (const std::string& layer : lora_target_layers(cfg.model)) {
      const bool mlp_in = layer.find("mlp.in") != std::string::npos;
      const bool mlp_out = layer.find("mlp.out") != std::string::npos;
      const size_t d_out = mlp_in ? 4 * d : d;
      const size_t d_in = mlp_out ? 4 * d : d;
      params += lora_params_for_layer(d_out, d_in, r);
    }
    row.adapter_params = params;
    row.metrics = ra.summary;
    rows.push_back(row);
  }
  return rows;
}

KfoldReport run_kfold(const ExperimentConfig& cfg, const Dataset& ds, int k) {
  if (k < 1) throw ConfigError("kfold: k must be >= 1");
  std::vector<size_t> idx = ds.family_case_indices(cfg.target_family);
  const size_t per_fold = cfg.ft_train + cfg.ft_val;
  if (idx.size() < static_cast<size_t>(k) * per_fold)
    throw ConfigError("kfold: family " + cfg.target_family + " has " +
                      std::to_string(idx.size()) + " cases, needs >= " +
                      std::to_string(static_cast<size_t>(k) * per_fold) +
                      " for k disjoint train+val folds");
  RandomStream rng(derive_seed(cfg.master_seed, "kfold-" + cfg.target_family));
  rng.shuffle(idx);

  const std::string ckpt_path = ensure_pretrained(cfg, ds, cfg.target_family);
  KfoldReport report;
  std::vector<double> r2s, rel_l2s;
  for (int fold = 0; fold < k; ++fold) {
    const std::string run_dir =
        (fs::path(cfg.out_dir) / "kfold" / ("fold" + std::to_string(fold))).string();
    FamilyMetrics fm;
    if (auto rows = try_load_rows(run_dir)) {
      fm = aggregate_rows(*rows);
    } else {
      const size_t base = static_cast<size_t>(fold) * per_fold;
      std::vector<size_t> train_idx(idx.begin() + static_cast<long>(base),
                                    idx.begin() + static_cast<long>(base + cfg.ft_train));
      std::vector<size_t> val_idx(idx.begin() + static_cast<long>(base + cfg.ft_train),
                                  idx.begin() + static_cast<long>(base + per_fold));
      std::vector<size_t> test_idx;
      for (size_t i = 0; i < idx.size(); ++i)
        if (i < base || i >= base + per_fold) test_idx.push_back(idx[i]);

      LoadedCheckpoint lc = load_checkpoint(ckpt_path);
      StrategyConfig strat = strategy_config_for(cfg, StrategyKind::LoRA, 0);
      AdaptationPlan plan =
          build_plan(strat, lc.store, lc.meta.config,
                     derive_seed(cfg.master_seed, "kfold-plan", static_cast<uint64_t>(fold)));
      TrainHyper hyper = cfg.finetune_hyper;
      hyper.seed = derive_seed(cfg.master_seed, "kfold-train", static_cast<uint64_t>(fold));
      TrainResult tr = train(lc.meta.config, lc.store, plan, gather(ds, train_idx),
                             gather(ds, val_idx), hyper, lc.meta.contract);
      AdapterMap adapters =
          adapter_map_from_store(*tr.best_adapter_store, strat.lora_rank, strat.lora_alpha);
      EvalTags tags;
      tags.strategy = "lora_fold" + std::to_string(fold);
      tags.lora_rank = strat.lora_rank;
      tags.seed = static_cast<uint64_t>(fold);
      tags.dataset_hash = ds.manifest.manifest_hash;
      tags.checkpoint_fingerprint = checkpoint_fingerprint(ckpt_path);
      auto fold_rows = evaluate_family(lc.meta.config, tr.best_store, &adapters,
                                       gather(ds, test_idx), lc.meta.contract, tags);
      fm = persist_eval(run_dir, fold_rows);
    }
    report.folds.push_back(fm);
    r2s.push_back(fm.r2_pressure);
    rel_l2s.push_back(fm.mean_rel_l2_pressure);
  }
  auto mean_std = [](const std::vector<double>& v, double& m, double& s) {
    m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    s = 0;
    for (double x : v) s += (x - m) * (x - m);
    s = std::sqrt(s / static_cast<double>(v.size()));
  };
  mean_std(r2s, report.mean_r2_pressure, report.std_r2_pressure);
  mean_std(rel_l2s, report.mean_rel_l2_pressure, report.std_rel_l2_pressure);
  return report;
}

LrSweepReport run_lr_sweep(const ExperimentConfig& cfg, const Dataset& ds,
                           const std::vector<double>& rates,
                           const std::vector<std::string>& families) {
  if (families.size() < 2) throw ConfigError("lr sweep: needs at least 2 families");
  LrSweepReport report;
  report.families = families;
  for (const std::string& family : families) {
    std::vector<double> r2s;
    for (size_t ri = 0; ri < rates.size(); ++ri) {
      ExperimentConfig sweep_cfg = cfg;
      sweep_cfg.out_dir =
          (fs::path(cfg.out_dir) / "lr_sweep" / ("rate" + std::to_string(ri))).string();
      sweep_cfg.finetune_hyper.lr_max = rates[ri];
      RunArtifacts ra =
          run_finetune(sweep_cfg, ds, family, StrategyKind::FFT, cfg.ft_seeds.front());
      LrSweepRow row;
      row.family = family;
      row.rate = rates[ri];
      row.metrics = ra.summary;
      report.rows.push_back(row);
      r2s.push_back(ra.summary.r2_pressure);
    }
    bool monotone = true;
    for (size_t i = 1; i < r2s.size(); ++i)
      if (r2s[i] > r2s[i - 1]) monotone = false;  // rates ordered high -> low
    report.monotone_degradation.push_back(monotone);
  }
  return report;
}

RunArtifacts run_from_scratch(const ExperimentConfig& cfg, const Dataset& ds,
                              const std::string& budget) {
  if (budget != "30" && budget != "full")
    throw ConfigError("from-scratch: budget must be '30' or 'full'");
  const std::string run_dir =
      (fs::path(cfg.out_dir) / "from_scratch" / ("budget_" + budget)).string();
  const uint64_t ft_seed = cfg.ft_seeds.front();
  FamilySplits target_sp =
      finetune_split(ds, cfg.target_family, cfg.master_seed, ft_seed, cfg.ft_train, cfg.ft_val);

  RunArtifacts out;
  out.run_dir = run_dir;
  out.artifact_path = (fs::path(run_dir) / "model.ckpt").string();
  if (auto rows = try_load_rows(run_dir)) {
    out.summary = aggregate_rows(*rows);
    if (fs::exists(out.artifact_path))
      out.artifact_fingerprint = checkpoint_fingerprint(out.artifact_path);
    return out;
  }
  fs::create_directories(run_dir);

  std::vector<const SurfaceCase*> train_cases, val_cases, contract_cases;
  for (const std::string& fam : ds.manifest.families) {
    if (fam == cfg.target_family) continue;
    FamilySplits sp = pretrain_split(ds, fam, cfg.master_seed);
    for (const SurfaceCase* c : gather(ds, sp.train)) train_cases.push_back(c);
    for (const SurfaceCase* c : gather(ds, sp.val)) val_cases.push_back(c);
    for (size_t i : ds.family_case_indices(fam)) contract_cases.push_back(&ds.cases[i]);
  }
  if (budget == "30") {
    for (const SurfaceCase* c : gather(ds, target_sp.train)) {
      train_cases.push_back(c);
      contract_cases.push_back(c);
    }
    for (const SurfaceCase* c : gather(ds, target_sp.val)) {
      val_cases.push_back(c);
      contract_cases.push_back(c);
    }
  } else {
    // Conventional all-data baseline: the target family joins training like
    // any other family; the shared test split then overlaps training.
    FamilySplits sp = pretrain_split(ds, cfg.target_family, cfg.master_seed);
    for (const SurfaceCase* c : gather(ds, sp.train)) train_cases.push_back(c);
    for (const SurfaceCase* c : gather(ds, sp.val)) val_cases.push_back(c);
    for (size_t i : ds.family_case_indices(cfg.target_family))
      contract_cases.push_back(&ds.cases[i]);
  }

  NormalizationContract contract = fit_contract(contract_cases, ds.manifest.manifest_hash);
  ParameterStore store = build_parameter_store(
      cfg.model, derive_seed(cfg.master_seed, "scratch-init-" + budget));
  StrategyConfig strat;
  strat.kind = StrategyKind::FromScratch;
  AdaptationPlan plan = build_plan(strat, store, cfg.model, cfg.master_seed);
  TrainHyper hyper = cfg.pretrain_hyper;  // identical to pretraining
  hyper.seed = derive_seed(cfg.master_seed, "scratch-" + budget);
  TrainResult tr = train(cfg.model, store, plan, train_cases, val_cases, hyper, contract);
  write_history_csv((fs::path(run_dir) / "history.csv").string(), tr.history);

  CheckpointMeta meta;
  meta.config = cfg.model;
  meta.contract = contract;
  meta.strategy = "scratch" + budget;
  meta.epoch = tr.best_epoch;
  meta.val_loss = tr.best_val_loss;
  meta.seed = hyper.seed;
  save_checkpoint(out.artifact_path, meta, tr.best_store);
  out.artifact_fingerprint = checkpoint_fingerprint(out.artifact_path);

  EvalTags tags;
  tags.strategy = "scratch" + budget;
  tags.seed = ft_seed;
  tags.dataset_hash = ds.manifest.manifest_hash;
  tags.checkpoint_fingerprint = out.artifact_fingerprint;
  auto rows = evaluate_family(cfg.model, tr.best_store, nullptr, gather(ds, target_sp.test),
                              contract, tags);
  out.summary = persist_eval(run_dir, rows);
  return out;
}

NormAblationReport run_norm_ablation(const ExperimentConfig& cfg, const Dataset& ds,
                                     bool allow_override) {
  if (!allow_override)
    throw ContractMismatchError(
        "norm-ablation: refusing to evaluate with a corrupted contract without "
        "--allow-contract-override");
  const uint64_t ft_seed = cfg.ft_seeds.front();
  RunArtifacts lora = run_finetune(cfg, ds, cfg.target_family, StrategyKind::LoRA, ft_seed);

  const std::string ckpt_path = ensure_pretrained(cfg, ds, cfg.target_family);
  LoadedCheckpoint backbone = load_checkpoint(ckpt_path);
  LoadedCheckpoint adapter = load_checkpoint(lora.artifact_path);
  if (adapter.meta.base_fingerprint != checkpoint_fingerprint(ckpt_path))
    throw ConfigError("norm-ablation: adapter does not match the backbone checkpoint");
  AdapterMap adapters =
      adapter_map_from_store(adapter.store, adapter.meta.lora_rank, adapter.meta.lora_alpha);

  FamilySplits sp = finetune_split(ds, cfg.target_family, cfg.master_seed, ft_seed,
                                   cfg.ft_train, cfg.ft_val);
  auto test_cases = gather(ds, sp.test);

  NormAblationReport report;
  {
    verify_contract(backbone.meta.contract, backbone.meta.contract, false);
    EvalTags tags;
    tags.strategy = "lora_consistent";
    tags.lora_rank = adapter.meta.lora_rank;
    tags.seed = ft_seed;
    tags.contract_mismatch = false;
    tags.dataset_hash = ds.manifest.manifest_hash;
    tags.checkpoint_fingerprint = lora.artifact_fingerprint;
    auto rows = evaluate_family(backbone.meta.config, backbone.store, &adapters, test_cases,
                                backbone.meta.contract, tags);
    report.consistent =
        persist_eval((fs::path(cfg.out_dir) / "norm_ablation" / "consistent").string(), rows);
  }
  {
    // Deliberately corrupted contract: refit on the target family's
    // adaptation cases only.
    std::vector<const SurfaceCase*> refit_cases;
    for (const SurfaceCase* c : gather(ds, sp.train)) refit_cases.push_back(c);
    for (const SurfaceCase* c : gather(ds, sp.val)) refit_cases.push_back(c);
    NormalizationContract corrupted = fit_contract(refit_cases, ds.manifest.manifest_hash);
    ContractCheck check = verify_contract(backbone.meta.contract, corrupted, allow_override);
    EvalTags tags;
    tags.strategy = "lora_corrupted";
    tags.lora_rank = adapter.meta.lora_rank;
    tags.seed = ft_seed;
    tags.contract_mismatch = check == ContractCheck::MismatchOverridden;
    tags.dataset_hash = ds.manifest.manifest_hash;
    tags.checkpoint_fingerprint = lora.artifact_fingerprint;
    auto rows = evaluate_family(backbone.meta.config, backbone.store, &adapters, test_cases,
                                corrupted, tags);
    report.corrupted =
        persist_eval((fs::path(cfg.out_dir) / "norm_ablation" / "corrupted").string(), rows);
  }
  return report;
}

void write_consolidated_report(const std::string& out_dir) {
  std::vector<std::string> summary_files;
  for (auto& e : fs::recursive_directory_iterator(out_dir))
    if (e.is_regular_file() && e.path().filename() == "metrics_summary.csv")
      summary_files.push_back(e.path().string());
  std::sort(summary_files.begin(), summary_files.end());

  std::string header;
  std::vector<std::string> lines;
  for (const std::string& f : summary_files) {
    std::ifstream in(f);
    std::string line;
    std::getline(in, line);
    if (header.empty()) header = line;
    while (std::getline(in, line))
      if (!line.empty()) lines.push_back(line);
  }
  {
    std::ofstream out((fs::path(out_dir) / "report.csv").string());
    out << header << "\n";
    for (const auto& l : lines) out << l << "\n";
  }
  std::ofstream md((fs::path(out_dir) / "report.md").string());
  md << "# Run summary\n\n";
  md << "| family | strategy | seed | force R2 (pressure) | force R2 (shear) | MAE [N] | "
        "RMSE [N] | rel L2 pressure | rel L2 friction |\n";
  md << "|---|---|---|---|---|---|---|---|---|\n";
  for (const std::string& l : lines) {
    std::stringstream ss(l);
    std::vector<std::string> cols;
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
    if (cols.size() < 19) continue;
    auto fmt = [](const std::string& s) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4g", std::stod(s));
      return std::string(buf);
    };
    md << "| " << cols[0] << " | " << cols[1] << " | " << cols[3] << " | " << fmt(cols[6])
       << " | " << fmt(cols[7]) << " | " << fmt(cols[9]) << " | " << fmt(cols[10]) << " | "
       << fmt(cols[11]) << " | " << fmt(cols[15]) << " |\n";
  }
}

}  // namespace geoadapt
