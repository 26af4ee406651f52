#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "geoadapt/experiments.hpp"
#include "geoadapt/sha256.hpp"

using namespace geoadapt;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitContract = 3;

struct GlobalOpts {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  uint64_t seed = 0;
  bool seed_set = false;
};

ExperimentConfig resolve_config(const GlobalOpts& g) {
  ExperimentConfig cfg;
  if (!g.config_path.empty()) cfg = ExperimentConfig::from_json_file(g.config_path);
  if (!g.data_dir.empty()) cfg.dataset_dir = g.data_dir;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  if (g.seed_set) cfg.master_seed = g.seed;
  return cfg;
}

Dataset load_for(const ExperimentConfig& cfg) {
  if (cfg.dataset_dir.empty())
    throw ConfigError("no dataset directory (--data or config \"dataset\")");
  return load_dataset(cfg.dataset_dir);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

void print_summary(const FamilyMetrics& fm) {
  std::printf("%-4s %-16s seed=%llu  R2p=%+.4f R2s=%+.4f  MAE=%.2fN RMSE=%.2fN  "
              "relL2(p)=%.4f relL2(tau)=%.4f%s\n",
              fm.family.c_str(), fm.strategy.c_str(),
              static_cast<unsigned long long>(fm.seed), fm.r2_pressure, fm.r2_shear,
              fm.mae_newton, fm.rmse_newton, fm.mean_rel_l2_pressure, fm.mean_rel_l2_friction,
              fm.contract_mismatch ? "  [contract_mismatch]" : "");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geoadapt: point-cloud surrogate geometry-transfer workbench"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  GlobalOpts g;
  app.add_option("--config", g.config_path, "experiment.json configuration file");
  app.add_option("--data", g.data_dir, "dataset directory");
  app.add_option("--out", g.out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", g.seed, "master seed");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  size_t cases_per_family = 60, panels = 320;
  gen->add_option("--cases-per-family", cases_per_family);
  gen->add_option("--panels", panels);

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "pretrain on four families");
  std::string held_out = "F3";
  pre->add_option("--held-out", held_out, "family to hold out");
  int pre_epochs = -1;
  pre->add_option("--epochs", pre_epochs, "override pretrain epochs");

  // finetune
  auto* ft = app.add_subcommand("finetune", "adapt a pretrained checkpoint");
  std::string ft_family = "F3", ft_strategy = "lora";
  uint64_t ft_seed = 1;
  int ft_rank = 0;
  double ft_alpha = 0.0;
  ft->add_option("--family", ft_family);
  ft->add_option("--strategy", ft_strategy, "fft | lft | lora");
  ft->add_option("--ft-seed", ft_seed);
  ft->add_option("--rank", ft_rank, "LoRA rank");
  ft->add_option("--alpha", ft_alpha, "LoRA alpha (default 2r)");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "evaluate a checkpoint (+ optional adapter)");
  std::string ev_ckpt, ev_adapter, ev_family = "F3", ev_contract, ev_export;
  uint64_t ev_seed = 1;
  bool ev_override = false;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--adapter", ev_adapter);
  ev->add_option("--family", ev_family);
  ev->add_option("--ft-seed", ev_seed, "fine-tune seed selecting the test split");
  ev->add_option("--contract", ev_contract, "runtime contract JSON (default: checkpoint's)");
  ev->add_flag("--allow-contract-override", ev_override);
  ev->add_option("--export-fields", ev_export, "write per-point error CSV");

  // export-contract
  auto* ec = app.add_subcommand("export-contract", "fit and export a contract.json");
  std::string ec_families, ec_out = "contract.json";
  ec->add_option("--families", ec_families, "comma-separated families (default: all)");
  ec->add_option("--contract-out", ec_out);

  // lofo
  auto* lofo = app.add_subcommand("lofo", "full leave-one-family-out matrix");
  std::string lofo_seeds;
  lofo->add_option("--ft-seeds", lofo_seeds, "comma-separated fine-tune seeds");

  // rank-sweep
  auto* rs = app.add_subcommand("rank-sweep", "LoRA rank sweep on the target family");
  std::string rs_ranks = "8,16,32,64";
  rs->add_option("--ranks", rs_ranks);

  // kfold
  auto* kf = app.add_subcommand("kfold", "k-fold cross validation for LoRA");
  int kf_k = 5;
  kf->add_option("--k", kf_k);

  // lr-sweep
  auto* ls = app.add_subcommand("lr-sweep", "FFT learning-rate sensitivity");
  std::string ls_rates = "1e-5,3e-6,1e-6";
  std::string ls_families;
  ls->add_option("--rates", ls_rates);
  ls->add_option("--families", ls_families, "comma-separated (default: target + next)");

  // from-scratch
  auto* fsc = app.add_subcommand("from-scratch", "train a fresh model on all five families");
  std::string fsc_budget = "30";
  fsc->add_option("--budget", fsc_budget, "30 | full");

  // norm-ablation
  auto* na = app.add_subcommand("norm-ablation", "consistent vs corrupted contract");
  bool na_override = false;
  na->add_flag("--allow-contract-override", na_override);

  // report
  auto* rep = app.add_subcommand("report", "consolidate metrics under the run dir");
  std::string rep_runs;
  rep->add_option("--runs", rep_runs, "run directory (default: --out)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    g.seed_set = seed_opt->count() > 0;
    ExperimentConfig cfg = resolve_config(g);

    if (gen->parsed()) {
      if (cfg.out_dir.empty() || cfg.out_dir == "runs")
        cfg.out_dir = g.out_dir.empty() ? "dataset" : g.out_dir;
      DatasetManifest man = generate_dataset(cfg.out_dir, cases_per_family, panels,
                                             g.seed_set ? g.seed : cfg.master_seed);
      std::printf("wrote %zu cases (%zu rejection resamples) to %s\n", man.cases.size(),
                  man.rejection_count, cfg.out_dir.c_str());
      return kExitOk;
    }

    if (pre->parsed()) {
      if (pre_epochs > 0) cfg.pretrain_hyper.total_epochs = pre_epochs;
      Dataset ds = load_for(cfg);
      const std::string path = ensure_pretrained(cfg, ds, held_out);
      std::printf("pretrained checkpoint: %s\nfingerprint: %s\n", path.c_str(),
                  checkpoint_fingerprint(path).c_str());
      return kExitOk;
    }

    if (ft->parsed()) {
      Dataset ds = load_for(cfg);
      StrategyKind kind = strategy_from_name(ft_strategy);
      if (ft_rank > 0) {
        cfg.lora_rank = ft_rank;
        cfg.lora_alpha = ft_alpha > 0.0 ? ft_alpha : 2.0 * ft_rank;
      }
      if (kind == StrategyKind::LoRA)
        std::printf("strategy=lora r=%d alpha=%g\n", cfg.lora_rank, cfg.lora_alpha);
      RunArtifacts ra = run_finetune(cfg, ds, ft_family, kind, ft_seed);
      print_summary(ra.summary);
      std::printf("artifact: %s\n", ra.artifact_path.c_str());
      return kExitOk;
    }

    if (ev->parsed()) {
      Dataset ds = load_for(cfg);
      LoadedCheckpoint lc = load_checkpoint(ev_ckpt);
      NormalizationContract runtime = lc.meta.contract;
      if (!ev_contract.empty()) {
        std::ifstream in(ev_contract);
        if (!in) throw ConfigError("cannot open contract file " + ev_contract);
        std::stringstream ss;
        ss << in.rdbuf();
        runtime = NormalizationContract::from_json_string(ss.str());
      }
      ContractCheck check = verify_contract(lc.meta.contract, runtime, ev_override);

      AdapterMap adapters;
      std::unique_ptr<LoadedCheckpoint> ad;
      if (!ev_adapter.empty()) {
        ad = std::make_unique<LoadedCheckpoint>(load_checkpoint(ev_adapter));
        if (ad->meta.base_fingerprint != checkpoint_fingerprint(ev_ckpt))
          throw ConfigError("adapter was trained against a different backbone");
        adapters = adapter_map_from_store(ad->store, ad->meta.lora_rank, ad->meta.lora_alpha);
      }
      FamilySplits sp =
          finetune_split(ds, ev_family, cfg.master_seed, ev_seed, cfg.ft_train, cfg.ft_val);
      std::vector<const SurfaceCase*> test_cases;
      for (size_t i : sp.test) test_cases.push_back(&ds.cases[i]);
      EvalTags tags;
      tags.strategy = adapters.empty() ? "zero-shot" : "lora";
      tags.seed = ev_seed;
      tags.contract_mismatch = check == ContractCheck::MismatchOverridden;
      tags.dataset_hash = ds.manifest.manifest_hash;
      tags.checkpoint_fingerprint = checkpoint_fingerprint(ev_ckpt);
      auto rows = evaluate_family(lc.meta.config, lc.store,
                                  adapters.empty() ? nullptr : &adapters, test_cases, runtime,
                                  tags);
      FamilyMetrics fm = aggregate_rows(rows);
      print_summary(fm);
      if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        write_percase_csv((fs::path(cfg.out_dir) / "metrics_percase.csv").string(), rows);
        write_summary_csv((fs::path(cfg.out_dir) / "metrics_summary.csv").string(), {fm});
      }
      if (!ev_export.empty())
        export_field_errors(ev_export, lc.meta.config, lc.store,
                            adapters.empty() ? nullptr : &adapters, test_cases, runtime);
      return kExitOk;
    }

    if (ec->parsed()) {
      Dataset ds = load_for(cfg);
      std::vector<const SurfaceCase*> cases;
      if (ec_families.empty()) {
        for (const SurfaceCase& sc : ds.cases) cases.push_back(&sc);
      } else {
        for (const std::string& fam : split_csv(ec_families))
          for (size_t i : ds.family_case_indices(fam)) cases.push_back(&ds.cases[i]);
      }
      NormalizationContract c = fit_contract(cases, ds.manifest.manifest_hash);
      std::ofstream out(ec_out);
      out << c.to_json_string() << "\n";
      std::printf("contract fingerprint %s -> %s\n", c.fingerprint().c_str(), ec_out.c_str());
      return kExitOk;
    }

    if (lofo->parsed()) {
      if (!lofo_seeds.empty()) {
        cfg.ft_seeds.clear();
        for (const std::string& s : split_csv(lofo_seeds))
          cfg.ft_seeds.push_back(std::stoull(s));
      }
      Dataset ds = load_for(cfg);
      LofoReport report = run_lofo(cfg, ds);
      for (const FamilyMetrics& fm : report.summaries) print_summary(fm);
      write_consolidated_report(cfg.out_dir);
      return kExitOk;
    }

    if (rs->parsed()) {
      Dataset ds = load_for(cfg);
      std::vector<int> ranks;
      for (const std::string& s : split_csv(rs_ranks)) ranks.push_back(std::stoi(s));
      auto rows = run_rank_sweep(cfg, ds, ranks);
      for (const auto& r : rows) {
        std::printf("r=%-4d adapter_params=%zu  ", r.rank, r.adapter_params);
        print_summary(r.metrics);
      }
      return kExitOk;
    }

    if (kf->parsed()) {
      Dataset ds = load_for(cfg);
      KfoldReport report = run_kfold(cfg, ds, kf_k);
      for (const auto& fm : report.folds) print_summary(fm);
      std::printf("pressure R2: %.4f +/- %.4f | rel L2(p): %.4f +/- %.4f\n",
                  report.mean_r2_pressure, report.std_r2_pressure,
                  report.mean_rel_l2_pressure, report.std_rel_l2_pressure);
      return kExitOk;
    }

    if (ls->parsed()) {
      Dataset ds = load_for(cfg);
      std::vector<double> rates;
      for (const std::string& s : split_csv(ls_rates)) rates.push_back(std::stod(s));
      std::vector<std::string> families = split_csv(ls_families);
      if (families.empty()) {
        families.push_back(cfg.target_family);
        for (const std::string& fam : ds.manifest.families)
          if (fam != cfg.target_family) {
            families.push_back(fam);
            break;
          }
      }
      LrSweepReport report = run_lr_sweep(cfg, ds, rates, families);
      for (const auto& row : report.rows) {
        std::printf("family=%s lr=%g  ", row.family.c_str(), row.rate);
        print_summary(row.metrics);
      }
      for (size_t i = 0; i < report.families.size(); ++i)
        std::printf("family=%s monotone_degradation=%s\n", report.families[i].c_str(),
                    report.monotone_degradation[i] ? "yes" : "no");
      return kExitOk;
    }

    if (fsc->parsed()) {
      Dataset ds = load_for(cfg);
      RunArtifacts ra = run_from_scratch(cfg, ds, fsc_budget);
      print_summary(ra.summary);
      return kExitOk;
    }

    if (na->parsed()) {
      Dataset ds = load_for(cfg);
      NormAblationReport report = run_norm_ablation(cfg, ds, na_override);
      print_summary(report.consistent);
      print_summary(report.corrupted);
      return kExitOk;
    }

    if (rep->parsed()) {
      const std::string dir = rep_runs.empty() ? cfg.out_dir : rep_runs;
      if (dir.empty()) throw ConfigError("report: no run directory given");
      write_consolidated_report(dir);
      std::printf("wrote %s/report.csv and report.md\n", dir.c_str());
      return kExitOk;
    }

    throw ConfigError("no subcommand handled");
  } catch (const ContractMismatchError& e) {
    std::fprintf(stderr, "contract mismatch: %s\n", e.what());
    return kExitContract;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric abort: %s\n", e.what());
    return kExitNumeric;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
}
