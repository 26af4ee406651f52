// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. The working directory gains
// an acceptance_work/ tree; finished stages are cached there, so re-runs
// only recompute what is missing.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "geoadapt/experiments.hpp"
#include "geoadapt/gradcheck.hpp"
#include "geoadapt/lhs.hpp"
#include "geoadapt/panel.hpp"
#include "geoadapt/sha256.hpp"
#include "geoadapt/thwaites.hpp"

using namespace geoadapt;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<Criterion> g_results;

void record(int id, const std::string& name, bool pass, const std::string& detail) {
  g_results.push_back({id, name, pass, detail});
  std::printf("[%s] criterion %2d: %-28s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
}

const char* kWorkdir = "acceptance_work";

std::string cli_path() {
  const char* p = std::getenv("GEOADAPT_CLI");
  return p ? p : "";
}

int run_cli(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " >> acceptance_cli.log 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string hash_dir(const std::string& dir) {
  std::vector<std::string> paths;
  for (auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) paths.push_back(fs::relative(e.path(), dir).string());
  std::sort(paths.begin(), paths.end());
  std::string acc;
  for (const auto& p : paths) acc += p + ":" + sha256_file((fs::path(dir) / p).string()) + "\n";
  return sha256_hex(acc);
}

Profile make_circle(size_t p) {
  std::vector<Vec2> nodes(p);
  for (size_t i = 0; i < p; ++i) {
    const double th = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(p);
    nodes[i] = {std::cos(th), std::sin(th)};
  }
  Profile prof;
  prof.nodes = nodes;
  prof.midpoints.resize(p);
  prof.normals.resize(p);
  prof.tangents.resize(p);
  prof.lengths.resize(p);
  for (size_t i = 0; i < p; ++i) {
    const Vec2 a = nodes[i], b = nodes[(i + 1) % p];
    const Vec2 d = b - a;
    prof.lengths[i] = d.norm();
    prof.midpoints[i] = (a + b) * 0.5;
    prof.tangents[i] = d * (1.0 / prof.lengths[i]);
    prof.normals[i] = {prof.tangents[i].y, -prof.tangents[i].x};
  }
  return prof;
}

ExperimentConfig desk_config(const std::string& data_dir, const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.dataset_dir = data_dir;
  cfg.out_dir = out_dir;
  cfg.master_seed = 7;
  cfg.ft_seeds = {1, 2, 3};
  cfg.target_family = "F3";
  return cfg;
}

std::string hash_frozen(const ParameterStore& ps) {
  std::string acc;
  ps.for_each([&](const ParamTensor& p) {
    if (p.trainable) return;
    acc.append(reinterpret_cast<const char*>(p.value.data()), p.value.numel() * sizeof(double));
  });
  return sha256_hex(acc);
}

// ---------------------------------------------------------------------------

void criterion_2_merge(const ExperimentConfig& cfg) {
  RandomStream rng(202);
  ParameterStore ps = build_parameter_store(cfg.model, 40);
  StrategyConfig sc;
  sc.kind = StrategyKind::LoRA;
  sc.lora_rank = 8;
  sc.lora_alpha = 16.0;
  AdaptationPlan plan = build_plan(sc, ps, cfg.model, 41);
  for (auto& [layer, ad] : plan.adapters)
    for (size_t i = 0; i < ad.b->value.numel(); ++i) ad.b->value[i] = rng.normal(0.0, 0.05);
  ParameterStore merged = merge_lora(ps, plan.adapters);

  double worst = 0.0;
  for (const auto& [layer, ad] : plan.adapters) {
    const size_t d_in = ps.get(layer + ".weight").value.cols();
    for (int probe = 0; probe < 100; ++probe) {
      Tensor x({1, d_in});
      for (size_t i = 0; i < d_in; ++i) x[i] = rng.normal();
      Graph g;
      ValueRef xr = g.constant(x, "x");
      ValueRef via_ad = g.lora_affine(xr, ps.get(layer + ".weight"), ps.get(layer + ".bias"),
                                      *ad.a, *ad.b, ad.alpha, ad.rank, "ad");
      ValueRef via_mg =
          g.affine(xr, merged.get(layer + ".weight"), merged.get(layer + ".bias"), "mg");
      worst = std::max(worst, max_abs_diff(g.value(via_ad), g.value(via_mg)));
    }
  }
  record(2, "LoRA merge equivalence", worst < 1e-9,
         "max abs deviation " + fmt17(worst) + " over 100 probes x 42 layers");
}

void criterion_3_accounting(const ExperimentConfig& cfg) {
  bool ok = true;
  std::string detail;

  const size_t per_layer = lora_params_for_layer(512, 512, 64);
  if (per_layer != 65536) {
    ok = false;
    detail += "2rd(512,64)=" + std::to_string(per_layer) + "!=65536; ";
  }

  // LFT mask vs independent walk.
  {
    ParameterStore ps = build_parameter_store(cfg.model, 42);
    StrategyConfig sc;
    sc.kind = StrategyKind::LFT;
    sc.lft_trainable_tail = 2;
    AdaptationPlan plan = build_plan(sc, ps, cfg.model, 42);
    std::set<std::string> walk;
    for (size_t i = 0; i < ps.size(); ++i) {
      const std::string& n = ps.at(i).name;
      if (n.rfind("dec.", 0) == 0 || n.rfind("surf.1.", 0) == 0 || n.rfind("surf.2.", 0) == 0)
        walk.insert(n);
    }
    if (plan.trainable_names != walk) {
      ok = false;
      detail += "LFT mask mismatch; ";
    }
  }
  // LoRA inventory vs independent walk.
  {
    ParameterStore ps = build_parameter_store(cfg.model, 43);
    StrategyConfig sc;
    sc.kind = StrategyKind::LoRA;
    sc.lora_rank = 8;
    sc.lora_alpha = 16.0;
    AdaptationPlan plan = build_plan(sc, ps, cfg.model, 43);
    size_t walk = 0;
    for (size_t i = 0; i < ps.size(); ++i) {
      const std::string& n = ps.at(i).name;
      for (const std::string& role :
           {std::string("attn.q"), std::string("attn.k"), std::string("attn.v"),
            std::string("attn.out"), std::string("mlp.in"), std::string("mlp.out")}) {
        const std::string suffix = "." + role + ".weight";
        if (n.size() > suffix.size() &&
            n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0)
          ++walk;
      }
    }
    if (plan.adapters.size() != walk) {
      ok = false;
      detail += "LoRA inventory mismatch; ";
    }
  }
  // Published group shares at the reference shape.
  {
    auto counts = param_group_counts(ModelConfig::paper_shape());
    const double total = static_cast<double>(counts["total"]);
    const double geo = 100.0 * static_cast<double>(counts["geo"]) / total;
    const double surf = 100.0 * static_cast<double>(counts["surface"]) / total;
    if (std::abs(geo - 30.8) >= 3.0 || std::abs(surf - 63.1) >= 3.0) ok = false;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "geo %.1f%% (ref 30.8), surface %.1f%% (ref 63.1)", geo,
                  surf);
    detail += buf;
  }
  record(3, "parameter accounting", ok, detail);
}

void criterion_4_gradients() {
  ModelConfig cfg = ModelConfig::tiny();
  ParameterStore ps = build_parameter_store(cfg, 44);
  RandomStream rng(44);
  Tensor sup({cfg.n_supernodes, 2}), anc({cfg.n_anchors, 2}), queries({4, 2});
  for (size_t i = 0; i < sup.numel(); ++i) sup[i] = rng.uniform(0, 1000);
  for (size_t i = 0; i < anc.numel(); ++i) anc[i] = rng.uniform(0, 1000);
  for (size_t i = 0; i < queries.numel(); ++i) queries[i] = rng.uniform(0, 1000);
  Tensor ta({cfg.n_anchors, 3}), tq({4, 3});
  for (size_t i = 0; i < ta.numel(); ++i) ta[i] = rng.normal();
  for (size_t i = 0; i < tq.numel(); ++i) tq[i] = rng.normal();
  double err = grad_check(
      [&](Graph& g) {
        ForwardResult r = surrogate_forward(g, cfg, ps, nullptr, sup, anc, &queries);
        return g.add(g.scale(g.mse(r.anchor_out, ta, "la"), 0.5, "sa"),
                     g.scale(g.mse(r.query_out, tq, "lq"), 0.5, "sq"), "loss");
      },
      ps);
  record(4, "gradient fidelity (d=8)", err < 1e-5, "max relative error " + fmt17(err));
}

void criterion_6_oracle() {
  bool ok = true;
  std::string detail;
  FlowConstants flow;

  Profile circ = make_circle(200);
  PanelSolution sol = solve_panel_flow(circ, flow);
  double worst = 0.0;
  for (size_t i = 0; i < 200; ++i) {
    const double th = std::atan2(circ.midpoints[i].y, circ.midpoints[i].x);
    worst = std::max(worst, std::abs(sol.cp[i] - (1.0 - 4.0 * std::sin(th) * std::sin(th))));
  }
  if (worst >= 0.01) ok = false;
  detail += "cylinder Cp err " + fmt17(worst);

  std::vector<double> uniform_p(200, 123.0);
  std::vector<Vec2> zero_tau(200, Vec2{0, 0});
  ForceBreakdown fb = integrate_forces(uniform_p, zero_tau, circ.normals, circ.lengths);
  if (std::abs(fb.d_pressure) >= 1e-10) ok = false;
  detail += "; closed-surface force " + fmt17(std::abs(fb.d_pressure)) + " N";

  const size_t n = 400;
  std::vector<double> s(n), v(n, flow.u_inf);
  for (size_t i = 0; i < n; ++i) s[i] = 2.0 * static_cast<double>(i) / (n - 1);
  ThwaitesMarch m = thwaites_march(s, v, flow);
  double thw = 0.0;
  for (size_t i = 1; i < n; ++i) {
    const double exact = std::sqrt(0.45 * flow.nu * s[i] / flow.u_inf);
    thw = std::max(thw, std::abs(m.theta[i] - exact) / exact);
  }
  if (thw >= 1e-6) ok = false;
  detail += "; flat-plate theta rel err " + fmt17(thw);
  record(6, "oracle validity", ok, detail);
}

void criterion_7_metrics() {
  bool ok = true;
  std::vector<double> y = {1.0, 2.0, 3.0, 7.0};
  std::vector<double> mean_pred(4, 13.0 / 4.0);
  if (std::abs(r_squared(y, mean_pred)) > 1e-12) ok = false;
  if (r_squared(y, y) != 1.0) ok = false;
  if (rel_l2(y, {0, 0, 0, 0}) != 1.0) ok = false;
  RandomStream rng(7);
  for (int t = 0; t < 1000 && ok; ++t) {
    std::vector<double> a(6), b(6);
    for (int i = 0; i < 6; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    auto [mae, rmse] = mae_rmse(a, b);
    if (rmse < mae - 1e-15) ok = false;
  }
  record(7, "metric identities", ok, "R2/relL2 identities exact; RMSE >= MAE on 1000 draws");
}

bool criterion_8_normalization(const Dataset& ds, const std::string& workdir) {
  // Round-trip accuracy.
  NormalizationContract c;
  {
    std::vector<const SurfaceCase*> cases;
    for (const SurfaceCase& sc : ds.cases)
      if (sc.family != "F3") cases.push_back(&sc);
    c = fit_contract(cases, ds.manifest.manifest_hash);
  }
  double worst = 0.0;
  const SurfaceCase& probe = ds.cases.front();
  Tensor normed = normalize_fields(probe, c);
  Tensor back = denormalize_fields(normed, c);
  for (size_t i = 0; i < probe.panel_count(); ++i) {
    worst = std::max(worst, std::abs(back.at(i, 0) - probe.pressure[i]) /
                                std::max(1.0, std::abs(probe.pressure[i])));
    worst = std::max(worst, std::abs(back.at(i, 1) - probe.friction[i].x));
    worst = std::max(worst, std::abs(back.at(i, 2) - probe.friction[i].y));
  }
  bool ok = worst < 1e-12;
  std::string detail = "round-trip err " + fmt17(worst);

  // Fingerprint mismatch must block evaluation with exit code 3.
  if (cli_path().empty()) {
    ok = false;
    detail += "; GEOADAPT_CLI not set";
  } else {
    const std::string det_dir = workdir + "/det_a";
    std::string ckpt;
    for (auto& e : fs::recursive_directory_iterator(det_dir))
      if (e.path().extension() == ".ckpt") ckpt = e.path().string();
    const std::string contract_path = workdir + "/contract_f3.json";
    int rc1 = run_cli("--data " + std::string(kWorkdir) + "/dataset export-contract --families F3 --contract-out " +
                      contract_path);
    int rc2 = run_cli("--data " + std::string(kWorkdir) + "/dataset evaluate --checkpoint " + ckpt +
                      " --family F3 --contract " + contract_path);
    int rc3 = run_cli("--data " + std::string(kWorkdir) + "/dataset evaluate --checkpoint " + ckpt +
                      " --family F3 --contract " + contract_path +
                      " --allow-contract-override --out " + workdir + "/override_eval");
    if (rc1 != 0 || rc2 != 3 || rc3 != 0) {
      ok = false;
      detail += "; exit codes: export=" + std::to_string(rc1) +
                " mismatch=" + std::to_string(rc2) + " (want 3), override=" +
                std::to_string(rc3);
    } else {
      detail += "; mismatch blocked with exit 3, override proceeds";
    }
  }
  record(8, "normalization contract", ok, detail);
  return ok;
}

void criterion_9_determinism(const std::string& workdir) {
  bool ok = true;
  std::string detail;
  if (cli_path().empty()) {
    record(9, "determinism", false, "GEOADAPT_CLI not set");
    return;
  }
  // gen-data twice at the same seed -> identical directory hashes.
  const std::string ga = workdir + "/gen_a", gb = workdir + "/gen_b";
  fs::remove_all(ga);
  fs::remove_all(gb);
  int rc1 = run_cli("gen-data --seed 7 --cases-per-family 6 --panels 96 --out " + ga);
  int rc2 = run_cli("gen-data --seed 7 --cases-per-family 6 --panels 96 --out " + gb);
  if (rc1 != 0 || rc2 != 0 || hash_dir(ga) != hash_dir(gb)) {
    ok = false;
    detail += "gen-data not reproducible; ";
  } else {
    detail += "gen-data byte-identical; ";
  }

  // 5-epoch pretrain twice in fresh directories -> identical checkpoints.
  const std::string da = workdir + "/det_a", db = workdir + "/det_b";
  int rc3 = run_cli("--data " + std::string(kWorkdir) + "/dataset --seed 7 --out " + da +
                    " pretrain --held-out F3 --epochs 5");
  int rc4 = run_cli("--data " + std::string(kWorkdir) + "/dataset --seed 7 --out " + db +
                    " pretrain --held-out F3 --epochs 5");
  std::string ha, hb;
  for (auto& e : fs::recursive_directory_iterator(da))
    if (e.path().extension() == ".ckpt") ha = sha256_file(e.path().string());
  for (auto& e : fs::recursive_directory_iterator(db))
    if (e.path().extension() == ".ckpt") hb = sha256_file(e.path().string());
  if (rc3 != 0 || rc4 != 0 || ha.empty() || ha != hb) {
    ok = false;
    detail += "5-epoch train not bit-identical";
  } else {
    detail += "5-epoch train checkpoints bit-identical";
  }
  record(9, "determinism", ok, detail);
}

void criterion_1_zero_init(const ExperimentConfig& cfg, const Dataset& ds) {
  const std::string ckpt_path = ensure_pretrained(cfg, ds, "F3");
  LoadedCheckpoint lc = load_checkpoint(ckpt_path);

  StrategyConfig sc;
  sc.kind = StrategyKind::LoRA;
  sc.lora_rank = cfg.lora_rank;
  sc.lora_alpha = cfg.lora_alpha;
  AdaptationPlan plan = build_plan(sc, lc.store, lc.meta.config, 911);

  RandomStream rng(101);
  bool ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    const SurfaceCase& sample = ds.cases[rng.bounded(ds.cases.size())];
    Tensor base = infer_full_surface(lc.meta.config, lc.store, nullptr, sample,
                                     lc.meta.contract);
    Tensor adapted = infer_full_surface(lc.meta.config, lc.store, &plan.adapters, sample,
                                        lc.meta.contract);
    if (!bit_identical(base, adapted)) {
      ok = false;
      break;
    }
  }
  record(1, "LoRA zero-init equivalence", ok,
         ok ? "bit-identical on 20 random cases" : "prediction diverged from the base model");
}

void criterion_5_frozen(const ExperimentConfig& cfg, const Dataset& ds) {
  bool ok = true;
  std::string detail;
  for (const std::string& family : ds.manifest.families) {
    const std::string ckpt_path = ensure_pretrained(cfg, ds, family);
    FamilySplits sp = finetune_split(ds, family, cfg.master_seed, cfg.ft_seeds.front(),
                                     cfg.ft_train, cfg.ft_val);
    std::vector<const SurfaceCase*> train_cases, val_cases;
    for (size_t i : sp.train) train_cases.push_back(&ds.cases[i]);
    for (size_t i : sp.val) val_cases.push_back(&ds.cases[i]);

    for (StrategyKind kind : {StrategyKind::LFT, StrategyKind::LoRA}) {
      LoadedCheckpoint lc = load_checkpoint(ckpt_path);
      StrategyConfig sc;
      sc.kind = kind;
      sc.lora_rank = cfg.lora_rank;
      sc.lora_alpha = cfg.lora_alpha;
      sc.lft_trainable_tail = cfg.lft_trainable_tail;
      AdaptationPlan plan = build_plan(sc, lc.store, lc.meta.config, 500);
      const std::string before = hash_frozen(lc.store);
      TrainHyper hyper = cfg.finetune_hyper;  // the full 50 epochs
      hyper.seed = derive_seed(cfg.master_seed, "frozen-check-" + family);
      train(lc.meta.config, lc.store, plan, train_cases, val_cases, hyper, lc.meta.contract);
      if (hash_frozen(lc.store) != before) {
        ok = false;
        detail += family + "/" + strategy_name(kind) + " drifted; ";
      }
    }
  }
  if (ok) detail = "frozen hashes identical after 50 epochs, 5 families, LFT+LoRA";
  record(5, "frozen invariance", ok, detail);
}

struct LofoTable {
  // family -> strategy -> per-seed metrics
  std::map<std::string, std::map<std::string, std::vector<FamilyMetrics>>> cells;

  double mean_over_seeds(const std::string& fam, const std::string& strat,
                         double FamilyMetrics::*field) const {
    const auto& v = cells.at(fam).at(strat);
    double acc = 0;
    for (const auto& fm : v) acc += fm.*field;
    return acc / static_cast<double>(v.size());
  }
};

LofoTable tabulate(const LofoReport& report, const ExperimentConfig& cfg) {
  LofoTable t;
  for (const FamilyMetrics& fm : report.summaries) {
    std::string strat = fm.strategy;
    if (strat.rfind("lora", 0) == 0) strat = "lora";
    t.cells[fm.family][strat].push_back(fm);
  }
  (void)cfg;
  return t;
}

void criteria_10_11_12(const LofoTable& t, const ExperimentConfig& cfg,
                       const std::vector<std::string>& families) {
  // 10: per seed, LoRA beats FFT and LFT on >= 4 of 5 families; LoRA's
  // across-family std of pressure R2 below FFT's.
  bool c10 = true;
  std::string d10;
  for (size_t si = 0; si < cfg.ft_seeds.size(); ++si) {
    int wins = 0;
    for (const std::string& fam : families) {
      const double lora = t.cells.at(fam).at("lora")[si].r2_pressure;
      const double fft = t.cells.at(fam).at("fft")[si].r2_pressure;
      const double lft = t.cells.at(fam).at("lft")[si].r2_pressure;
      if (lora > fft && lora > lft) ++wins;
    }
    d10 += "seed" + std::to_string(cfg.ft_seeds[si]) + ":" + std::to_string(wins) + "/5 ";
    if (wins < 4) c10 = false;
  }
  auto family_std = [&](const std::string& strat) {
    std::vector<double> means;
    for (const std::string& fam : families)
      means.push_back(t.mean_over_seeds(fam, strat, &FamilyMetrics::r2_pressure));
    double m = 0;
    for (double v : means) m += v;
    m /= static_cast<double>(means.size());
    double s = 0;
    for (double v : means) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(means.size()));
  };
  const double lora_std = family_std("lora"), fft_std = family_std("fft");
  if (!(lora_std < fft_std)) c10 = false;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "| std(R2p): lora %.3f vs fft %.3f", lora_std, fft_std);
  record(10, "hierarchy LoRA >> FFT > LFT", c10, d10 + buf);

  // 11: LFT pressure R2 below LoRA on all 5 families (seed means).
  bool c11 = true;
  std::string d11;
  for (const std::string& fam : families) {
    const double lora = t.mean_over_seeds(fam, "lora", &FamilyMetrics::r2_pressure);
    const double lft = t.mean_over_seeds(fam, "lft", &FamilyMetrics::r2_pressure);
    char b[64];
    std::snprintf(b, sizeof(b), "%s: %.3f vs %.3f  ", fam.c_str(), lft, lora);
    d11 += b;
    if (!(lft < lora)) c11 = false;
  }
  record(11, "encoder-freezing failure", c11, d11);

  // 12: zero-shot field rel L2 above LoRA on all 5 families (seed means).
  bool c12 = true;
  std::string d12;
  for (const std::string& fam : families) {
    const double zs = t.mean_over_seeds(fam, "zero-shot", &FamilyMetrics::mean_rel_l2_pressure);
    const double lora = t.mean_over_seeds(fam, "lora", &FamilyMetrics::mean_rel_l2_pressure);
    char b[72];
    std::snprintf(b, sizeof(b), "%s: %.3f vs %.3f  ", fam.c_str(), zs, lora);
    d12 += b;
    if (!(zs > lora)) c12 = false;
  }
  record(12, "adaptation value vs zero-shot", c12, d12);
}

void criterion_13_ablation(const ExperimentConfig& cfg, const Dataset& ds) {
  NormAblationReport rep = run_norm_ablation(cfg, ds, true);
  const bool ok = rep.corrupted.r2_pressure < rep.consistent.r2_pressure &&
                  rep.corrupted.contract_mismatch && !rep.consistent.contract_mismatch;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "consistent R2p %.3f vs corrupted %.3f (tagged=%d)",
                rep.consistent.r2_pressure, rep.corrupted.r2_pressure,
                rep.corrupted.contract_mismatch ? 1 : 0);
  record(13, "contract ablation", ok, buf);
}

void criterion_14_data_efficiency(const ExperimentConfig& cfg, const Dataset& ds,
                                  const LofoTable& t) {
  RunArtifacts scratch = run_from_scratch(cfg, ds, "30");
  const double lora_r2 = t.cells.at(cfg.target_family).at("lora")[0].r2_total;
  const double scratch_r2 = scratch.summary.r2_total;
  const bool ok = lora_r2 >= scratch_r2;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "total-drag R2: lora %.3f vs from-scratch(30) %.3f", lora_r2,
                scratch_r2);
  record(14, "data efficiency vs from-scratch", ok, buf);
}

}  // namespace

int main() {
  fs::create_directories(kWorkdir);
  const std::string data_dir = std::string(kWorkdir) + "/dataset";
  const std::string runs_dir = std::string(kWorkdir) + "/runs";

  std::printf("== geoadapt acceptance suite ==\n");
  if (!fs::exists(data_dir + "/manifest.json")) {
    std::printf("generating dataset (5 families x 60 cases, 320 panels)...\n");
    generate_dataset(data_dir, 60, 320, 7);
  }
  Dataset ds = load_dataset(data_dir);
  ExperimentConfig cfg = desk_config(data_dir, runs_dir);

  // Fast standalone criteria.
  criterion_2_merge(cfg);
  criterion_3_accounting(cfg);
  criterion_4_gradients();
  criterion_6_oracle();
  criterion_7_metrics();

  // CLI-level determinism and contract enforcement (also produces the
  // 5-epoch checkpoint criterion 8 reuses).
  criterion_9_determinism(kWorkdir);
  criterion_8_normalization(ds, kWorkdir);

  // The full desk-scale LOFO matrix: 5 families x {zero-shot, fft, lft,
  // lora r=64} x 3 seeds. Cached stages make re-runs incremental.
  std::printf("running the LOFO matrix (this is the long stage)...\n");
  LofoReport report = run_lofo(cfg, ds);
  LofoTable table = tabulate(report, cfg);

  criterion_1_zero_init(cfg, ds);
  criterion_5_frozen(cfg, ds);
  criteria_10_11_12(table, cfg, ds.manifest.families);
  criterion_13_ablation(cfg, ds);
  criterion_14_data_efficiency(cfg, ds, table);

  write_consolidated_report(runs_dir);

  size_t passed = 0;
  for (const Criterion& c : g_results)
    if (c.pass) ++passed;
  std::printf("== %zu/%zu criteria passed ==\n", passed, g_results.size());
  return passed == g_results.size() ? 0 : 1;
}
