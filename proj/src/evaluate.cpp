#include "geoadapt/evaluate.hpp"

#include <cmath>
#include <fstream>
#include <thread>

namespace geoadapt {

namespace {

CaseMetricsRow evaluate_one(const ModelConfig& cfg, ParameterStore& store,
                            const AdapterMap* adapters, const SurfaceCase& sc,
                            const NormalizationContract& contract, const EvalTags& tags) {
  Tensor pred = infer_full_surface(cfg, store, adapters, sc, contract);
  const size_t p = sc.panel_count();

  std::vector<double> pred_pressure(p);
  std::vector<Vec2> pred_friction(p);
  for (size_t i = 0; i < p; ++i) {
    pred_pressure[i] = pred.at(i, 0);
    pred_friction[i] = {pred.at(i, 1), pred.at(i, 2)};
  }
  ForceBreakdown fb_pred =
      integrate_forces(pred_pressure, pred_friction, sc.normals, sc.lengths);
  ForceBreakdown fb_true =
      integrate_forces(sc.pressure, sc.friction, sc.normals, sc.lengths);

  CaseMetricsRow row;
  row.case_id = sc.case_id;
  row.family = sc.family;
  row.strategy = tags.strategy;
  row.lora_rank = tags.lora_rank;
  row.seed = tags.seed;
  row.contract_mismatch = tags.contract_mismatch;
  row.dataset_hash = tags.dataset_hash;
  row.checkpoint_fingerprint = tags.checkpoint_fingerprint;
  row.dp_true = fb_true.d_pressure;
  row.dp_pred = fb_pred.d_pressure;
  row.ds_true = fb_true.d_shear;
  row.ds_pred = fb_pred.d_shear;
  row.dt_true = fb_true.d_total;
  row.dt_pred = fb_pred.d_total;

  row.rel_l2_pressure = rel_l2(sc.pressure, pred_pressure);
  row.nrmse_pressure_pct = nrmse_percent(sc.pressure, pred_pressure);

  std::vector<double> tau_true_flat(2 * p), tau_pred_flat(2 * p);
  std::vector<double> mag_true(p), mag_pred(p);
  for (size_t i = 0; i < p; ++i) {
    tau_true_flat[2 * i] = sc.friction[i].x;
    tau_true_flat[2 * i + 1] = sc.friction[i].y;
    tau_pred_flat[2 * i] = pred_friction[i].x;
    tau_pred_flat[2 * i + 1] = pred_friction[i].y;
    mag_true[i] = sc.friction[i].norm();
    mag_pred[i] = pred_friction[i].norm();
  }
  row.rel_l2_friction = rel_l2(tau_true_flat, tau_pred_flat);
  row.nrmse_friction_pct = nrmse_percent(mag_true, mag_pred);
  return row;
}

}  // namespace

std::vector<CaseMetricsRow> evaluate_family(const ModelConfig& cfg, ParameterStore& store,
                                            const AdapterMap* adapters,
                                            const std::vector<const SurfaceCase*>& test_cases,
                                            const NormalizationContract& contract,
                                            const EvalTags& tags) {
  std::vector<CaseMetricsRow> rows(test_cases.size());
  const size_t n_workers = std::min<size_t>(2, test_cases.size());
  if (n_workers <= 1) {
    for (size_t i = 0; i < test_cases.size(); ++i)
      rows[i] = evaluate_one(cfg, store, adapters, *test_cases[i], contract, tags);
    return rows;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(n_workers);
  for (size_t w = 0; w < n_workers; ++w) {
    threads.emplace_back([&, w]() {
      try {
        for (size_t i = w; i < test_cases.size(); i += n_workers)
          rows[i] = evaluate_one(cfg, store, adapters, *test_cases[i], contract, tags);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

void export_field_errors(const std::string& path, const ModelConfig& cfg,
                         ParameterStore& store, const AdapterMap* adapters,
                         const std::vector<const SurfaceCase*>& cases,
                         const NormalizationContract& contract) {
  std::ofstream out(path);
  if (!out) throw IoError("export_field_errors: cannot open " + path);
  out << "case_id,panel,x,y,p_true,p_pred,taux_true,taux_pred,tauy_true,tauy_pred\n";
  for (const SurfaceCase* sc : cases) {
    Tensor pred = infer_full_surface(cfg, store, adapters, *sc, contract);
    for (size_t i = 0; i < sc->panel_count(); ++i) {
      out << sc->case_id << ',' << i << ',' << fmt17(sc->midpoints[i].x) << ','
          << fmt17(sc->midpoints[i].y) << ',' << fmt17(sc->pressure[i]) << ','
          << fmt17(pred.at(i, 0)) << ',' << fmt17(sc->friction[i].x) << ','
          << fmt17(pred.at(i, 1)) << ',' << fmt17(sc->friction[i].y) << ','
          << fmt17(pred.at(i, 2)) << "\n";
    }
  }
}

}  // namespace geoadapt
