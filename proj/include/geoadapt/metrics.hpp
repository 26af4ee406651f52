#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geoadapt/geometry.hpp"

namespace geoadapt {

// Integrated drag components, in Newtons per unit depth. Sign convention:
// force on the body, +x pointing downstream.
struct ForceBreakdown {
  double d_pressure = 0.0;
  double d_shear = 0.0;
  double d_total = 0.0;
};

ForceBreakdown integrate_forces(const std::vector<double>& pressure,
                                const std::vector<Vec2>& tau,
                                const std::vector<Vec2>& normals,
                                const std::vector<double>& lengths);

// 1 - SSE/SST. Throws ConfigError on n < 2 or zero variance of y_true.
double r_squared(const std::vector<double>& y_true, const std::vector<double>& y_pred);

std::pair<double, double> mae_rmse(const std::vector<double>& y_true,
                                   const std::vector<double>& y_pred);

// ||pred - true||_2 / ||true||_2 over all entries (vector fields flattened).
double rel_l2(const std::vector<double>& field_true, const std::vector<double>& field_pred);

// RMSE / (max - min of truth) * 100.
double nrmse_percent(const std::vector<double>& field_true,
                     const std::vector<double>& field_pred);

// One evaluated test case.
struct CaseMetricsRow {
  std::string case_id;
  std::string family;
  std::string strategy;
  int lora_rank = 0;
  uint64_t seed = 0;
  bool contract_mismatch = false;
  double dp_true = 0, dp_pred = 0;
  double ds_true = 0, ds_pred = 0;
  double dt_true = 0, dt_pred = 0;
  double rel_l2_pressure = 0, nrmse_pressure_pct = 0;
  double rel_l2_friction = 0, nrmse_friction_pct = 0;
  std::string dataset_hash;
  std::string checkpoint_fingerprint;
};

// Per-family aggregate. Force R2 across cases; MAE/RMSE on total drag;
// field metrics as mean +/- population std over cases.
struct FamilyMetrics {
  std::string family;
  std::string strategy;
  int lora_rank = 0;
  uint64_t seed = 0;
  bool contract_mismatch = false;
  size_t n_cases = 0;
  double r2_pressure = 0, r2_shear = 0, r2_total = 0;
  double mae_newton = 0, rmse_newton = 0;
  double mean_rel_l2_pressure = 0, std_rel_l2_pressure = 0;
  double mean_nrmse_pressure = 0, std_nrmse_pressure = 0;
  double mean_rel_l2_friction = 0, std_rel_l2_friction = 0;
  double mean_nrmse_friction = 0, std_nrmse_friction = 0;
  std::string dataset_hash;
  std::string checkpoint_fingerprint;
};

FamilyMetrics aggregate_rows(const std::vector<CaseMetricsRow>& rows);

void write_percase_csv(const std::string& path, const std::vector<CaseMetricsRow>& rows);
std::vector<CaseMetricsRow> read_percase_csv(const std::string& path);
void write_summary_csv(const std::string& path, const std::vector<FamilyMetrics>& summaries);

}  // namespace geoadapt
