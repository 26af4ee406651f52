#include "geoadapt/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace geoadapt {

ForceBreakdown integrate_forces(const std::vector<double>& pressure,
                                const std::vector<Vec2>& tau,
                                const std::vector<Vec2>& normals,
                                const std::vector<double>& lengths) {
  const size_t p = pressure.size();
  if (tau.size() != p || normals.size() != p || lengths.size() != p)
    throw DimensionError("integrate_forces: field/profile length mismatch");
  ForceBreakdown fb;
  for (size_t i = 0; i < p; ++i) {
    fb.d_pressure += -pressure[i] * normals[i].x * lengths[i];
    fb.d_shear += tau[i].x * lengths[i];
  }
  fb.d_total = fb.d_pressure + fb.d_shear;
  return fb;
}

double r_squared(const std::vector<double>& y_true, const std::vector<double>& y_pred) {
  const size_t n = y_true.size();
  if (n < 2 || y_pred.size() != n)
    throw ConfigError("r_squared: needs n >= 2 matched samples");
  double mean = 0.0;
  for (double v : y_true) mean += v;
  mean /= static_cast<double>(n);
  double sse = 0.0, sst = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sse += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
    sst += (y_true[i] - mean) * (y_true[i] - mean);
  }
  if (sst <= 0.0) throw ConfigError("r_squared: zero variance in ground truth");
  return 1.0 - sse / sst;
}

std::pair<double, double> mae_rmse(const std::vector<double>& y_true,
                                   const std::vector<double>& y_pred) {
  const size_t n = y_true.size();
  if (n < 1 || y_pred.size() != n) throw ConfigError("mae_rmse: needs n >= 1 matched samples");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double e = y_pred[i] - y_true[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  return {abs_sum / static_cast<double>(n), std::sqrt(sq_sum / static_cast<double>(n))};
}

double rel_l2(const std::vector<double>& field_true, const std::vector<double>& field_pred) {
  const size_t n = field_true.size();
  if (field_pred.size() != n || n == 0) throw ConfigError("rel_l2: length mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < n; ++i) {
    num += (field_pred[i] - field_true[i]) * (field_pred[i] - field_true[i]);
    den += field_true[i] * field_true[i];
  }
  if (den <= 0.0) throw ConfigError("rel_l2: zero-norm ground truth");
  return std::sqrt(num / den);
}

double nrmse_percent(const std::vector<double>& field_true,
                     const std::vector<double>& field_pred) {
  const size_t n = field_true.size();
  if (field_pred.size() != n || n == 0) throw ConfigError("nrmse: length mismatch");
  double lo = field_true[0], hi = field_true[0], sq = 0.0;
  for (size_t i = 0; i < n; ++i) {
    lo = std::min(lo, field_true[i]);
    hi = std::max(hi, field_true[i]);
    sq += (field_pred[i] - field_true[i]) * (field_pred[i] - field_true[i]);
  }
  if (hi - lo <= 0.0) throw ConfigError("nrmse: zero range in ground truth");
  return std::sqrt(sq / static_cast<double>(n)) / (hi - lo) * 100.0;
}

FamilyMetrics aggregate_rows(const std::vector<CaseMetricsRow>& rows) {
  if (rows.empty()) throw ConfigError("aggregate_rows: no rows");
  FamilyMetrics fm;
  fm.family = rows.front().family;
  fm.strategy = rows.front().strategy;
  fm.lora_rank = rows.front().lora_rank;
  fm.seed = rows.front().seed;
  fm.contract_mismatch = rows.front().contract_mismatch;
  fm.dataset_hash = rows.front().dataset_hash;
  fm.checkpoint_fingerprint = rows.front().checkpoint_fingerprint;
  fm.n_cases = rows.size();

  std::vector<double> dp_t, dp_p, ds_t, ds_p, dt_t, dt_p;
  for (const auto& r : rows) {
    dp_t.push_back(r.dp_true);
    dp_p.push_back(r.dp_pred);
    ds_t.push_back(r.ds_true);
    ds_p.push_back(r.ds_pred);
    dt_t.push_back(r.dt_true);
    dt_p.push_back(r.dt_pred);
  }
  fm.r2_pressure = r_squared(dp_t, dp_p);
  fm.r2_shear = r_squared(ds_t, ds_p);
  fm.r2_total = r_squared(dt_t, dt_p);
  auto [mae, rmse] = mae_rmse(dt_t, dt_p);
  fm.mae_newton = mae;
  fm.rmse_newton = rmse;

  auto mean_std = [&](auto getter, double& mean_out, double& std_out) {
    double m = 0.0;
    for (const auto& r : rows) m += getter(r);
    m /= static_cast<double>(rows.size());
    double v = 0.0;
    for (const auto& r : rows) v += (getter(r) - m) * (getter(r) - m);
    v /= static_cast<double>(rows.size());  // population std
    mean_out = m;
    std_out = std::sqrt(v);
  };
  mean_std([](const CaseMetricsRow& r) { return r.rel_l2_pressure; }, fm.mean_rel_l2_pressure,
           fm.std_rel_l2_pressure);
  mean_std([](const CaseMetricsRow& r) { return r.nrmse_pressure_pct; }, fm.mean_nrmse_pressure,
           fm.std_nrmse_pressure);
  mean_std([](const CaseMetricsRow& r) { return r.rel_l2_friction; }, fm.mean_rel_l2_friction,
           fm.std_rel_l2_friction);
  mean_std([](const CaseMetricsRow& r) { return r.nrmse_friction_pct; }, fm.mean_nrmse_friction,
           fm.std_nrmse_friction);
  return fm;
}

namespace {
const char* kPercaseHeader =
    "case_id,family,strategy,lora_rank,seed,contract_mismatch,"
    "dp_true,dp_pred,ds_true,ds_pred,dt_true,dt_pred,"
    "rel_l2_pressure,nrmse_pressure_pct,rel_l2_friction,nrmse_friction_pct,"
    "dataset_hash,checkpoint_fingerprint";
}

void write_percase_csv(const std::string& path, const std::vector<CaseMetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("write_percase_csv: cannot open " + path);
  out << kPercaseHeader << "\n";
  for (const auto& r : rows) {
    out << r.case_id << ',' << r.family << ',' << r.strategy << ',' << r.lora_rank << ','
        << r.seed << ',' << (r.contract_mismatch ? 1 : 0) << ',' << fmt17(r.dp_true) << ','
        << fmt17(r.dp_pred) << ',' << fmt17(r.ds_true) << ',' << fmt17(r.ds_pred) << ','
        << fmt17(r.dt_true) << ',' << fmt17(r.dt_pred) << ',' << fmt17(r.rel_l2_pressure) << ','
        << fmt17(r.nrmse_pressure_pct) << ',' << fmt17(r.rel_l2_friction) << ','
        << fmt17(r.nrmse_friction_pct) << ',' << r.dataset_hash << ','
        << r.checkpoint_fingerprint << "\n";
  }
}

std::vector<CaseMetricsRow> read_percase_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_percase_csv: cannot open " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<CaseMetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> cols;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
    if (cols.size() != 18) throw IoError("read_percase_csv: malformed row");
    CaseMetricsRow r;
    r.case_id = cols[0];
    r.family = cols[1];
    r.strategy = cols[2];
    r.lora_rank = std::stoi(cols[3]);
    r.seed = std::stoull(cols[4]);
    r.contract_mismatch = cols[5] == "1";
    r.dp_true = std::stod(cols[6]);
    r.dp_pred = std::stod(cols[7]);
    r.ds_true = std::stod(cols[8]);
    r.ds_pred = std::stod(cols[9]);
    r.dt_true = std::stod(cols[10]);
    r.dt_pred = std::stod(cols[11]);
    r.rel_l2_pressure = std::stod(cols[12]);
    r.nrmse_pressure_pct = std::stod(cols[13]);
    r.rel_l2_friction = std::stod(cols[14]);
    r.nrmse_friction_pct = std::stod(cols[15]);
    r.dataset_hash = cols[16];
    r.checkpoint_fingerprint = cols[17];
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_summary_csv(const std::string& path, const std::vector<FamilyMetrics>& summaries) {
  std::ofstream out(path);
  if (!out) throw IoError("write_summary_csv: cannot open " + path);
  out << "family,strategy,lora_rank,seed,contract_mismatch,n_cases,"
         "r2_pressure,r2_shear,r2_total,mae_newton,rmse_newton,"
         "rel_l2_pressure_mean,rel_l2_pressure_std,nrmse_pressure_mean,nrmse_pressure_std,"
         "rel_l2_friction_mean,rel_l2_friction_std,nrmse_friction_mean,nrmse_friction_std,"
         "dataset_hash,checkpoint_fingerprint\n";
  for (const auto& s : summaries) {
    out << s.family << ',' << s.strategy << ',' << s.lora_rank << ',' << s.seed << ','
        << (s.contract_mismatch ? 1 : 0) << ',' << s.n_cases << ',' << fmt17(s.r2_pressure)
        << ',' << fmt17(s.r2_shear) << ',' << fmt17(s.r2_total) << ',' << fmt17(s.mae_newton)
        << ',' << fmt17(s.rmse_newton)
        << ',' << fmt17(s.mean_rel_l2_pressure) << ',' << fmt17(s.std_rel_l2_pressure) << ','
        << fmt17(s.mean_nrmse_pressure) << ',' << fmt17(s.std_nrmse_pressure) << ','
        << fmt17(s.mean_rel_l2_friction) << ',' << fmt17(s.std_rel_l2_friction) << ','
        << fmt17(s.mean_nrmse_friction) << ',' << fmt17(s.std_nrmse_friction) << ','
        << s.dataset_hash << ',' << s.checkpoint_fingerprint << "\n";
  }
}

}  // namespace geoadapt
