#include "geoadapt/contract.hpp"

#include <cmath>

#include "json.hpp"

#include "geoadapt/sha256.hpp"

using ordered_json = nlohmann::ordered_json;

namespace geoadapt {

std::string NormalizationContract::canonical_serialization() const {
  std::string s = "geoadapt-contract v1";
  s += "|mean=";
  for (size_t i = 0; i < 3; ++i) s += (i ? "," : "") + fmt17(field_mean[i]);
  s += "|std=";
  for (size_t i = 0; i < 3; ++i) s += (i ? "," : "") + fmt17(field_std[i]);
  s += "|coord_min=";
  for (size_t i = 0; i < 2; ++i) s += (i ? "," : "") + fmt17(coord_min[i]);
  s += "|coord_max=";
  for (size_t i = 0; i < 2; ++i) s += (i ? "," : "") + fmt17(coord_max[i]);
  s += "|scale=" + fmt17(coord_scale);
  return s;
}

std::string NormalizationContract::fingerprint() const {
  return sha256_hex(canonical_serialization());
}

std::string NormalizationContract::to_json_string() const {
  ordered_json j;
  j["schema"] = "geoadapt-contract v1";
  j["field_mean"] = field_mean;
  j["field_std"] = field_std;
  j["coord_min"] = coord_min;
  j["coord_max"] = coord_max;
  j["coord_scale"] = coord_scale;
  j["source_manifest_hash"] = source_manifest_hash;
  j["fingerprint"] = fingerprint();
  return j.dump();
}

NormalizationContract NormalizationContract::from_json_string(const std::string& s) {
  ordered_json j = ordered_json::parse(s);
  NormalizationContract c;
  auto fm = j.at("field_mean").get<std::vector<double>>();
  auto fstd = j.at("field_std").get<std::vector<double>>();
  auto cmin = j.at("coord_min").get<std::vector<double>>();
  auto cmax = j.at("coord_max").get<std::vector<double>>();
  std::copy(fm.begin(), fm.end(), c.field_mean.begin());
  std::copy(fstd.begin(), fstd.end(), c.field_std.begin());
  std::copy(cmin.begin(), cmin.end(), c.coord_min.begin());
  std::copy(cmax.begin(), cmax.end(), c.coord_max.begin());
  c.coord_scale = j.at("coord_scale").get<double>();
  c.source_manifest_hash = j.value("source_manifest_hash", std::string{});
  if (j.contains("fingerprint") && j.at("fingerprint").get<std::string>() != c.fingerprint())
    throw ContractMismatchError("contract: stored fingerprint does not match contents");
  return c;
}

NormalizationContract fit_contract(const std::vector<const SurfaceCase*>& cases,
                                   const std::string& source_manifest_hash) {
  if (cases.size() < 2) throw ConfigError("fit_contract: needs at least 2 cases");
  NormalizationContract c;
  c.source_manifest_hash = source_manifest_hash;
  c.coord_min = {std::numeric_limits<double>::infinity(),
                 std::numeric_limits<double>::infinity()};
  c.coord_max = {-std::numeric_limits<double>::infinity(),
                 -std::numeric_limits<double>::infinity()};

  // Two-pass population moments per component.
  std::array<double, 3> sum{};
  size_t n = 0;
  for (const SurfaceCase* sc : cases) {
    for (size_t i = 0; i < sc->panel_count(); ++i) {
      sum[0] += sc->pressure[i];
      sum[1] += sc->friction[i].x;
      sum[2] += sc->friction[i].y;
      c.coord_min[0] = std::min(c.coord_min[0], sc->midpoints[i].x);
      c.coord_min[1] = std::min(c.coord_min[1], sc->midpoints[i].y);
      c.coord_max[0] = std::max(c.coord_max[0], sc->midpoints[i].x);
      c.coord_max[1] = std::max(c.coord_max[1], sc->midpoints[i].y);
      ++n;
    }
  }
  for (size_t k = 0; k < 3; ++k) c.field_mean[k] = sum[k] / static_cast<double>(n);
  std::array<double, 3> var{};
  for (const SurfaceCase* sc : cases) {
    for (size_t i = 0; i < sc->panel_count(); ++i) {
      const std::array<double, 3> v{sc->pressure[i], sc->friction[i].x, sc->friction[i].y};
      for (size_t k = 0; k < 3; ++k) var[k] += (v[k] - c.field_mean[k]) * (v[k] - c.field_mean[k]);
    }
  }
  for (size_t k = 0; k < 3; ++k) {
    c.field_std[k] = std::sqrt(var[k] / static_cast<double>(n));
    if (c.field_std[k] <= 0.0)
      throw ConfigError("fit_contract: zero variance in field component " + std::to_string(k));
  }
  for (size_t a = 0; a < 2; ++a)
    if (!(c.coord_max[a] > c.coord_min[a]))
      throw ConfigError("fit_contract: degenerate coordinate extent on axis " +
                        std::to_string(a));
  return c;
}

Tensor normalize_coords(const std::vector<Vec2>& points, const NormalizationContract& c) {
  Tensor t({points.size(), 2});
  for (size_t i = 0; i < points.size(); ++i) {
    t.at(i, 0) = (points[i].x - c.coord_min[0]) / (c.coord_max[0] - c.coord_min[0]) *
                 c.coord_scale;
    t.at(i, 1) = (points[i].y - c.coord_min[1]) / (c.coord_max[1] - c.coord_min[1]) *
                 c.coord_scale;
  }
  return t;
}

Tensor normalize_fields(const SurfaceCase& sc, const NormalizationContract& c) {
  Tensor t({sc.panel_count(), 3});
  for (size_t i = 0; i < sc.panel_count(); ++i) {
    t.at(i, 0) = (sc.pressure[i] - c.field_mean[0]) / c.field_std[0];
    t.at(i, 1) = (sc.friction[i].x - c.field_mean[1]) / c.field_std[1];
    t.at(i, 2) = (sc.friction[i].y - c.field_mean[2]) / c.field_std[2];
  }
  return t;
}

Tensor denormalize_fields(const Tensor& normed, const NormalizationContract& c) {
  if (normed.rank() != 2 || normed.cols() != 3)
    throw DimensionError("denormalize_fields: expects [n, 3]");
  Tensor t(normed.shape());
  for (size_t i = 0; i < normed.rows(); ++i)
    for (size_t k = 0; k < 3; ++k)
      t.at(i, k) = normed.at(i, k) * c.field_std[k] + c.field_mean[k];
  return t;
}

ContractCheck verify_contract(const NormalizationContract& checkpoint_contract,
                              const NormalizationContract& runtime_contract,
                              bool allow_override) {
  const std::string a = checkpoint_contract.fingerprint();
  const std::string b = runtime_contract.fingerprint();
  if (a == b) return ContractCheck::Ok;
  if (!allow_override)
    throw ContractMismatchError(
        "normalization contract mismatch: checkpoint fingerprint " + a +
        " vs runtime fingerprint " + b +
        " (pass --allow-contract-override to evaluate anyway; results will be tagged)");
  return ContractCheck::MismatchOverridden;
}

}  // namespace geoadapt
