#include "geoadapt/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "geoadapt/lhs.hpp"
#include "geoadapt/sha256.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace geoadapt {

void write_case_file(const std::string& path, const SurfaceCase& c, size_t panels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_case_file: cannot open " + path);
  out << "# geoadapt-case v1, family=" << c.family << ", params=";
  for (size_t i = 0; i < 10; ++i) out << (i ? " " : "") << fmt17(c.doe_params[i]);
  out << ", rho=" << fmt17(c.flow.rho) << ", U=" << fmt17(c.flow.u_inf)
      << ", nu=" << fmt17(c.flow.nu) << ", P=" << panels << "\n";
  for (size_t i = 0; i < c.panel_count(); ++i) {
    out << fmt17(c.midpoints[i].x) << ',' << fmt17(c.midpoints[i].y) << ','
        << fmt17(c.normals[i].x) << ',' << fmt17(c.normals[i].y) << ','
        << fmt17(c.tangents[i].x) << ',' << fmt17(c.tangents[i].y) << ','
        << fmt17(c.lengths[i]) << ',' << fmt17(c.pressure[i]) << ','
        << fmt17(c.friction[i].x) << ',' << fmt17(c.friction[i].y) << "\n";
  }
}

namespace {

std::string header_field(const std::string& header, const std::string& key) {
  const std::string needle = key + "=";
  const size_t pos = header.find(needle);
  if (pos == std::string::npos) throw IoError("case file: missing header field " + key);
  size_t end = header.find(',', pos);
  if (end == std::string::npos) end = header.size();
  return header.substr(pos + needle.size(), end - pos - needle.size());
}

}  // namespace

SurfaceCase read_case_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_case_file: cannot open " + path);
  std::string header;
  std::getline(in, header);
  if (header.rfind("# geoadapt-case v1", 0) != 0)
    throw IoError("read_case_file: bad header in " + path);

  SurfaceCase c;
  c.family = header_field(header, "family");
  {
    std::stringstream ps(header_field(header, "params"));
    for (size_t i = 0; i < 10; ++i) ps >> c.doe_params[i];
  }
  c.flow.rho = std::stod(header_field(header, "rho"));
  c.flow.u_inf = std::stod(header_field(header, "U"));
  c.flow.nu = std::stod(header_field(header, "nu"));
  const size_t panels = std::stoul(header_field(header, "P"));

  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::array<double, 10> v{};
    std::string tok;
    for (size_t i = 0; i < 10; ++i) {
      if (!std::getline(ss, tok, ',')) throw IoError("read_case_file: short row in " + path);
      v[i] = std::stod(tok);
    }
    c.midpoints.push_back({v[0], v[1]});
    c.normals.push_back({v[2], v[3]});
    c.tangents.push_back({v[4], v[5]});
    c.lengths.push_back(v[6]);
    c.pressure.push_back(v[7]);
    c.friction.push_back({v[8], v[9]});
  }
  if (c.panel_count() != panels)
    throw IoError("read_case_file: panel count mismatch in " + path);
  c.forces = integrate_forces(c.pressure, c.friction, c.normals, c.lengths);
  return c;
}

DatasetManifest generate_dataset(const std::string& out_dir, size_t cases_per_family,
                                 size_t panels, uint64_t seed, const FlowConstants& flow) {
  fs::create_directories(fs::path(out_dir) / "cases");

  DatasetManifest man;
  man.seed = seed;
  man.flow = flow;
  man.panels = panels;

  ordered_json rejections = ordered_json::array();

  for (const FamilySpec& spec : five_families()) {
    man.families.push_back(spec.family_id);
    auto levels = lhs_sample(10, 10, static_cast<int>(cases_per_family),
                             derive_seed(seed, "doe", fnv1a64(spec.family_id)));
    for (size_t idx = 0; idx < cases_per_family; ++idx) {
      std::array<double, 10> params{};
      for (size_t d = 0; d < 10; ++d) {
        const auto [lo, hi] = spec.param_bounds[d];
        params[d] = lo + (static_cast<double>(levels[idx][d]) + 0.5) * (hi - lo) / 10.0;
      }

      SurfaceCase c;
      size_t attempt = 0;
      for (;;) {
        try {
          c = synthesize_case(spec, params, flow, panels);
          break;
        } catch (const RejectedGeometryError& e) {
          ordered_json rej;
          rej["family"] = spec.family_id;
          rej["index"] = idx;
          rej["attempt"] = attempt;
          rej["reason"] = e.what();
          rejections.push_back(rej);
          ++man.rejection_count;
          if (++attempt > 50)
            throw OracleError("generate_dataset: resampling failed for " + spec.family_id);
          RandomStream rng(derive_seed(seed, "resample-" + spec.family_id, idx * 64 + attempt));
          for (size_t d = 0; d < 10; ++d) {
            const auto [lo, hi] = spec.param_bounds[d];
            params[d] = lo + (static_cast<double>(rng.bounded(10)) + 0.5) * (hi - lo) / 10.0;
          }
        }
      }

      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "_%03zu", idx);
      c.case_id = spec.family_id + suffix;
      validate_case(c);

      CaseEntry entry;
      entry.case_id = c.case_id;
      entry.family = spec.family_id;
      entry.params = params;
      entry.forces = c.forces;
      entry.path = "cases/" + c.case_id + ".csv";
      write_case_file((fs::path(out_dir) / entry.path).string(), c, panels);
      entry.sha256 = sha256_file((fs::path(out_dir) / entry.path).string());
      man.cases.push_back(std::move(entry));
    }
  }

  ordered_json j;
  j["schema_version"] = man.schema_version;
  j["seed"] = man.seed;
  j["flow"] = {{"rho", flow.rho}, {"U", flow.u_inf}, {"nu", flow.nu}, {"p_ref", flow.p_ref}};
  j["panels"] = man.panels;
  j["families"] = man.families;
  j["cases"] = ordered_json::array();
  for (const CaseEntry& e : man.cases) {
    ordered_json c;
    c["path"] = e.path;
    c["case_id"] = e.case_id;
    c["family"] = e.family;
    c["params"] = e.params;
    c["forces"] = {{"pressure", e.forces.d_pressure},
                   {"friction", e.forces.d_shear},
                   {"total", e.forces.d_total}};
    c["sha256"] = e.sha256;
    j["cases"].push_back(c);
  }
  j["rejections"] = rejections;

  const std::string man_path = (fs::path(out_dir) / "manifest.json").string();
  std::ofstream out(man_path, std::ios::binary);
  if (!out) throw IoError("generate_dataset: cannot write manifest");
  out << j.dump(2) << "\n";
  out.close();
  man.manifest_hash = sha256_file(man_path);
  return man;
}

Dataset load_dataset(const std::string& dir) {
  const std::string man_path = (fs::path(dir) / "manifest.json").string();
  std::ifstream in(man_path, std::ios::binary);
  if (!in) throw IoError("load_dataset: cannot open " + man_path);
  ordered_json j = ordered_json::parse(in);

  Dataset ds;
  ds.manifest.schema_version = j.at("schema_version").get<int>();
  ds.manifest.seed = j.at("seed").get<uint64_t>();
  ds.manifest.flow.rho = j.at("flow").at("rho").get<double>();
  ds.manifest.flow.u_inf = j.at("flow").at("U").get<double>();
  ds.manifest.flow.nu = j.at("flow").at("nu").get<double>();
  ds.manifest.flow.p_ref = j.at("flow").at("p_ref").get<double>();
  ds.manifest.panels = j.at("panels").get<size_t>();
  ds.manifest.families = j.at("families").get<std::vector<std::string>>();
  ds.manifest.rejection_count = j.value("rejections", ordered_json::array()).size();
  ds.manifest.manifest_hash = sha256_file(man_path);

  for (const auto& c : j.at("cases")) {
    CaseEntry e;
    e.path = c.at("path").get<std::string>();
    e.case_id = c.at("case_id").get<std::string>();
    e.family = c.at("family").get<std::string>();
    auto pv = c.at("params").get<std::vector<double>>();
    if (pv.size() != 10) throw IoError("load_dataset: bad params length");
    std::copy(pv.begin(), pv.end(), e.params.begin());
    e.forces.d_pressure = c.at("forces").at("pressure").get<double>();
    e.forces.d_shear = c.at("forces").at("friction").get<double>();
    e.forces.d_total = c.at("forces").at("total").get<double>();
    e.sha256 = c.at("sha256").get<std::string>();

    const std::string full = (fs::path(dir) / e.path).string();
    if (sha256_file(full) != e.sha256)
      throw IoError("load_dataset: hash mismatch for " + e.path);
    SurfaceCase sc = read_case_file(full);
    sc.case_id = e.case_id;
    ds.manifest.cases.push_back(e);
    ds.cases.push_back(std::move(sc));
  }
  return ds;
}

std::vector<size_t> Dataset::family_case_indices(const std::string& family) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < manifest.cases.size(); ++i)
    if (manifest.cases[i].family == family) out.push_back(i);
  return out;
}

const SurfaceCase& Dataset::by_id(const std::string& case_id) const {
  for (size_t i = 0; i < cases.size(); ++i)
    if (cases[i].case_id == case_id) return cases[i];
  throw ConfigError("dataset: unknown case id " + case_id);
}

}  // namespace geoadapt
