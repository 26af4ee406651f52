#pragma once

#include <array>
#include <string>
#include <vector>

#include "geoadapt/synth.hpp"

namespace geoadapt {

struct CaseEntry {
  std::string path;  // relative to the dataset directory
  std::string case_id;
  std::string family;
  std::array<double, 10> params{};
  ForceBreakdown forces;
  std::string sha256;
};

struct DatasetManifest {
  int schema_version = 1;
  uint64_t seed = 0;
  FlowConstants flow;
  size_t panels = 0;
  std::vector<std::string> families;
  std::vector<CaseEntry> cases;
  size_t rejection_count = 0;
  std::string manifest_hash;  // sha256 of manifest.json, filled on load
};

void write_case_file(const std::string& path, const SurfaceCase& c, size_t panels);
SurfaceCase read_case_file(const std::string& path);

// Generates cases_per_family geometries per family via LHS over 10 levels,
// runs the oracle, writes one case file per geometry plus manifest.json.
// Rejected geometries are resampled with an incremented sub-seed and logged.
DatasetManifest generate_dataset(const std::string& out_dir, size_t cases_per_family,
                                 size_t panels, uint64_t seed,
                                 const FlowConstants& flow = FlowConstants{});

struct Dataset {
  DatasetManifest manifest;
  std::vector<SurfaceCase> cases;  // same order as manifest.cases

  std::vector<size_t> family_case_indices(const std::string& family) const;
  const SurfaceCase& by_id(const std::string& case_id) const;
};

Dataset load_dataset(const std::string& dir);

}  // namespace geoadapt
