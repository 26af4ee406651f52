#include "geoadapt/registry.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "geoadapt/sha256.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace geoadapt {

AdapterRegistry AdapterRegistry::open(const std::string& dir,
                                      const std::string& backbone_fingerprint) {
  AdapterRegistry reg;
  reg.dir_ = dir;
  reg.backbone_fingerprint_ = backbone_fingerprint;
  fs::create_directories(dir);
  const std::string index = (fs::path(dir) / "registry.json").string();
  if (fs::exists(index)) {
    std::ifstream in(index);
    ordered_json j = ordered_json::parse(in);
    const std::string existing = j.at("backbone_fingerprint").get<std::string>();
    if (existing != backbone_fingerprint)
      throw ConfigError("registry: directory is bound to backbone " + existing +
                        ", not " + backbone_fingerprint);
    for (const auto& [family, e] : j.at("adapters").items()) {
      Entry entry;
      entry.family = family;
      entry.path = e.at("path").get<std::string>();
      entry.adapter_sha256 = e.at("sha256").get<std::string>();
      entry.base_fingerprint = e.at("base_fingerprint").get<std::string>();
      entry.rank = e.at("r").get<int>();
      entry.alpha = e.at("alpha").get<double>();
      entry.r2_pressure = e.at("metrics").at("r2_pressure").get<double>();
      entry.rel_l2_pressure = e.at("metrics").at("rel_l2_pressure").get<double>();
      reg.entries_.push_back(std::move(entry));
    }
  }
  return reg;
}

void AdapterRegistry::save() const {
  ordered_json j;
  j["backbone_fingerprint"] = backbone_fingerprint_;
  ordered_json adapters = ordered_json::object();
  for (const Entry& e : entries_) {
    ordered_json a;
    a["path"] = e.path;
    a["sha256"] = e.adapter_sha256;
    a["base_fingerprint"] = e.base_fingerprint;
    a["r"] = e.rank;
    a["alpha"] = e.alpha;
    a["metrics"] = {{"r2_pressure", e.r2_pressure}, {"rel_l2_pressure", e.rel_l2_pressure}};
    adapters[e.family] = a;
  }
  j["adapters"] = adapters;
  std::ofstream out((fs::path(dir_) / "registry.json").string());
  out << j.dump(2) << "\n";
}

void AdapterRegistry::put(const Entry& entry) {
  if (entry.base_fingerprint != backbone_fingerprint_)
    throw ConfigError("registry: adapter for family " + entry.family +
                      " was trained against backbone " + entry.base_fingerprint +
                      ", registry is bound to " + backbone_fingerprint_);
  const std::string full = (fs::path(dir_) / entry.path).string();
  if (!fs::exists(full)) throw IoError("registry: adapter file missing: " + full);
  Entry stored = entry;
  stored.adapter_sha256 = sha256_file(full);
  for (auto& e : entries_) {
    if (e.family == entry.family) {
      e = stored;
      save();
      return;
    }
  }
  entries_.push_back(stored);
  save();
}

bool AdapterRegistry::has(const std::string& family) const {
  for (const auto& e : entries_)
    if (e.family == family) return true;
  return false;
}

AdapterRegistry::Entry AdapterRegistry::get(const std::string& family) const {
  for (const auto& e : entries_) {
    if (e.family != family) continue;
    const std::string full = (fs::path(dir_) / e.path).string();
    if (sha256_file(full) != e.adapter_sha256)
      throw IoError("registry: adapter file hash mismatch for family " + family);
    return e;
  }
  throw ConfigError("registry: no adapter stored for family " + family);
}

}  // namespace geoadapt
