#pragma once

#include <optional>
#include <string>

#include "geoadapt/metrics.hpp"

namespace geoadapt {

// Per-family adapter registry bound to one backbone checkpoint fingerprint.
// Index lives in <dir>/registry.json; adapter files are stored by the
// caller and referenced by relative path.
class AdapterRegistry {
 public:
  // Opens (or creates) a registry for the given backbone fingerprint. An
  // existing registry bound to a different backbone is rejected.
  static AdapterRegistry open(const std::string& dir, const std::string& backbone_fingerprint);

  struct Entry {
    std::string family;
    std::string path;  // relative to the registry directory
    std::string adapter_sha256;
    std::string base_fingerprint;
    int rank = 0;
    double alpha = 0.0;
    double r2_pressure = 0.0;
    double rel_l2_pressure = 0.0;
  };

  // Verifies the adapter's base fingerprint against the registry backbone
  // before storing; hash-verifies the file on get.
  void put(const Entry& entry);
  Entry get(const std::string& family) const;
  bool has(const std::string& family) const;
  const std::string& dir() const { return dir_; }

 private:
  void save() const;
  std::string dir_;
  std::string backbone_fingerprint_;
  std::vector<Entry> entries_;
};

}  // namespace geoadapt
