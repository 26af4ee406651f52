#pragma once

#include <array>
#include <string>
#include <vector>

#include "geoadapt/synth.hpp"
#include "geoadapt/tensor.hpp"

namespace geoadapt {

// Frozen normalization statistics: z-score moments for the output components
// (p, taux, tauy) and min-max coordinate bounds mapped onto a fixed [0, 1000]
// scale. Fitted once on the pretraining split and carried over unchanged to
// every downstream stage; the fingerprint makes that machine-checkable.
struct NormalizationContract {
  std::array<double, 3> field_mean{};
  std::array<double, 3> field_std{};
  std::array<double, 2> coord_min{};
  std::array<double, 2> coord_max{};
  double coord_scale = 1000.0;
  std::string source_manifest_hash;

  // SHA-256 over the canonical 17-digit decimal serialization of all numeric
  // fields (the manifest hash is provenance, not part of the fingerprint).
  std::string fingerprint() const;
  std::string canonical_serialization() const;

  std::string to_json_string() const;
  static NormalizationContract from_json_string(const std::string& s);
};

// Population moments over all panels of the supplied cases; coordinate
// extrema over all supplied geometries. Requires >= 2 cases; the caller is
// responsible for supplying pretraining-split cases only.
NormalizationContract fit_contract(const std::vector<const SurfaceCase*>& cases,
                                   const std::string& source_manifest_hash);

// Coordinates -> [n, 2] tokens in contract space (no clamping: held-out
// geometries may legally map outside [0, 1000]).
Tensor normalize_coords(const std::vector<Vec2>& points, const NormalizationContract& c);
// Fields -> [n, 3] z-scored targets (p, taux, tauy).
Tensor normalize_fields(const SurfaceCase& sc, const NormalizationContract& c);
Tensor denormalize_fields(const Tensor& normed, const NormalizationContract& c);

enum class ContractCheck { Ok, MismatchOverridden };

// Equal fingerprints -> Ok. Unequal -> ContractMismatchError unless
// allow_override, in which case the caller must tag all emitted metrics
// with contract_mismatch=true.
ContractCheck verify_contract(const NormalizationContract& checkpoint_contract,
                              const NormalizationContract& runtime_contract,
                              bool allow_override);

}  // namespace geoadapt
