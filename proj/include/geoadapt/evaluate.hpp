#pragma once

#include "geoadapt/metrics.hpp"
#include "geoadapt/model.hpp"

namespace geoadapt {

struct EvalTags {
  std::string strategy = "zero-shot";
  int lora_rank = 0;
  uint64_t seed = 0;
  bool contract_mismatch = false;
  std::string dataset_hash;
  std::string checkpoint_fingerprint;
};

// Full-surface inference per test case, force integration, and all field
// metrics. Friction rel-L2 flattens the tau components jointly; friction
// NRMSE normalizes by the range of the truth magnitude |tau|.
std::vector<CaseMetricsRow> evaluate_family(const ModelConfig& cfg, ParameterStore& store,
                                            const AdapterMap* adapters,
                                            const std::vector<const SurfaceCase*>& test_cases,
                                            const NormalizationContract& contract,
                                            const EvalTags& tags);

// Per-point error export (case_id, panel index, truth and prediction per
// component) for diagnostic inspection.
void export_field_errors(const std::string& path, const ModelConfig& cfg,
                         ParameterStore& store, const AdapterMap* adapters,
                         const std::vector<const SurfaceCase*>& cases,
                         const NormalizationContract& contract);

}  // namespace geoadapt
