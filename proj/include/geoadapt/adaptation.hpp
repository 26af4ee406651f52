#pragma once

#include <memory>
#include <set>
#include <string>
#include <vector>

#include "geoadapt/checkpoint.hpp"
#include "geoadapt/model.hpp"

namespace geoadapt {

enum class StrategyKind { FFT, LFT, LoRA, FromScratch };

std::string strategy_name(StrategyKind k);
StrategyKind strategy_from_name(const std::string& s);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::LoRA;
  int lft_trainable_tail = 2;
  int lora_rank = 64;
  double lora_alpha = 128.0;  // default 2r
  // Adapted layer roles within every geo/common/surface block.
  static const std::vector<std::string>& lora_target_roles();
};

// Trainable mask over a ParameterStore plus (for LoRA) the injected adapter
// factors. The plan owns the adapter store; the base store's trainable
// flags are set in place.
struct AdaptationPlan {
  StrategyKind kind = StrategyKind::FFT;
  StrategyConfig config;
  std::set<std::string> trainable_names;              // in the base store
  std::shared_ptr<ParameterStore> adapter_store;      // LoRA only
  AdapterMap adapters;                                // layer -> factors
};

// Applies the strategy to the store: FFT/FromScratch -> everything
// trainable; LFT -> only the last lft_trainable_tail surface blocks and the
// decoder; LoRA -> base frozen, zero-initialized rank-r adapters injected
// into every q/k/v/attn-out/mlp-in/mlp-out across geometry encoder, common
// block, and surface branch.
AdaptationPlan build_plan(const StrategyConfig& cfg, ParameterStore& store,
                          const ModelConfig& model_cfg, uint64_t seed);

// List of adapted layer names for a model config, in store order.
std::vector<std::string> lora_target_layers(const ModelConfig& cfg);

struct TrainableCounts {
  size_t base_total = 0;
  size_t base_trainable = 0;
  size_t adapter_params = 0;
  size_t trainable_total = 0;  // base_trainable + adapter_params
  double fraction_of_base = 0.0;
  std::map<std::string, size_t> per_group;  // trainable per top-level group
};

TrainableCounts count_trainable(const AdaptationPlan& plan, const ParameterStore& store);

// Adapter parameter count for one affine layer: r*d_in + d_out*r.
size_t lora_params_for_layer(size_t d_out, size_t d_in, int rank);

// W' = W0 + (alpha/r) B A for every adapted layer; returns a full store with
// adapters folded in (biases and non-adapted tensors copied unchanged).
ParameterStore merge_lora(const ParameterStore& base, const AdapterMap& adapters);

// Adapter container IO (same binary container as checkpoints, kind=adapter).
void save_adapter(const std::string& path, const CheckpointMeta& meta,
                  const ParameterStore& adapter_store);

// Rebuilds an AdapterMap over a loaded adapter store. Names follow
// <layer>.lora_a / <layer>.lora_b.
AdapterMap adapter_map_from_store(ParameterStore& adapter_store, int rank, double alpha);

}  // namespace geoadapt
