#pragma once

#include <string>

#include "geoadapt/contract.hpp"
#include "geoadapt/model.hpp"
#include "geoadapt/param_store.hpp"

namespace geoadapt {

// Container header (one JSON line) followed by a raw little-endian 32-bit
// float payload in manifest order. Round-trips bit-exactly at 32-bit
// precision.
struct CheckpointMeta {
  std::string kind = "checkpoint";  // checkpoint | adapter
  ModelConfig config;
  NormalizationContract contract;
  std::string strategy = "pretrain";
  int lora_rank = 0;
  double lora_alpha = 0.0;
  int epoch = 0;
  double val_loss = 0.0;
  uint64_t seed = 0;
  std::string family;            // adapters: target family
  std::string base_fingerprint;  // adapters: fingerprint of the base checkpoint
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParameterStore& store);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  ParameterStore store;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// SHA-256 of the container file; the identity used by adapter files and the
// registry to pin a backbone.
std::string checkpoint_fingerprint(const std::string& path);

}  // namespace geoadapt
