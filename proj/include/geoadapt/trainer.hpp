#pragma once

#include <memory>
#include <vector>

#include "geoadapt/adaptation.hpp"
#include "geoadapt/contract.hpp"
#include "geoadapt/model.hpp"

namespace geoadapt {

struct TrainHyper {
  double lr_max = 3e-5;
  int warmup_epochs = 10;
  int total_epochs = 200;
  double weight_decay = 1e-5;
  double clip_norm = 3.0;
  int batch = 4;  // cases per optimizer step
  uint64_t seed = 1;

  // Desk-scale pretraining: 500 paper epochs scaled to 200.
  static TrainHyper pretrain_desk() { return TrainHyper{}; }
  // Fine-tuning mode. batch=1 gives 20 cases x 50 epochs = 1000 updates.
  static TrainHyper finetune() {
    TrainHyper h;
    h.lr_max = 1e-5;
    h.warmup_epochs = 3;
    h.total_epochs = 50;
    h.batch = 1;
    return h;
  }

  void validate() const {
    if (warmup_epochs >= total_epochs && total_epochs > 0)
      throw ConfigError("train hyper: warmup must be shorter than total epochs");
    if (lr_max <= 0 || clip_norm <= 0 || batch < 1)
      throw ConfigError("train hyper: positive lr/clip/batch required");
  }
};

// Linear ramp 0 -> lr_max over the warmup epochs, then cosine annealing
// lr_max * 0.5 (1 + cos(pi (e-w)/(T-w))) toward zero at the final epoch.
double lr_at(int epoch, const TrainHyper& hyper);

// Scales all gradients in place if the global L2 norm exceeds clip.
// Returns the pre-clip norm. Throws NumericError on a non-finite norm.
double clip_global_norm(const std::vector<Tensor*>& grads, double clip);

struct AdamState {
  std::map<std::string, std::pair<Tensor, Tensor>> moments;  // name -> (m, v)
  int64_t step = 0;
};

// Decoupled AdamW over the listed trainable parameters. Weight decay
// applies to weight matrices only (rank >= 2, excluding the learned
// latent), never to biases or norm gains.
void adamw_step(const std::vector<ParamTensor*>& trainable, AdamState& state, double lr,
                const TrainHyper& hyper);

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_loss = 0;
  double grad_norm_pre_clip = 0;   // mean over the epoch's steps
  double grad_norm_post_clip = 0;  // max over the epoch's steps
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_loss = 0;
  ParameterStore best_store;
  std::shared_ptr<ParameterStore> best_adapter_store;  // LoRA runs
};

// MSE on normalized (p, taux, tauy) at freshly subsampled anchors, AdamW
// steps with global-norm clipping, fixed validation subsamples, and
// best-validation checkpoint selection. Deterministic for a fixed seed.
TrainResult train(const ModelConfig& cfg, ParameterStore& store, AdaptationPlan& plan,
                  const std::vector<const SurfaceCase*>& train_cases,
                  const std::vector<const SurfaceCase*>& val_cases, const TrainHyper& hyper,
                  const NormalizationContract& contract);

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

}  // namespace geoadapt
