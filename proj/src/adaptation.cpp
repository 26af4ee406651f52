#include "geoadapt/adaptation.hpp"

#include <Eigen/Core>

namespace geoadapt {

std::string strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::FFT: return "fft";
    case StrategyKind::LFT: return "lft";
    case StrategyKind::LoRA: return "lora";
    case StrategyKind::FromScratch: return "scratch";
  }
  throw ConfigError("strategy_name: bad kind");
}

StrategyKind strategy_from_name(const std::string& s) {
  if (s == "fft") return StrategyKind::FFT;
  if (s == "lft") return StrategyKind::LFT;
  if (s == "lora") return StrategyKind::LoRA;
  if (s == "scratch" || s == "from-scratch") return StrategyKind::FromScratch;
  throw ConfigError("unknown strategy: " + s);
}

const std::vector<std::string>& StrategyConfig::lora_target_roles() {
  static const std::vector<std::string> roles = {"attn.q",  "attn.k",   "attn.v",
                                                 "attn.out", "mlp.in", "mlp.out"};
  return roles;
}

std::vector<std::string> lora_target_layers(const ModelConfig& cfg) {
  std::vector<std::string> blocks;
  for (size_t i = 0; i < cfg.n_geo_blocks; ++i) blocks.push_back("geo." + std::to_string(i));
  blocks.push_back("common");
  blocks.push_back("surf.cross");
  for (size_t i = 0; i < cfg.n_surface_blocks; ++i)
    blocks.push_back("surf." + std::to_string(i));
  std::vector<std::string> out;
  for (const std::string& b : blocks)
    for (const std::string& role : StrategyConfig::lora_target_roles())
      out.push_back(b + "." + role);
  return out;
}

size_t lora_params_for_layer(size_t d_out, size_t d_in, int rank) {
  return static_cast<size_t>(rank) * d_in + d_out * static_cast<size_t>(rank);
}

AdaptationPlan build_plan(const StrategyConfig& cfg, ParameterStore& store,
                          const ModelConfig& model_cfg, uint64_t seed) {
  AdaptationPlan plan;
  plan.kind = cfg.kind;
  plan.config = cfg;

  switch (cfg.kind) {
    case StrategyKind::FFT:
    case StrategyKind::FromScratch: {
      store.set_all_trainable(true);
      for (size_t i = 0; i < store.size(); ++i) plan.trainable_names.insert(store.at(i).name);
      break;
    }
    case StrategyKind::LFT: {
      if (cfg.lft_trainable_tail < 1 ||
          static_cast<size_t>(cfg.lft_trainable_tail) > model_cfg.n_surface_blocks)
        throw ConfigError("lft: trainable tail outside [1, n_surface_blocks]");
      std::vector<std::string> prefixes;
      for (size_t i = model_cfg.n_surface_blocks - static_cast<size_t>(cfg.lft_trainable_tail);
           i < model_cfg.n_surface_blocks; ++i)
        prefixes.push_back("surf." + std::to_string(i) + ".");
      prefixes.push_back("dec.");
      store.set_all_trainable(false);
      for (size_t i = 0; i < store.size(); ++i) {
        ParamTensor& p = store.at(i);
        for (const std::string& pref : prefixes) {
          if (p.name.rfind(pref, 0) == 0) {
            p.trainable = true;
            plan.trainable_names.insert(p.name);
            break;
          }
        }
      }
      break;
    }
    case StrategyKind::LoRA: {
      if (cfg.lora_rank < 1) throw ConfigError("lora: rank must be >= 1");
      if (cfg.lora_alpha <= 0.0) throw ConfigError("lora: alpha must be positive");
      store.set_all_trainable(false);
      plan.adapter_store = std::make_shared<ParameterStore>();
      for (const std::string& layer : lora_target_layers(model_cfg)) {
        const ParamTensor& w = store.get(layer + ".weight");
        const size_t d_out = w.value.rows(), d_in = w.value.cols();
        if (static_cast<size_t>(cfg.lora_rank) > std::min(d_in, d_out))
          throw ConfigError("lora: rank " + std::to_string(cfg.lora_rank) +
                            " exceeds min dimension of layer " + layer);
        RandomStream rng(derive_seed(seed, "lora." + layer));
        Tensor a({static_cast<size_t>(cfg.lora_rank), d_in});
        for (size_t k = 0; k < a.numel(); ++k) a[k] = rng.normal(0.0, 0.02);
        Tensor b({d_out, static_cast<size_t>(cfg.lora_rank)});  // zero: delta W = 0
        ParamTensor& pa = plan.adapter_store->add(layer + ".lora_a", std::move(a), true);
        ParamTensor& pb = plan.adapter_store->add(layer + ".lora_b", std::move(b), true);
        plan.adapters[layer] = LoraAdapter{&pa, &pb, cfg.lora_alpha, cfg.lora_rank};
      }
      break;
    }
  }
  return plan;
}

TrainableCounts count_trainable(const AdaptationPlan& plan, const ParameterStore& store) {
  TrainableCounts tc;
  tc.base_total = store.total_count();
  auto group_of = [](const std::string& name) -> std::string {
    if (name.rfind("embed", 0) == 0) return "embed";
    if (name.rfind("latent", 0) == 0) return "latent";
    if (name.rfind("geo.", 0) == 0) return "geo";
    if (name.rfind("common", 0) == 0) return "common";
    if (name.rfind("surf.", 0) == 0) return "surface";
    if (name.rfind("dec", 0) == 0) return "decoder";
    return "other";
  };
  for (size_t i = 0; i < store.size(); ++i) {
    const ParamTensor& p = store.at(i);
    if (p.trainable) {
      tc.base_trainable += p.value.numel();
      tc.per_group[group_of(p.name)] += p.value.numel();
    }
  }
  if (plan.adapter_store) {
    for (size_t i = 0; i < plan.adapter_store->size(); ++i) {
      const ParamTensor& p = plan.adapter_store->at(i);
      tc.adapter_params += p.value.numel();
      tc.per_group[group_of(p.name)] += p.value.numel();
    }
  }
  tc.trainable_total = tc.base_trainable + tc.adapter_params;
  tc.fraction_of_base =
      static_cast<double>(tc.trainable_total) / static_cast<double>(tc.base_total);
  return tc;
}

ParameterStore merge_lora(const ParameterStore& base, const AdapterMap& adapters) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  ParameterStore out = base.clone();
  for (const auto& [layer, ad] : adapters) {
    ParamTensor& w = out.get(layer + ".weight");
    const double s = ad.alpha / static_cast<double>(ad.rank);
    Eigen::Map<RowMat> wm(w.value.data(), static_cast<Eigen::Index>(w.value.rows()),
                          static_cast<Eigen::Index>(w.value.cols()));
    Eigen::Map<const RowMat> am(ad.a->value.data(),
                                static_cast<Eigen::Index>(ad.a->value.rows()),
                                static_cast<Eigen::Index>(ad.a->value.cols()));
    Eigen::Map<const RowMat> bm(ad.b->value.data(),
                                static_cast<Eigen::Index>(ad.b->value.rows()),
                                static_cast<Eigen::Index>(ad.b->value.cols()));
    wm.noalias() += s * (bm * am);
  }
  return out;
}

void save_adapter(const std::string& path, const CheckpointMeta& meta,
                  const ParameterStore& adapter_store) {
  CheckpointMeta m = meta;
  m.kind = "adapter";
  save_checkpoint(path, m, adapter_store);
}

AdapterMap adapter_map_from_store(ParameterStore& adapter_store, int rank, double alpha) {
  AdapterMap out;
  for (size_t i = 0; i < adapter_store.size(); ++i) {
    ParamTensor& p = adapter_store.at(i);
    const std::string suffix_a = ".lora_a";
    if (p.name.size() > suffix_a.size() &&
        p.name.compare(p.name.size() - suffix_a.size(), suffix_a.size(), suffix_a) == 0) {
      const std::string layer = p.name.substr(0, p.name.size() - suffix_a.size());
      ParamTensor& pb = adapter_store.get(layer + ".lora_b");
      out[layer] = LoraAdapter{&p, &pb, alpha, rank};
    }
  }
  if (out.empty()) throw ConfigError("adapter_map_from_store: no adapter factors found");
  return out;
}

}  // namespace geoadapt
