#include "geoadapt/trainer.hpp"

#include <cmath>
#include <fstream>
#include <thread>

namespace geoadapt {

double lr_at(int epoch, const TrainHyper& hyper) {
  if (epoch < 0 || epoch >= hyper.total_epochs)
    throw ConfigError("lr_at: epoch outside [0, total)");
  const double w = static_cast<double>(hyper.warmup_epochs);
  if (epoch < hyper.warmup_epochs) return hyper.lr_max * static_cast<double>(epoch) / w;
  const double t = static_cast<double>(hyper.total_epochs) - w;
  const double x = (static_cast<double>(epoch) - w) / t;
  return hyper.lr_max * 0.5 * (1.0 + std::cos(M_PI * x));
}

double clip_global_norm(const std::vector<Tensor*>& grads, double clip) {
  double sq = 0.0;
  for (const Tensor* g : grads)
    for (size_t i = 0; i < g->numel(); ++i) sq += (*g)[i] * (*g)[i];
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("clip_global_norm: non-finite gradient norm");
  if (norm > clip) {
    const double s = clip / norm;
    for (Tensor* g : grads)
      for (size_t i = 0; i < g->numel(); ++i) (*g)[i] *= s;
  }
  return norm;
}

void adamw_step(const std::vector<ParamTensor*>& trainable, AdamState& state, double lr,
                const TrainHyper& hyper) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++state.step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (ParamTensor* p : trainable) {
    if (!p->trainable)
      throw ConfigError("adamw_step: frozen parameter in trainable list: " + p->name);
    auto it = state.moments.find(p->name);
    if (it == state.moments.end()) {
      it = state.moments
               .emplace(p->name,
                        std::make_pair(Tensor(p->value.shape()), Tensor(p->value.shape())))
               .first;
    }
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    const bool decay = p->value.rank() >= 2 && p->name != "latent.init";
    for (size_t i = 0; i < p->value.numel(); ++i) {
      const double g = p->grad[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      double x = p->value[i];
      if (decay) x -= lr * hyper.weight_decay * x;
      x -= lr * m_hat / (std::sqrt(v_hat) + eps);
      p->value[i] = x;
    }
    if (!p->value.all_finite())
      throw NumericError("adamw_step: non-finite parameter after update: " + p->name);
  }
}

namespace {

struct CaseBatchResult {
  double loss = 0.0;
  std::unique_ptr<Graph> graph;
};

// Forward + backward for one case on freshly sampled supernodes/anchors.
CaseBatchResult run_case(const ModelConfig& cfg, ParameterStore& store,
                         const AdapterMap* adapters, const SurfaceCase& sc,
                         const NormalizationContract& contract, uint64_t subsample_seed) {
  SampledIndices idx =
      sample_supernodes_anchors(sc.panel_count(), cfg.n_supernodes, cfg.n_anchors,
                                subsample_seed);
  Tensor all_coords = normalize_coords(sc.midpoints, contract);
  Tensor all_targets = normalize_fields(sc, contract);

  Tensor sup({cfg.n_supernodes, 2});
  for (size_t i = 0; i < cfg.n_supernodes; ++i) {
    sup.at(i, 0) = all_coords.at(idx.supernodes[i], 0);
    sup.at(i, 1) = all_coords.at(idx.supernodes[i], 1);
  }
  Tensor anc({cfg.n_anchors, 2});
  Tensor targets({cfg.n_anchors, ModelConfig::out_components});
  for (size_t i = 0; i < cfg.n_anchors; ++i) {
    anc.at(i, 0) = all_coords.at(idx.anchors[i], 0);
    anc.at(i, 1) = all_coords.at(idx.anchors[i], 1);
    for (size_t c = 0; c < ModelConfig::out_components; ++c)
      targets.at(i, c) = all_targets.at(idx.anchors[i], c);
  }

  CaseBatchResult out;
  out.graph = std::make_unique<Graph>();
  ForwardResult fwd = surrogate_forward(*out.graph, cfg, store, adapters, sup, anc, nullptr);
  ValueRef loss = out.graph->mse(fwd.anchor_out, targets, "loss");
  out.loss = out.graph->value(loss).scalar_value();
  out.graph->backward(loss);
  return out;
}

double validation_loss(const ModelConfig& cfg, ParameterStore& store,
                       const AdapterMap* adapters,
                       const std::vector<const SurfaceCase*>& val_cases,
                       const NormalizationContract& contract, uint64_t seed) {
  if (val_cases.empty()) return 0.0;
  double acc = 0.0;
  for (const SurfaceCase* sc : val_cases) {
    // Fixed subsample per case: comparable loss across epochs.
    SampledIndices idx =
        sample_supernodes_anchors(sc->panel_count(), cfg.n_supernodes, cfg.n_anchors,
                                  derive_seed(seed, "val-sub-" + sc->case_id));
    Tensor all_coords = normalize_coords(sc->midpoints, contract);
    Tensor all_targets = normalize_fields(*sc, contract);
    Tensor sup({cfg.n_supernodes, 2});
    for (size_t i = 0; i < cfg.n_supernodes; ++i) {
      sup.at(i, 0) = all_coords.at(idx.supernodes[i], 0);
      sup.at(i, 1) = all_coords.at(idx.supernodes[i], 1);
    }
    Tensor anc({cfg.n_anchors, 2});
    Tensor targets({cfg.n_anchors, ModelConfig::out_components});
    for (size_t i = 0; i < cfg.n_anchors; ++i) {
      anc.at(i, 0) = all_coords.at(idx.anchors[i], 0);
      anc.at(i, 1) = all_coords.at(idx.anchors[i], 1);
      for (size_t c = 0; c < ModelConfig::out_components; ++c)
        targets.at(i, c) = all_targets.at(idx.anchors[i], c);
    }
    Graph g;
    ForwardResult fwd = surrogate_forward(g, cfg, store, adapters, sup, anc, nullptr);
    acc += g.value(g.mse(fwd.anchor_out, targets, "val-loss")).scalar_value();
  }
  return acc / static_cast<double>(val_cases.size());
}

}  // namespace

TrainResult train(const ModelConfig& cfg, ParameterStore& store, AdaptationPlan& plan,
                  const std::vector<const SurfaceCase*>& train_cases,
                  const std::vector<const SurfaceCase*>& val_cases, const TrainHyper& hyper,
                  const NormalizationContract& contract) {
  hyper.validate();
  const AdapterMap* adapters = plan.adapters.empty() ? nullptr : &plan.adapters;

  std::vector<ParamTensor*> trainable;
  for (size_t i = 0; i < store.size(); ++i)
    if (store.at(i).trainable) trainable.push_back(&store.at(i));
  if (plan.adapter_store)
    for (size_t i = 0; i < plan.adapter_store->size(); ++i)
      trainable.push_back(&plan.adapter_store->at(i));
  if (trainable.empty() && hyper.total_epochs > 0)
    throw ConfigError("train: no trainable parameters");

  TrainResult result;
  result.best_store = store.clone();
  if (plan.adapter_store)
    result.best_adapter_store = std::make_shared<ParameterStore>(plan.adapter_store->clone());
  result.best_val_loss =
      validation_loss(cfg, store, adapters, val_cases, contract, hyper.seed);
  result.best_epoch = -1;  // initial checkpoint
  if (hyper.total_epochs == 0) return result;

  AdamState opt;
  const size_t n_train = train_cases.size();
  if (n_train == 0) throw ConfigError("train: empty training set");

  for (int epoch = 0; epoch < hyper.total_epochs; ++epoch) {
    const double lr = lr_at(epoch, hyper);
    std::vector<size_t> order(n_train);
    for (size_t i = 0; i < n_train; ++i) order[i] = i;
    RandomStream order_rng(derive_seed(hyper.seed, "order", static_cast<uint64_t>(epoch)));
    order_rng.shuffle(order);

    double epoch_loss = 0.0;
    double pre_norm_sum = 0.0, post_norm_max = 0.0;
    size_t n_steps = 0;

    for (size_t start = 0; start < n_train; start += static_cast<size_t>(hyper.batch)) {
      const size_t count = std::min(static_cast<size_t>(hyper.batch), n_train - start);
      std::vector<CaseBatchResult> results(count);
      auto worker = [&](size_t slot) {
        const SurfaceCase& sc = *train_cases[order[start + slot]];
        const uint64_t sub_seed =
            derive_seed(hyper.seed, "sub-" + sc.case_id, static_cast<uint64_t>(epoch));
        try {
          results[slot] = run_case(cfg, store, adapters, sc, contract, sub_seed);
        } catch (const NumericError& e) {
          throw NumericError("epoch " + std::to_string(epoch) + ", case " + sc.case_id + ": " +
                             e.what());
        }
      };
      if (count == 1) {
        worker(0);
      } else {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(count);
        for (size_t s = 0; s < count; ++s)
          threads.emplace_back([&, s]() {
            try {
              worker(s);
            } catch (...) {
              errors[s] = std::current_exception();
            }
          });
        for (auto& t : threads) t.join();
        for (auto& e : errors)
          if (e) std::rethrow_exception(e);
      }

      store.zero_grads();
      if (plan.adapter_store) plan.adapter_store->zero_grads();
      for (size_t s = 0; s < count; ++s) {  // deterministic batch-order reduction
        results[s].graph->flush_param_grads();
        epoch_loss += results[s].loss;
      }
      const double inv = 1.0 / static_cast<double>(count);
      std::vector<Tensor*> grads;
      grads.reserve(trainable.size());
      for (ParamTensor* p : trainable) {
        for (size_t i = 0; i < p->grad.numel(); ++i) p->grad[i] *= inv;
        grads.push_back(&p->grad);
      }
      const double pre = clip_global_norm(grads, hyper.clip_norm);
      pre_norm_sum += pre;
      post_norm_max = std::max(post_norm_max, std::min(pre, hyper.clip_norm));
      ++n_steps;
      adamw_step(trainable, opt, lr, hyper);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = epoch_loss / static_cast<double>(n_train);
    rec.val_loss = validation_loss(cfg, store, adapters, val_cases, contract, hyper.seed);
    rec.grad_norm_pre_clip = pre_norm_sum / static_cast<double>(n_steps);
    rec.grad_norm_post_clip = post_norm_max;
    result.history.push_back(rec);

    if (rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      result.best_store = store.clone();
      if (plan.adapter_store)
        result.best_adapter_store =
            std::make_shared<ParameterStore>(plan.adapter_store->clone());
    }
  }
  return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("write_history_csv: cannot open " + path);
  out << "epoch,lr,train_loss,val_loss,grad_norm_pre_clip\n";
  for (const EpochRecord& r : history)
    out << r.epoch << ',' << fmt17(r.lr) << ',' << fmt17(r.train_loss) << ','
        << fmt17(r.val_loss) << ',' << fmt17(r.grad_norm_pre_clip) << "\n";
}

}  // namespace geoadapt
