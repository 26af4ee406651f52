#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "geoadapt/contract.hpp"
#include "geoadapt/graph.hpp"
#include "geoadapt/param_store.hpp"
#include "geoadapt/synth.hpp"

namespace geoadapt {

// Point-cloud surrogate: Fourier coordinate embedding -> Perceiver geometry
// encoder over supernodes -> one common block -> surface branch (anchor
// self-attention, query cross-decoding) -> linear head (p, taux, tauy).
struct ModelConfig {
  size_t d_model = 64;
  size_t n_heads = 4;
  size_t n_geo_blocks = 2;
  size_t n_surface_blocks = 3;
  size_t n_latent = 16;
  size_t n_supernodes = 64;
  size_t n_anchors = 256;
  size_t n_fourier = 8;
  static constexpr size_t out_components = 3;
  static constexpr size_t axes = 2;

  void validate() const;
  std::string to_json_string() const;
  static ModelConfig from_json_string(const std::string& s);

  static ModelConfig desk() { return ModelConfig{}; }
  // Table-scale shape used only for symbolic parameter accounting.
  static ModelConfig paper_shape() {
    ModelConfig c;
    c.d_model = 512;
    c.n_heads = 8;
    c.n_geo_blocks = 6;
    c.n_surface_blocks = 12;
    return c;
  }
  // Small variant for full-model finite-difference checks.
  static ModelConfig tiny() {
    ModelConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.n_geo_blocks = 2;
    c.n_surface_blocks = 3;
    c.n_latent = 4;
    c.n_supernodes = 6;
    c.n_anchors = 8;
    c.n_fourier = 2;
    return c;
  }
};

// Rank-r adapter attached to one affine layer; the factors live in a
// separate adapter ParameterStore so the base store stays untouched.
struct LoraAdapter {
  ParamTensor* a = nullptr;  // [r, d_in]
  ParamTensor* b = nullptr;  // [d_out, r]
  double alpha = 0.0;
  int rank = 0;
};
using AdapterMap = std::map<std::string, LoraAdapter>;

// Fresh parameter store for a config: Xavier-uniform affine weights, zero
// biases, unit layer-norm gains, N(0, 0.02^2) initial latent. Seeding is
// keyed by parameter name, so initialization is order-independent.
ParameterStore build_parameter_store(const ModelConfig& cfg, uint64_t seed);

// Symbolic parameter accounting per group (embed, latent, geo, common,
// surface, decoder) plus the total; a pure function of the config.
std::map<std::string, size_t> param_group_counts(const ModelConfig& cfg);

// Fourier features: per axis k = 0..K-1, sin and cos of 2*pi*p*2^k/1000.
Tensor fourier_features(const Tensor& coords, size_t n_freqs, double scale = 1000.0);

// Training-time subsample: uniform without replacement, fresh per call.
struct SampledIndices {
  std::vector<size_t> supernodes;
  std::vector<size_t> anchors;
};
SampledIndices sample_supernodes_anchors(size_t panel_count, size_t n_supernodes,
                                         size_t n_anchors, uint64_t seed);

struct ForwardResult {
  ValueRef anchor_out;             // [N, 3] normalized predictions
  ValueRef query_out;              // [Q, 3], invalid if no queries given
};

// Records the full forward pass on a graph. Query tokens attend to anchors
// but contribute no keys/values, so anchor outputs are independent of the
// query set.
ForwardResult surrogate_forward(Graph& g, const ModelConfig& cfg, ParameterStore& store,
                                const AdapterMap* adapters, const Tensor& supernode_coords,
                                const Tensor& anchor_coords, const Tensor* query_coords);

// Dense inference: anchors are the first n_anchors panels (deterministic),
// all panels are decoded as queries in chunks; supernodes are all panels.
// Output is denormalized fields [P, 3], bit-exact in the chunk size.
Tensor infer_full_surface(const ModelConfig& cfg, ParameterStore& store,
                          const AdapterMap* adapters, const SurfaceCase& sc,
                          const NormalizationContract& contract, size_t chunk = 256);

}  // namespace geoadapt
