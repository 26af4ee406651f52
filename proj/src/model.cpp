#include "geoadapt/model.hpp"

#include <cmath>

#include "json.hpp"

using ordered_json = nlohmann::ordered_json;

namespace geoadapt {

void ModelConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || n_geo_blocks == 0 || n_surface_blocks == 0 ||
      n_latent == 0 || n_supernodes == 0 || n_anchors == 0 || n_fourier == 0)
    throw ConfigError("model config: all counts must be >= 1");
  if (d_model % n_heads != 0)
    throw ConfigError("model config: d_model must be divisible by n_heads");
}

std::string ModelConfig::to_json_string() const {
  ordered_json j;
  j["d_model"] = d_model;
  j["n_heads"] = n_heads;
  j["n_geo_blocks"] = n_geo_blocks;
  j["n_surface_blocks"] = n_surface_blocks;
  j["n_latent"] = n_latent;
  j["n_supernodes"] = n_supernodes;
  j["n_anchors"] = n_anchors;
  j["n_fourier"] = n_fourier;
  return j.dump();
}

ModelConfig ModelConfig::from_json_string(const std::string& s) {
  ordered_json j = ordered_json::parse(s);
  ModelConfig c;
  c.d_model = j.at("d_model").get<size_t>();
  c.n_heads = j.at("n_heads").get<size_t>();
  c.n_geo_blocks = j.at("n_geo_blocks").get<size_t>();
  c.n_surface_blocks = j.at("n_surface_blocks").get<size_t>();
  c.n_latent = j.at("n_latent").get<size_t>();
  c.n_supernodes = j.at("n_supernodes").get<size_t>();
  c.n_anchors = j.at("n_anchors").get<size_t>();
  c.n_fourier = j.at("n_fourier").get<size_t>();
  c.validate();
  return c;
}

namespace {

Tensor xavier_uniform(size_t d_out, size_t d_in, RandomStream& rng) {
  Tensor t({d_out, d_in});
  const double bound = std::sqrt(6.0 / static_cast<double>(d_in + d_out));
  for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

ParameterStore build_parameter_store(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  ParameterStore ps;
  const size_t d = cfg.d_model;

  auto add_affine = [&](const std::string& name, size_t d_out, size_t d_in) {
    RandomStream rng(derive_seed(seed, name));
    ps.add(name + ".weight", xavier_uniform(d_out, d_in, rng));
    ps.add(name + ".bias", Tensor({d_out}));
  };
  auto add_norm = [&](const std::string& name) {
    Tensor gain({d});
    gain.fill(1.0);
    ps.add(name + ".gain", gain);
    ps.add(name + ".bias", Tensor({d}));
  };
  auto add_attn_mlp = [&](const std::string& prefix) {
    for (const char* nm : {"q", "k", "v", "out"})
      add_affine(prefix + ".attn." + std::string(nm), d, d);
    add_norm(prefix + ".norm_mlp");
    add_affine(prefix + ".mlp.in", 4 * d, d);
    add_affine(prefix + ".mlp.out", d, 4 * d);
  };

  add_affine("embed", d, 2 * cfg.n_fourier * ModelConfig::axes);
  {
    RandomStream rng(derive_seed(seed, "latent.init"));
    Tensor latent({cfg.n_latent, d});
    for (size_t i = 0; i < latent.numel(); ++i) latent[i] = rng.normal(0.0, 0.02);
    ps.add("latent.init", latent);
  }
  for (size_t i = 0; i < cfg.n_geo_blocks; ++i) {
    const std::string p = "geo." + std::to_string(i);
    add_norm(p + ".norm_q");
    add_norm(p + ".norm_kv");
    add_attn_mlp(p);
  }
  {
    add_norm("common.norm_attn");
    add_attn_mlp("common");
  }
  {
    add_norm("surf.cross.norm_q");
    add_norm("surf.cross.norm_kv");
    add_attn_mlp("surf.cross");
  }
  for (size_t i = 0; i < cfg.n_surface_blocks; ++i) {
    const std::string p = "surf." + std::to_string(i);
    add_norm(p + ".norm_attn");
    add_attn_mlp(p);
  }
  add_affine("dec", ModelConfig::out_components, d);
  return ps;
}

std::map<std::string, size_t> param_group_counts(const ModelConfig& cfg) {
  const size_t d = cfg.d_model;
  auto aff = [](size_t o, size_t i) { return o * i + o; };
  const size_t norm = 2 * d;
  const size_t attn = 4 * aff(d, d);
  const size_t mlp = aff(4 * d, d) + aff(d, 4 * d);
  const size_t cross_block = 3 * norm + attn + mlp;  // norm_q, norm_kv, norm_mlp
  const size_t self_block = 2 * norm + attn + mlp;   // norm_attn, norm_mlp

  std::map<std::string, size_t> out;
  out["embed"] = aff(d, 2 * cfg.n_fourier * ModelConfig::axes);
  out["latent"] = cfg.n_latent * d;
  out["geo"] = cfg.n_geo_blocks * cross_block;
  out["common"] = self_block;
  out["surface"] = cross_block + cfg.n_surface_blocks * self_block;
  out["decoder"] = aff(ModelConfig::out_components, d);
  size_t total = 0;
  for (const auto& [k, v] : out) total += v;
  out["total"] = total;
  return out;
}

Tensor fourier_features(const Tensor& coords, size_t n_freqs, double scale) {
  if (coords.rank() != 2 || coords.cols() != ModelConfig::axes)
    throw DimensionError("fourier_features: expects [n, 2] coordinates");
  const size_t n = coords.rows();
  const size_t per_axis = 2 * n_freqs;
  Tensor out({n, ModelConfig::axes * per_axis});
  for (size_t i = 0; i < n; ++i) {
    for (size_t a = 0; a < ModelConfig::axes; ++a) {
      const double p = coords.at(i, a);
      for (size_t k = 0; k < n_freqs; ++k) {
        const double freq = std::pow(2.0, static_cast<double>(k));
        const double arg = 2.0 * M_PI * p * freq / scale;
        out.at(i, a * per_axis + k) = std::sin(arg);
        out.at(i, a * per_axis + n_freqs + k) = std::cos(arg);
      }
    }
  }
  return out;
}

SampledIndices sample_supernodes_anchors(size_t panel_count, size_t n_supernodes,
                                         size_t n_anchors, uint64_t seed) {
  if (panel_count < std::max(n_supernodes, n_anchors))
    throw ConfigError("sample_supernodes_anchors: case has only " +
                      std::to_string(panel_count) + " panels, need >= " +
                      std::to_string(std::max(n_supernodes, n_anchors)));
  RandomStream rng(seed);
  SampledIndices out;
  out.supernodes = rng.sample_without_replacement(panel_count, n_supernodes);
  out.anchors = rng.sample_without_replacement(panel_count, n_anchors);
  return out;
}

namespace {

ValueRef apply_affine_maybe_lora(Graph& g, ValueRef x, const std::string& layer,
                                 ParameterStore& store, const AdapterMap* adapters) {
  ParamTensor& w = store.get(layer + ".weight");
  ParamTensor& b = store.get(layer + ".bias");
  if (adapters) {
    auto it = adapters->find(layer);
    if (it != adapters->end()) {
      const LoraAdapter& ad = it->second;
      return g.lora_affine(x, w, b, *ad.a, *ad.b, ad.alpha, ad.rank, layer);
    }
  }
  return g.affine(x, w, b, layer);
}

}  // namespace

ForwardResult surrogate_forward(Graph& g, const ModelConfig& cfg, ParameterStore& store,
                                const AdapterMap* adapters, const Tensor& supernode_coords,
                                const Tensor& anchor_coords, const Tensor* query_coords) {
  cfg.validate();

  auto embed = [&](const Tensor& coords, const std::string& label) {
    Tensor feats = fourier_features(coords, cfg.n_fourier);
    ValueRef f = g.constant(std::move(feats), label + ".features");
    return apply_affine_maybe_lora(g, f, "embed", store, adapters);
  };

  // When the attention projections carry adapters the projections run as
  // stand-alone (lora_)affines around the attention core; otherwise the
  // fused kernel owns them.
  auto attn_block = [&](const std::string& prefix, ValueRef q_in, ValueRef kv_in) {
    const bool adapted = adapters && adapters->count(prefix + ".attn.q") > 0;
    if (!adapted) {
      return g.mha(q_in, kv_in, store.get(prefix + ".attn.q.weight"),
                   store.get(prefix + ".attn.q.bias"), store.get(prefix + ".attn.k.weight"),
                   store.get(prefix + ".attn.k.bias"), store.get(prefix + ".attn.v.weight"),
                   store.get(prefix + ".attn.v.bias"), store.get(prefix + ".attn.out.weight"),
                   store.get(prefix + ".attn.out.bias"), static_cast<int>(cfg.n_heads),
                   prefix + ".attn");
    }
    ValueRef q = apply_affine_maybe_lora(g, q_in, prefix + ".attn.q", store, adapters);
    ValueRef k = apply_affine_maybe_lora(g, kv_in, prefix + ".attn.k", store, adapters);
    ValueRef v = apply_affine_maybe_lora(g, kv_in, prefix + ".attn.v", store, adapters);
    ValueRef o = g.mha_preprojected(q, k, v, static_cast<int>(cfg.n_heads), prefix + ".attn");
    return apply_affine_maybe_lora(g, o, prefix + ".attn.out", store, adapters);
  };

  auto mlp = [&](const std::string& prefix, ValueRef x) {
    ValueRef h = apply_affine_maybe_lora(g, x, prefix + ".mlp.in", store, adapters);
    ValueRef a = g.gelu(h, prefix + ".mlp.gelu");
    return apply_affine_maybe_lora(g, a, prefix + ".mlp.out", store, adapters);
  };
  auto norm = [&](const std::string& name, ValueRef x) {
    return g.layer_norm(x, store.get(name + ".gain"), store.get(name + ".bias"), name);
  };

  // Perceiver cross block: pre-norm cross-attention + pre-norm MLP.
  auto cross_block = [&](const std::string& prefix, ValueRef q_state, ValueRef kv_state) {
    ValueRef qn = norm(prefix + ".norm_q", q_state);
    ValueRef kvn = norm(prefix + ".norm_kv", kv_state);
    ValueRef att = attn_block(prefix, qn, kvn);
    ValueRef h = g.add(q_state, att, prefix + ".res_attn");
    ValueRef hn = norm(prefix + ".norm_mlp", h);
    return g.add(h, mlp(prefix, hn), prefix + ".res_mlp");
  };

  ValueRef sup_tokens = embed(supernode_coords, "supernodes");
  ValueRef anc_tokens = embed(anchor_coords, "anchors");

  ValueRef latent = g.param(store.get("latent.init"));
  for (size_t i = 0; i < cfg.n_geo_blocks; ++i)
    latent = cross_block("geo." + std::to_string(i), latent, sup_tokens);

  // Common block: self-attention over the latent array.
  {
    const std::string p = "common";
    ValueRef n1 = norm(p + ".norm_attn", latent);
    ValueRef att = attn_block(p, n1, n1);
    latent = g.add(latent, att, p + ".res_attn");
    ValueRef n2 = norm(p + ".norm_mlp", latent);
    latent = g.add(latent, mlp(p, n2), p + ".res_mlp");
  }

  ValueRef a_state = cross_block("surf.cross", anc_tokens, latent);
  ValueRef q_state;
  const bool with_queries = query_coords != nullptr;
  if (with_queries) {
    ValueRef qry_tokens = embed(*query_coords, "queries");
    q_state = cross_block("surf.cross", qry_tokens, latent);
  }

  for (size_t i = 0; i < cfg.n_surface_blocks; ++i) {
    const std::string p = "surf." + std::to_string(i);
    ValueRef a_norm = norm(p + ".norm_attn", a_state);
    ValueRef a_att = attn_block(p, a_norm, a_norm);
    if (with_queries) {
      // Queries attend to the anchors' pre-attention state; they contribute
      // no keys or values, so the anchor path is unaffected.
      ValueRef q_norm = norm(p + ".norm_attn", q_state);
      ValueRef q_att = attn_block(p, q_norm, a_norm);
      q_state = g.add(q_state, q_att, p + ".res_attn.q");
      ValueRef q_n2 = norm(p + ".norm_mlp", q_state);
      q_state = g.add(q_state, mlp(p, q_n2), p + ".res_mlp.q");
    }
    a_state = g.add(a_state, a_att, p + ".res_attn");
    ValueRef a_n2 = norm(p + ".norm_mlp", a_state);
    a_state = g.add(a_state, mlp(p, a_n2), p + ".res_mlp");
  }

  ForwardResult out;
  out.anchor_out = apply_affine_maybe_lora(g, a_state, "dec", store, adapters);
  if (with_queries)
    out.query_out = apply_affine_maybe_lora(g, q_state, "dec", store, adapters);
  return out;
}

Tensor infer_full_surface(const ModelConfig& cfg, ParameterStore& store,
                          const AdapterMap* adapters, const SurfaceCase& sc,
                          const NormalizationContract& contract, size_t chunk) {
  const size_t p = sc.panel_count();
  if (p < cfg.n_anchors)
    throw ConfigError("infer_full_surface: case has fewer panels than n_anchors");
  if (chunk == 0) chunk = p;

  Tensor all_coords = normalize_coords(sc.midpoints, contract);

  // Inference sampling: supernodes = all panels, anchors = first n_anchors
  // panels by index (deterministic by construction).
  Tensor anchor_coords({cfg.n_anchors, 2});
  for (size_t i = 0; i < cfg.n_anchors; ++i) {
    anchor_coords.at(i, 0) = all_coords.at(i, 0);
    anchor_coords.at(i, 1) = all_coords.at(i, 1);
  }

  // Query rows are mathematically independent, but GEMM kernel selection
  // depends on the row count, which would leak the chunk size into the
  // last bits. Decoding therefore always runs on fixed-height blocks,
  // padded by repeating the final row; `chunk` only bounds how many real
  // rows each block carries.
  const size_t block_rows = 256;
  const size_t step = std::min(chunk, block_rows);
  Tensor normed_out({p, ModelConfig::out_components});
  for (size_t start = 0; start < p; start += step) {
    const size_t count = std::min(step, p - start);
    Tensor q_coords({block_rows, 2});
    for (size_t i = 0; i < block_rows; ++i) {
      const size_t src = start + std::min(i, count - 1);
      q_coords.at(i, 0) = all_coords.at(src, 0);
      q_coords.at(i, 1) = all_coords.at(src, 1);
    }
    Graph g;
    ForwardResult r =
        surrogate_forward(g, cfg, store, adapters, all_coords, anchor_coords, &q_coords);
    const Tensor& qv = g.value(r.query_out);
    for (size_t i = 0; i < count; ++i)
      for (size_t c = 0; c < ModelConfig::out_components; ++c)
        normed_out.at(start + i, c) = qv.at(i, c);
  }
  return denormalize_fields(normed_out, contract);
}

}  // namespace geoadapt
