#include "geoadapt/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "json.hpp"

#include "geoadapt/sha256.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint container assumes a little-endian host");

using ordered_json = nlohmann::ordered_json;

namespace geoadapt {

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParameterStore& store) {
  ordered_json j;
  j["schema_version"] = 1;
  j["kind"] = meta.kind;
  j["model_config"] = ordered_json::parse(meta.config.to_json_string());
  j["contract"] = ordered_json::parse(meta.contract.to_json_string());
  j["strategy"] = meta.strategy;
  j["lora_rank"] = meta.lora_rank;
  j["lora_alpha"] = meta.lora_alpha;
  j["epoch"] = meta.epoch;
  j["val_loss"] = meta.val_loss;
  j["seed"] = meta.seed;
  j["family"] = meta.family;
  j["base_fingerprint"] = meta.base_fingerprint;

  ordered_json manifest = ordered_json::array();
  size_t offset = 0;
  for (size_t i = 0; i < store.size(); ++i) {
    const ParamTensor& p = store.at(i);
    ordered_json e;
    e["name"] = p.name;
    e["shape"] = p.value.shape();
    e["offset"] = offset;
    e["dtype"] = "f32";
    manifest.push_back(e);
    offset += p.value.numel() * sizeof(float);
  }
  j["params"] = manifest;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open " + path);
  out << j.dump() << "\n";
  std::vector<float> buf;
  for (size_t i = 0; i < store.size(); ++i) {
    const ParamTensor& p = store.at(i);
    buf.resize(p.value.numel());
    for (size_t k = 0; k < p.value.numel(); ++k) buf[k] = static_cast<float>(p.value[k]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("save_checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open " + path);
  std::string header;
  std::getline(in, header);
  ordered_json j = ordered_json::parse(header);

  LoadedCheckpoint lc;
  lc.meta.kind = j.at("kind").get<std::string>();
  lc.meta.config = ModelConfig::from_json_string(j.at("model_config").dump());
  lc.meta.contract = NormalizationContract::from_json_string(j.at("contract").dump());
  lc.meta.strategy = j.at("strategy").get<std::string>();
  lc.meta.lora_rank = j.at("lora_rank").get<int>();
  lc.meta.lora_alpha = j.at("lora_alpha").get<double>();
  lc.meta.epoch = j.at("epoch").get<int>();
  lc.meta.val_loss = j.at("val_loss").get<double>();
  lc.meta.seed = j.at("seed").get<uint64_t>();
  lc.meta.family = j.at("family").get<std::string>();
  lc.meta.base_fingerprint = j.at("base_fingerprint").get<std::string>();

  const std::streampos payload_start = in.tellg();
  for (const auto& e : j.at("params")) {
    const std::string name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<std::vector<size_t>>();
    const size_t offset = e.at("offset").get<size_t>();
    if (e.at("dtype").get<std::string>() != "f32")
      throw IoError("load_checkpoint: unsupported dtype");
    Tensor t(shape);
    std::vector<float> buf(t.numel());
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw IoError("load_checkpoint: truncated payload in " + path);
    for (size_t k = 0; k < t.numel(); ++k) t[k] = static_cast<double>(buf[k]);
    lc.store.add(name, std::move(t));
  }
  return lc;
}

std::string checkpoint_fingerprint(const std::string& path) { return sha256_file(path); }

}  // namespace geoadapt
