#include "pairinfer/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "pairinfer/errors.hpp"

namespace pairinfer {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "PAIRINFER-CKPT-1\n";

json config_to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},
          {"encoder_heads", c.encoder_heads},
          {"encoder_layers", c.encoder_layers},
          {"ffn_width", c.ffn_width},
          {"max_length", c.max_length},
          {"dropout", c.dropout},
          {"inference_layers", c.inference_layers},
          {"full_attention", c.full_attention},
          {"no_fusion", c.no_fusion},
          {"carry_features", c.carry_features}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model").get<std::size_t>();
  c.encoder_heads = j.at("encoder_heads").get<std::size_t>();
  c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
  c.ffn_width = j.at("ffn_width").get<std::size_t>();
  c.max_length = j.at("max_length").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.inference_layers = j.at("inference_layers").get<std::size_t>();
  c.full_attention = j.at("full_attention").get<bool>();
  c.no_fusion = j.at("no_fusion").get<bool>();
  c.carry_features = j.at("carry_features").get<bool>();
  return c;
}

}  // namespace

std::uint64_t hash_config(const ModelConfig& cfg) {
  const std::string text = config_to_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

Checkpoint capture(const Model& model) {
  Checkpoint c;
  c.config = model.config();
  c.vocab = model.vocab().words();
  c.relations = model.relations().names();
  c.config_hash = hash_config(model.config());
  for (const auto& p : model.params().all()) {
    c.params.push_back({p.name, p.group, p.tensor.shape(), p.tensor.data()});
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json header;
  header["config"] = config_to_json(ckpt.config);
  header["vocab"] = ckpt.vocab;
  header["relations"] = ckpt.relations;
  header["step"] = ckpt.step;
  header["rng_state"] = ckpt.rng_state;
  header["config_hash"] = ckpt.config_hash;
  header["stage"] = ckpt.stage;
  header["dev_f1"] = ckpt.dev_f1;
  header["params"] = json::array();
  for (const auto& e : ckpt.params) {
    header["params"].push_back({{"name", e.name}, {"group", std::string(nk::group_name(e.group))}, {"shape", e.shape}});
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic - 1);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : ckpt.params) {
    out.write(reinterpret_cast<const char*>(e.values.data()), static_cast<std::streamsize>(e.values.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("missing checkpoint " + path.string());
  char magic[sizeof kMagic - 1];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw DataError(path.string() + " is not a checkpoint");
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError("truncated checkpoint " + path.string());
  Checkpoint c;
  try {
    json h = json::parse(text);
    c.config = config_from_json(h.at("config"));
    c.vocab = h.at("vocab").get<std::vector<std::string>>();
    c.relations = h.at("relations").get<std::vector<std::string>>();
    c.step = h.at("step").get<std::uint64_t>();
    c.rng_state = h.at("rng_state").get<std::string>();
    c.config_hash = h.at("config_hash").get<std::uint64_t>();
    c.stage = h.at("stage").get<int>();
    c.dev_f1 = h.at("dev_f1").get<double>();
    for (const auto& p : h.at("params")) {
      Checkpoint::Entry e;
      e.name = p.at("name").get<std::string>();
      e.group = nk::parse_group(p.at("group").get<std::string>());
      e.shape = p.at("shape").get<nk::Shape>();
      c.params.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  if (c.config_hash != hash_config(c.config)) throw DataError("checkpoint config hash mismatch in " + path.string());
  for (auto& e : c.params) {
    e.values.resize(nk::numel(e.shape));
    in.read(reinterpret_cast<char*>(e.values.data()), static_cast<std::streamsize>(e.values.size() * sizeof(double)));
    if (!in) throw DataError("truncated checkpoint " + path.string());
  }
  return c;
}

std::unique_ptr<Model> restore_model(const Checkpoint& ckpt) {
  auto model = std::make_unique<Model>(ckpt.config, Vocabulary::from_words(ckpt.vocab), RelationVocab(ckpt.relations), 0);
  const std::size_t copied = copy_parameters(ckpt, *model, {nk::kAllGroups.begin(), nk::kAllGroups.end()});
  if (copied != model->params().all().size()) throw DataError("checkpoint does not cover every parameter");
  return model;
}

std::size_t copy_parameters(const Checkpoint& ckpt, Model& model, const std::set<nk::Group>& groups) {
  std::size_t copied = 0;
  for (const auto& e : ckpt.params) {
    if (!groups.count(e.group) || !model.params().contains(e.name)) continue;
    nk::Tensor t = model.params().get(e.name).tensor;
    if (t.shape() != e.shape) throw DataError("checkpoint shape mismatch for " + e.name);
    std::copy(e.values.begin(), e.values.end(), t.mutable_values().begin());
    ++copied;
  }
  return copied;
}

}  // namespace pairinfer
