#include "pairinfer/config.hpp"

#include <charconv>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "pairinfer/docred.hpp"

namespace pairinfer {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw std::invalid_argument("setting '" + key + "' expects a number, got '" + v + "'");
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("setting '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw std::invalid_argument("setting '" + key + "' expects a boolean, got '" + v + "'");
}

using Setter = std::function<void(Settings&, const std::string&, const std::string&)>;

const std::vector<std::pair<std::string, Setter>>& table() {
  static const std::vector<std::pair<std::string, Setter>> t = {
      {"stage", [](Settings& s, auto& k, auto& v) { s.plan.stage = static_cast<int>(to_uint(k, v)); }},
      {"epochs", [](Settings& s, auto& k, auto& v) { s.plan.epochs = to_uint(k, v); }},
      {"batch-size", [](Settings& s, auto& k, auto& v) { s.plan.batch_size = to_uint(k, v); }},
      {"encoder-lr", [](Settings& s, auto& k, auto& v) { s.plan.encoder_lr = to_double(k, v); }},
      {"classifier-lr", [](Settings& s, auto& k, auto& v) { s.plan.classifier_lr = to_double(k, v); }},
      {"base-lr", [](Settings& s, auto& k, auto& v) { s.plan.base_lr = to_double(k, v); }},
      {"inference-lr", [](Settings& s, auto& k, auto& v) { s.plan.inference_lr = to_double(k, v); }},
      {"lambda", [](Settings& s, auto& k, auto& v) { s.plan.lambda = to_double(k, v); }},
      {"max-grad-norm", [](Settings& s, auto& k, auto& v) { s.plan.max_grad_norm = to_double(k, v); }},
      {"k", [](Settings& s, auto& k, auto& v) { s.plan.K = to_uint(k, v); }},
      {"ni",
       [](Settings& s, auto& k, auto& v) {
         s.plan.N_I = to_uint(k, v);
         s.model.inference_layers = s.plan.N_I;
       }},
      {"seed", [](Settings& s, auto& k, auto& v) { s.plan.seed = s.synth.seed = to_uint(k, v); }},
      {"no-contrastive", [](Settings& s, auto& k, auto& v) { s.plan.no_contrastive = to_bool(k, v); }},
      {"freeze-base", [](Settings& s, auto& k, auto& v) { s.plan.freeze_base = to_bool(k, v); }},
      {"no-eca", [](Settings& s, auto& k, auto& v) { s.model.full_attention = to_bool(k, v); }},
      {"no-fusion", [](Settings& s, auto& k, auto& v) { s.model.no_fusion = to_bool(k, v); }},
      {"carry-features", [](Settings& s, auto& k, auto& v) { s.model.carry_features = to_bool(k, v); }},
      {"d-model", [](Settings& s, auto& k, auto& v) { s.model.d_model = to_uint(k, v); }},
      {"encoder-heads", [](Settings& s, auto& k, auto& v) { s.model.encoder_heads = to_uint(k, v); }},
      {"encoder-layers", [](Settings& s, auto& k, auto& v) { s.model.encoder_layers = to_uint(k, v); }},
      {"ffn-width", [](Settings& s, auto& k, auto& v) { s.model.ffn_width = to_uint(k, v); }},
      {"max-length", [](Settings& s, auto& k, auto& v) { s.model.max_length = to_uint(k, v); }},
      {"dropout", [](Settings& s, auto& k, auto& v) { s.model.dropout = to_double(k, v); }},
      {"num-train", [](Settings& s, auto& k, auto& v) { s.synth.num_train = to_uint(k, v); }},
      {"num-dev", [](Settings& s, auto& k, auto& v) { s.synth.num_dev = to_uint(k, v); }},
      {"num-test", [](Settings& s, auto& k, auto& v) { s.synth.num_test = to_uint(k, v); }},
      {"entities-per-doc", [](Settings& s, auto& k, auto& v) { s.synth.entities_per_doc = to_uint(k, v); }},
      {"relation-vocab-size", [](Settings& s, auto& k, auto& v) { s.synth.relation_vocab_size = to_uint(k, v); }},
      {"surface-noise", [](Settings& s, auto& k, auto& v) { s.synth.surface_noise = to_double(k, v); }},
      {"inferable-fraction", [](Settings& s, auto& k, auto& v) { s.synth.inferable_fraction = to_double(k, v); }},
      {"dangling-premise-rate",
       [](Settings& s, auto& k, auto& v) { s.synth.dangling_premise_rate = to_double(k, v); }},
      {"filler-rate", [](Settings& s, auto& k, auto& v) { s.synth.filler_rate = to_double(k, v); }},
  };
  return t;
}

}  // namespace

ConfigMap parse_config(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + " has no '='");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + " has an empty key");
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

ConfigMap load_config(const std::filesystem::path& path) { return parse_config(read_text_file(path)); }

const std::vector<std::string>& setting_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, fn] : table()) k.push_back(name);
    return k;
  }();
  return keys;
}

void apply_setting(Settings& s, const std::string& key, const std::string& value) {
  for (const auto& [name, fn] : table()) {
    if (name == key) {
      fn(s, key, value);
      return;
    }
  }
  throw std::invalid_argument("unknown setting '" + key + "'");
}

void apply_settings(Settings& s, const ConfigMap& values) {
  for (const auto& [k, v] : values) apply_setting(s, k, v);
}

Settings desk_settings(int stage) {
  Settings s;
  s.plan = TrainPlan::defaults(stage);
  s.plan.encoder_lr = 2.5e-3;
  s.plan.classifier_lr = 5e-3;
  s.plan.base_lr = 2e-4;
  s.plan.inference_lr = 2e-3;
  return s;
}

}  // namespace pairinfer
