#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pairinfer/model.hpp"
#include "pairinfer/synth.hpp"
#include "pairinfer/train.hpp"

namespace pairinfer {

using ConfigMap = std::map<std::string, std::string>;

// `key = value` lines; blank lines and lines starting with '#' are skipped.
ConfigMap parse_config(const std::string& text);
ConfigMap load_config(const std::filesystem::path& path);

struct Settings {
  TrainPlan plan;
  ModelConfig model;
  SynthConfig synth;
};

// Keys accepted by apply_setting, in documentation order.
const std::vector<std::string>& setting_keys();
// Throws std::invalid_argument on an unknown key or a malformed value.
void apply_setting(Settings& s, const std::string& key, const std::string& value);
void apply_settings(Settings& s, const ConfigMap& values);

// Learning rates for the synthetic benchmark: the default per-group rates
// scaled x50 in stage 1 and x20 in stage 2, since the encoder starts from
// random weights.
Settings desk_settings(int stage);

}  // namespace pairinfer
