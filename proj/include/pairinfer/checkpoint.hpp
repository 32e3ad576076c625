#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "pairinfer/model.hpp"

namespace pairinfer {

// Binary checkpoint: a magic line, a length-prefixed JSON header (model
// config, vocabularies, parameter names/groups/shapes, step, rng state,
// config hash) and the raw parameter values as little-endian doubles.
struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> vocab;
  std::vector<std::string> relations;
  std::uint64_t step = 0;
  std::string rng_state;
  std::uint64_t config_hash = 0;
  int stage = 0;
  double dev_f1 = 0.0;

  struct Entry {
    std::string name;
    nk::Group group = nk::Group::base;
    nk::Shape shape;
    std::vector<double> values;
  };
  std::vector<Entry> params;
};

std::uint64_t hash_config(const ModelConfig& cfg);

Checkpoint capture(const Model& model);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds the model the checkpoint was taken from.
std::unique_ptr<Model> restore_model(const Checkpoint& ckpt);
// Copies values of same-named parameters in `groups` into `model`. Shapes
// must agree. Returns the number of tensors copied.
std::size_t copy_parameters(const Checkpoint& ckpt, Model& model, const std::set<nk::Group>& groups);

}  // namespace pairinfer
