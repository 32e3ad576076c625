#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pairinfer/tensor.hpp"

namespace pairinfer::nk {

enum class Group { encoder, base, inference };
inline constexpr std::array<Group, 3> kAllGroups{Group::encoder, Group::base, Group::inference};

std::string_view group_name(Group g);
Group parse_group(std::string_view name);

struct Parameter {
  Tensor tensor;
  std::string name;
  Group group = Group::base;
};

// Owns every trainable tensor of a model, in registration order.
class ParameterStore {
 public:
  // Weight matrix (fan_in x fan_out), uniform in +-1/sqrt(fan_in).
  Tensor add_weight(const std::string& name, Group group, std::size_t fan_in,
                    std::size_t fan_out, std::mt19937_64& rng);
  Tensor add_zeros(const std::string& name, Group group, Shape shape);
  Tensor add_constant(const std::string& name, Group group, Shape shape, double value);
  // Embedding table with entries uniform in +-limit.
  Tensor add_uniform(const std::string& name, Group group, Shape shape, double limit,
                     std::mt19937_64& rng);

  const std::vector<Parameter>& all() const { return params_; }
  std::vector<Parameter>& all() { return params_; }
  const Parameter& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t total_size() const;

  void zero_grad();

 private:
  Tensor add(const std::string& name, Group group, Tensor t);

  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

double linear_warmup_decay(std::size_t step, std::size_t total_steps, double peak_lr,
                           double warmup_fraction = 0.06);

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay Adam. Learning rates are supplied per group so
// that a group with lr 0 stays bitwise frozen.
class AdamW {
 public:
  explicit AdamW(AdamWOptions opts = {}) : opts_(opts) {}

  void step(std::vector<Parameter>& params, const std::map<Group, double>& lr);
  std::int64_t steps_taken() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamWOptions opts_;
  std::map<std::string, Moments> moments_;
  std::int64_t t_ = 0;
};

// Global L2 norm over all gradients; scales them down to max_norm if above.
double clip_grad_norm(std::vector<Parameter>& params, double max_norm);

}  // namespace pairinfer::nk
