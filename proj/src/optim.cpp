#include "pairinfer/optim.hpp"

#include <cmath>

#include "pairinfer/errors.hpp"

namespace pairinfer::nk {

std::string_view group_name(Group g) {
  switch (g) {
    case Group::encoder:
      return "encoder";
    case Group::base:
      return "base";
    case Group::inference:
      return "inference";
  }
  return "?";
}

Group parse_group(std::string_view name) {
  for (auto g : kAllGroups) {
    if (group_name(g) == name) return g;
  }
  throw DataError("unknown parameter group '" + std::string(name) + "'");
}

Tensor ParameterStore::add(const std::string& name, Group group, Tensor t) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter name " + name);
  t.set_requires_grad(true);
  index_[name] = params_.size();
  params_.push_back({t, name, group});
  return t;
}

Tensor ParameterStore::add_weight(const std::string& name, Group group, std::size_t fan_in,
                                  std::size_t fan_out, std::mt19937_64& rng) {
  double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return add_uniform(name, group, {fan_in, fan_out}, limit, rng);
}

Tensor ParameterStore::add_zeros(const std::string& name, Group group, Shape shape) {
  return add(name, group, Tensor::zeros(std::move(shape)));
}

Tensor ParameterStore::add_constant(const std::string& name, Group group, Shape shape,
                                    double value) {
  return add(name, group, Tensor::full(std::move(shape), value));
}

Tensor ParameterStore::add_uniform(const std::string& name, Group group, Shape shape,
                                   double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return add(name, group, Tensor(std::move(shape), std::move(v)));
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw DataError("no parameter named " + name);
  return params_[it->second];
}

std::size_t ParameterStore::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

double linear_warmup_decay(std::size_t step, std::size_t total_steps, double peak_lr,
                           double warmup_fraction) {
  if (total_steps == 0) throw std::invalid_argument("schedule needs total_steps > 0");
  if (step > total_steps) throw std::invalid_argument("step beyond total_steps");
  const double s = static_cast<double>(step);
  const double total = static_cast<double>(total_steps);
  const double warm = warmup_fraction * total;
  if (s < warm) return peak_lr * s / warm;
  if (total <= warm) return peak_lr;
  return peak_lr * (total - s) / (total - warm);
}

void AdamW::step(std::vector<Parameter>& params, const std::map<Group, double>& lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (auto& p : params) {
    auto it = lr.find(p.group);
    const double rate = it == lr.end() ? 0.0 : it->second;
    if (rate == 0.0) continue;
    auto* d = p.tensor.impl();
    if (d->grad.size() != d->value.size()) continue;
    auto& mom = moments_[p.name];
    if (mom.m.empty()) {
      mom.m.assign(d->value.size(), 0.0);
      mom.v.assign(d->value.size(), 0.0);
    }
    for (std::size_t i = 0; i < d->value.size(); ++i) {
      const double g = d->grad[i];
      mom.m[i] = opts_.beta1 * mom.m[i] + (1.0 - opts_.beta1) * g;
      mom.v[i] = opts_.beta2 * mom.v[i] + (1.0 - opts_.beta2) * g * g;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      d->value[i] -= rate * (mhat / (std::sqrt(vhat) + opts_.eps) + opts_.weight_decay * d->value[i]);
    }
  }
}

double clip_grad_norm(std::vector<Parameter>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    for (double g : p.tensor.impl()->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / (norm + 1e-12);
    for (auto& p : params) {
      for (double& g : p.tensor.impl()->grad) g *= f;
    }
  }
  return norm;
}

}  // namespace pairinfer::nk
