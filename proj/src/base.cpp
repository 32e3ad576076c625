#include "pairinfer/base.hpp"

#include <cmath>

#include "pairinfer/errors.hpp"

namespace pairinfer {

using nk::Group;
using nk::Tensor;

PairIndex::PairIndex(std::size_t n) : n_(n) {
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < n; ++o) {
      if (s == o) continue;
      cells_.push_back(s * n + o);
      subjects_.push_back(s);
      objects_.push_back(o);
    }
  }
}

std::size_t PairIndex::pair(std::size_t s, std::size_t o) const {
  if (s == o || s >= n_ || o >= n_) throw std::out_of_range("pair index on diagonal or out of range");
  return s * (n_ - 1) + (o < s ? o : o - 1);
}

BaseModule::BaseModule(const BaseConfig& cfg, nk::ParameterStore& store, std::mt19937_64& rng)
    : cfg_(cfg) {
  const auto d = cfg.d_model;
  const auto classes = cfg.num_relations + 1;
  w_s_ = store.add_weight("base.w_s", Group::base, 2 * d, d, rng);
  w_o_ = store.add_weight("base.w_o", Group::base, 2 * d, d, rng);
  fnn_w1_ = store.add_weight("base.fnn_w1", Group::base, 2 * d, d, rng);
  fnn_b1_ = store.add_zeros("base.fnn_b1", Group::base, {d});
  fnn_w2_ = store.add_weight("base.fnn_w2", Group::base, d, d, rng);
  fnn_b2_ = store.add_zeros("base.fnn_b2", Group::base, {d});
  w_r_ = store.add_weight("base.w_r", Group::base, d, classes, rng);
  b_r_ = store.add_zeros("base.b_r", Group::base, {classes});
  relation_emb_ = store.add_uniform("base.relation_emb", Group::base,
                                    {cfg.num_relations + 2, cfg.relation_dim}, 1.0, rng);
}

Tensor BaseModule::pair_feature(const Tensor& h_s, const Tensor& h_o, const Tensor& c_so) const {
  Tensor zs = nk::tanh(nk::matmul(nk::concat({h_s, c_so}, 1), w_s_));
  Tensor zo = nk::tanh(nk::matmul(nk::concat({h_o, c_so}, 1), w_o_));
  Tensor hidden = nk::tanh(nk::add_row(nk::matmul(nk::concat({zs, zo}, 1), fnn_w1_), fnn_b1_));
  return nk::add_row(nk::matmul(hidden, fnn_w2_), fnn_b2_);
}

Tensor BaseModule::pair_logits(const Tensor& features) const {
  return nk::add_row(nk::matmul(features, w_r_), b_r_);
}

Tensor BaseModule::embed_relations(std::span<const std::size_t> ids) const {
  return nk::embedding_lookup(relation_emb_, ids);
}

BaseOutput BaseModule::build_pair_matrices(const EncodedDocument& enc) const {
  const std::size_t n = enc.num_entities();
  if (n < 2) throw DataError("pair matrices need at least 2 entities, got " + std::to_string(n));
  PairIndex index(n);
  const auto d = cfg_.d_model;

  Tensor ents = entity_embeddings(enc);
  Tensor attn = entity_attentions(enc);
  Tensor h_s = nk::gather_rows(ents, index.subjects());
  Tensor h_o = nk::gather_rows(ents, index.objects());
  Tensor ctx = local_contexts(enc, attn, index.subjects(), index.objects());
  Tensor feats = pair_feature(h_s, h_o, ctx);

  BaseOutput out;
  out.logits = pair_logits(feats);
  out.matrices.n = n;
  // diagonal cells stay zero in F and hold emb(NA) in R
  out.matrices.F = nk::reshape(nk::scatter_rows(feats, index.cells(), n * n), {n, n, d});
  out.matrices.relation_ids = argmax_relation_ids(out.logits, index);
  out.matrices.R = nk::reshape(embed_relations(out.matrices.relation_ids), {n, n, cfg_.relation_dim});
  return out;
}

std::vector<int> decide_relations(std::span<const double> logits) {
  std::vector<int> out;
  for (std::size_t r = 1; r < logits.size(); ++r) {
    if (logits[r] > logits[kThresholdClass]) out.push_back(static_cast<int>(r));
  }
  return out;
}

std::size_t top_class(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t r = 1; r < logits.size(); ++r) {
    if (logits[r] > logits[best]) best = r;
  }
  return best;
}

std::vector<double> probability_view(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-logits[i]));
  return p;
}

std::vector<std::size_t> argmax_relation_ids(const Tensor& pair_logits, const PairIndex& index) {
  const std::size_t classes = pair_logits.dim(1);
  std::vector<std::size_t> ids(index.num_cells(), 0);
  const auto& v = pair_logits.data();
  for (std::size_t p = 0; p < index.num_pairs(); ++p) {
    ids[index.cells()[p]] = top_class(std::span<const double>(v.data() + p * classes, classes));
  }
  return ids;
}

}  // namespace pairinfer
