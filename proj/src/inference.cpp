#include "pairinfer/inference.hpp"

#include <cmath>

#include "pairinfer/errors.hpp"

namespace pairinfer {

using nk::Group;
using nk::Tensor;

EcaMask EcaMask::build(std::size_t n, bool full_attention) {
  if (n < 2) throw DataError("ECA needs at least 2 entities");
  EcaMask m;
  m.n = n;
  m.full_attention = full_attention;
  const std::size_t c = n * n;
  for (auto& h : m.heads) h.assign(c * c, 0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < n; ++o) {
      const std::size_t target = s * n + o;
      for (std::size_t j = 0; j < n; ++j) {
        if (full_attention) {
          for (std::size_t i = 0; i < n; ++i) {
            if (i == j) continue;
            for (auto& h : m.heads) h[target * c + i * n + j] = 1;
          }
          continue;
        }
        if (j != s) {
          m.heads[0][target * c + s * n + j] = 1;  // row s
          m.heads[1][target * c + j * n + s] = 1;  // column s
        }
        if (j != o) {
          m.heads[2][target * c + o * n + j] = 1;  // row o
          m.heads[3][target * c + j * n + o] = 1;  // column o
        }
      }
    }
  }
  return m;
}

EcaUnit::EcaUnit(const std::string& prefix, std::size_t query_dim, std::size_t memory_dim,
                 nk::ParameterStore& store, std::mt19937_64& rng)
    : dq_(query_dim) {
  wq_ = store.add_weight(prefix + ".wq", Group::inference, query_dim, kEcaHeads * query_dim, rng);
  wk_ = store.add_weight(prefix + ".wk", Group::inference, memory_dim, kEcaHeads * query_dim, rng);
  wv_ = store.add_weight(prefix + ".wv", Group::inference, memory_dim, kEcaHeads * query_dim, rng);
  wo_ = store.add_weight(prefix + ".wo", Group::inference, kEcaHeads * query_dim, query_dim, rng);
}

Tensor EcaUnit::forward(const Tensor& query, const Tensor& memory, const EcaMask& mask,
                        EcaWeights* weights) const {
  if (mask.n < 2) throw DataError("ECA needs at least 2 entities");
  const std::size_t cells = mask.n * mask.n;
  if (query.dim(0) != cells || memory.dim(0) != cells) {
    throw ShapeError("ECA inputs must have one row per matrix cell");
  }
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dq_));
  Tensor q = nk::matmul(query, wq_);
  Tensor k = nk::matmul(memory, wk_);
  Tensor v = nk::matmul(memory, wv_);
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < kEcaHeads; ++h) {
    Tensor qh = nk::slice(q, 1, h * dq_, dq_);
    Tensor kh = nk::slice(k, 1, h * dq_, dq_);
    Tensor vh = nk::slice(v, 1, h * dq_, dq_);
    Tensor p = nk::softmax(nk::scale(nk::matmul(qh, nk::transpose(kh)), inv_sqrt), 1, mask.heads[h]);
    if (weights) (*weights)[h] = p;
    heads.push_back(nk::matmul(p, vh));
  }
  return nk::matmul(nk::concat(heads, 1), wo_);
}

InferenceLayer::InferenceLayer(const std::string& prefix, std::size_t d, nk::ParameterStore& store,
                               std::mt19937_64& rng)
    : feature_eca_(prefix + ".feature_eca", d, 2 * d, store, rng),
      relation_eca_(prefix + ".relation_eca", d, 2 * d, store, rng) {
  w_g_ = store.add_weight(prefix + ".w_g", Group::inference, 2 * d, d, rng);
  b_g_ = store.add_zeros(prefix + ".b_g", Group::inference, {d});
  auto make_ffn = [&](const std::string& p) {
    Ffn f;
    f.w1 = store.add_weight(p + ".w1", Group::inference, d, 2 * d, rng);
    f.b1 = store.add_zeros(p + ".b1", Group::inference, {2 * d});
    f.w2 = store.add_weight(p + ".w2", Group::inference, 2 * d, d, rng);
    f.b2 = store.add_zeros(p + ".b2", Group::inference, {d});
    return f;
  };
  ffn_f_ = make_ffn(prefix + ".ffn_f");
  ffn_r_ = make_ffn(prefix + ".ffn_r");
  ln_f_g_ = store.add_constant(prefix + ".ln_f_g", Group::inference, {d}, 1.0);
  ln_f_b_ = store.add_zeros(prefix + ".ln_f_b", Group::inference, {d});
  ln_r_g_ = store.add_constant(prefix + ".ln_r_g", Group::inference, {d}, 1.0);
  ln_r_b_ = store.add_zeros(prefix + ".ln_r_b", Group::inference, {d});
}

Tensor InferenceLayer::ffn(const Ffn& p, const Tensor& x) const {
  return nk::add_row(nk::matmul(nk::gelu(nk::add_row(nk::matmul(x, p.w1), p.b1)), p.w2), p.b2);
}

Tensor InferenceLayer::fuse(const Tensor& f_tilde, const Tensor& r_tilde) const {
  Tensor gate = nk::sigmoid(nk::add_row(nk::matmul(nk::concat({f_tilde, r_tilde}, 1), w_g_), b_g_));
  return nk::add(r_tilde, nk::mul(gate, nk::sub(f_tilde, r_tilde)));
}

std::pair<Tensor, Tensor> InferenceLayer::forward(const Tensor& f, const Tensor& r,
                                                  const EcaMask& mask, bool no_fusion,
                                                  LayerTrace* trace) const {
  Tensor memory = nk::concat({f, r}, 1);
  Tensor f_tilde = feature_eca_.forward(f, memory, mask, trace ? &trace->feature : nullptr);
  Tensor r_tilde = relation_eca_.forward(r, memory, mask, trace ? &trace->relation : nullptr);
  Tensor to_f = f_tilde;
  Tensor to_r = r_tilde;
  if (!no_fusion) {
    to_f = fuse(f_tilde, r_tilde);
    to_r = to_f;
  }
  Tensor f_next = nk::layer_norm(nk::add(f, ffn(ffn_f_, to_f)), ln_f_g_, ln_f_b_);
  Tensor r_next = nk::layer_norm(nk::add(r, ffn(ffn_r_, to_r)), ln_r_g_, ln_r_b_);
  return {f_next, r_next};
}

InferenceModule::InferenceModule(const InferenceConfig& cfg, nk::ParameterStore& store,
                                 std::mt19937_64& rng)
    : cfg_(cfg) {
  if (cfg.num_layers == 0) throw std::invalid_argument("inference module needs at least one layer");
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    layers_.emplace_back("inference.layer" + std::to_string(l), cfg.d_model, store, rng);
  }
  w_c_ = store.add_weight("inference.w_c", Group::inference, 2 * cfg.d_model, cfg.num_classes, rng);
  b_c_ = store.add_zeros("inference.b_c", Group::inference, {cfg.num_classes});
}

RefineOutput InferenceModule::refine_once(const Tensor& feature_slot, const Tensor& relation_slot,
                                          std::size_t n, std::vector<LayerTrace>* trace) const {
  EcaMask mask = EcaMask::build(n, cfg_.full_attention);
  Tensor f = feature_slot;
  Tensor r = relation_slot;
  if (trace) trace->assign(layers_.size(), {});
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    std::tie(f, r) = layers_[l].forward(f, r, mask, cfg_.no_fusion, trace ? &(*trace)[l] : nullptr);
  }
  RefineOutput out;
  out.top = nk::concat({f, r}, 1);
  out.logits = nk::add_row(nk::matmul(out.top, w_c_), b_c_);
  return out;
}

std::vector<Tensor> InferenceModule::iterate(const BaseOutput& base, const RelationEmbedder& embed,
                                             std::size_t K) const {
  const auto& m = base.matrices;
  const std::size_t n = m.n;
  const std::size_t cells = n * n;
  PairIndex index(n);
  Tensor f0 = nk::reshape(m.F, {cells, cfg_.d_model});
  Tensor r = nk::reshape(m.R, {cells, cfg_.d_model});
  Tensor f = f0;
  std::vector<Tensor> history{base.logits};
  for (std::size_t k = 0; k < K; ++k) {
    RefineOutput out = refine_once(f, r, n);
    Tensor pair_logits = nk::gather_rows(out.logits, index.cells());
    history.push_back(pair_logits);
    if (k + 1 == K) break;
    auto ids = argmax_relation_ids(pair_logits, index);
    r = embed(ids);
    f = cfg_.carry_features ? nk::slice(out.top, 1, 0, cfg_.d_model) : f0;
  }
  return history;
}

}  // namespace pairinfer
