#pragma once

#include <array>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "pairinfer/base.hpp"
#include "pairinfer/ops.hpp"
#include "pairinfer/optim.hpp"

namespace pairinfer {

inline constexpr std::size_t kEcaHeads = 4;

// Which memory cells each head of each target cell may attend to. Head 0
// covers row s, head 1 column s, head 2 row o, head 3 column o of target
// (s, o); diagonal cells are never attended to. Masks are (N*N) x (N*N),
// row = target cell, column = memory cell.
struct EcaMask {
  std::size_t n = 0;
  bool full_attention = false;
  std::array<nk::Mask, kEcaHeads> heads;

  static EcaMask build(std::size_t n, bool full_attention = false);
  bool allowed(std::size_t head, std::size_t target_cell, std::size_t memory_cell) const {
    return heads[head][target_cell * n * n + memory_cell] != 0;
  }
};

using EcaWeights = std::array<nk::Tensor, kEcaHeads>;

// Extended cross attention: four full-width heads, each with its own
// query/key/value projection (stored as column blocks), merged by W_O.
class EcaUnit {
 public:
  EcaUnit(const std::string& prefix, std::size_t query_dim, std::size_t memory_dim,
          nk::ParameterStore& store, std::mt19937_64& rng);

  // query: C x d_q, memory: C x d_m, C = N*N. Returns C x d_q.
  nk::Tensor forward(const nk::Tensor& query, const nk::Tensor& memory, const EcaMask& mask,
                     EcaWeights* weights = nullptr) const;

  std::size_t query_dim() const { return dq_; }

 private:
  std::size_t dq_;
  nk::Tensor wq_, wk_, wv_, wo_;
};

struct LayerTrace {
  EcaWeights feature;
  EcaWeights relation;
};

class InferenceLayer {
 public:
  InferenceLayer(const std::string& prefix, std::size_t d, nk::ParameterStore& store,
                 std::mt19937_64& rng);

  // Gated fusion s * F~ + (1 - s) * R~ with s = sigmoid([F~, R~] W_g + b_g).
  nk::Tensor fuse(const nk::Tensor& f_tilde, const nk::Tensor& r_tilde) const;

  // One layer update of (F_l, R_l), both C x d.
  std::pair<nk::Tensor, nk::Tensor> forward(const nk::Tensor& f, const nk::Tensor& r,
                                            const EcaMask& mask, bool no_fusion,
                                            LayerTrace* trace = nullptr) const;

 private:
  struct Ffn {
    nk::Tensor w1, b1, w2, b2;
  };
  nk::Tensor ffn(const Ffn& p, const nk::Tensor& x) const;

  EcaUnit feature_eca_;
  EcaUnit relation_eca_;
  nk::Tensor w_g_, b_g_;
  Ffn ffn_f_, ffn_r_;
  nk::Tensor ln_f_g_, ln_f_b_, ln_r_g_, ln_r_b_;
};

struct InferenceConfig {
  std::size_t d_model = 64;  // also the relation-embedding width
  std::size_t num_layers = 2;  // N_I
  std::size_t num_classes = 0;  // |R| + 1
  bool full_attention = false;  // replace ECA regions by all off-diagonal cells
  bool no_fusion = false;
  bool carry_features = false;  // feed F_{N_I} into the next iteration instead of F_0
};

struct RefineOutput {
  nk::Tensor logits;  // C x (|R|+1), every cell including the diagonal
  nk::Tensor top;     // C x 2d, [feature slot, relation slot] of the last layer
};

using RelationEmbedder = std::function<nk::Tensor(std::span<const std::size_t>)>;

class InferenceModule {
 public:
  InferenceModule(const InferenceConfig& cfg, nk::ParameterStore& store, std::mt19937_64& rng);

  // N_I layers then the shared classifier on [F_{N_I}, R_{N_I}]. The two
  // inputs are the feature slot and relation slot, each C x d.
  RefineOutput refine_once(const nk::Tensor& feature_slot, const nk::Tensor& relation_slot,
                           std::size_t n, std::vector<LayerTrace>* trace = nullptr) const;

  // K refinement rounds starting from the base output. Entry k of the
  // result holds the P x (|R|+1) off-diagonal logits after k rounds;
  // entry 0 is the base module's logits.
  std::vector<nk::Tensor> iterate(const BaseOutput& base, const RelationEmbedder& embed,
                                  std::size_t K) const;

  const InferenceConfig& config() const { return cfg_; }
  InferenceConfig& mutable_config() { return cfg_; }

 private:
  InferenceConfig cfg_;
  std::vector<InferenceLayer> layers_;
  nk::Tensor w_c_, b_c_;
};

}  // namespace pairinfer
