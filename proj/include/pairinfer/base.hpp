#pragma once

#include <random>
#include <span>
#include <vector>

#include "pairinfer/encoder.hpp"
#include "pairinfer/optim.hpp"
#include "pairinfer/tensor.hpp"

namespace pairinfer {

// Ordered entity pairs of an N-entity document. Matrix cells are addressed
// row-major, cell = s * N + o; the off-diagonal cells are listed in that
// order and make up the P = N(N-1) pairs that carry labels.
class PairIndex {
 public:
  explicit PairIndex(std::size_t n);

  std::size_t n() const { return n_; }
  std::size_t num_cells() const { return n_ * n_; }
  std::size_t num_pairs() const { return cells_.size(); }
  std::size_t cell(std::size_t s, std::size_t o) const { return s * n_ + o; }
  std::size_t subject(std::size_t pair) const { return subjects_[pair]; }
  std::size_t object(std::size_t pair) const { return objects_[pair]; }
  // Pair slot of cell (s, o), s != o.
  std::size_t pair(std::size_t s, std::size_t o) const;

  const std::vector<std::size_t>& cells() const { return cells_; }
  const std::vector<std::size_t>& subjects() const { return subjects_; }
  const std::vector<std::size_t>& objects() const { return objects_; }

 private:
  std::size_t n_;
  std::vector<std::size_t> cells_, subjects_, objects_;
};

// Logit column 0 is the adaptive threshold class TH; column r >= 1 is
// relation id r. Relation-embedding row 0 is NA, rows 1..|R| relations and
// row |R|+1 a reserved mask id.
inline constexpr std::size_t kThresholdClass = 0;

struct BaseConfig {
  std::size_t d_model = 64;
  std::size_t num_relations = 0;  // |R|, without TH
  std::size_t relation_dim = 64;  // d_r
};

struct PairMatrices {
  std::size_t n = 0;
  std::size_t iteration = 0;
  nk::Tensor F;  // N x N x d
  nk::Tensor R;  // N x N x d_r
  std::vector<std::size_t> relation_ids;  // N*N, NA on the diagonal
};

struct BaseOutput {
  PairMatrices matrices;
  nk::Tensor logits;  // P x (|R|+1), off-diagonal pairs in PairIndex order
};

class BaseModule {
 public:
  BaseModule(const BaseConfig& cfg, nk::ParameterStore& store, std::mt19937_64& rng);

  // Rows are pairs: h_s, h_o, c_so are P x d; result P x d.
  nk::Tensor pair_feature(const nk::Tensor& h_s, const nk::Tensor& h_o, const nk::Tensor& c_so) const;
  // Raw logits W_r F + b_r, P x (|R|+1).
  nk::Tensor pair_logits(const nk::Tensor& features) const;
  BaseOutput build_pair_matrices(const EncodedDocument& enc) const;

  // Embedding rows for relation ids (NA = 0), one per id.
  nk::Tensor embed_relations(std::span<const std::size_t> ids) const;

  const BaseConfig& config() const { return cfg_; }
  std::size_t num_classes() const { return cfg_.num_relations + 1; }
  std::size_t mask_id() const { return cfg_.num_relations + 1; }

 private:
  BaseConfig cfg_;
  nk::Tensor w_s_, w_o_, fnn_w1_, fnn_b1_, fnn_w2_, fnn_b2_, w_r_, b_r_, relation_emb_;
};

// Relations whose logit beats the threshold logit; empty means NA.
std::vector<int> decide_relations(std::span<const double> logits);
// Argmax over all classes including TH, which maps to NA (0).
std::size_t top_class(std::span<const double> logits);
// Elementwise sigmoid of raw logits, for presentation only.
std::vector<double> probability_view(std::span<const double> logits);

// Relation ids for every cell of an N x N matrix from off-diagonal logits.
std::vector<std::size_t> argmax_relation_ids(const nk::Tensor& pair_logits, const PairIndex& index);

}  // namespace pairinfer
