#pragma once

#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pairinfer/base.hpp"
#include "pairinfer/document.hpp"
#include "pairinfer/inference.hpp"

namespace pairinfer {

// Positive relation ids per off-diagonal pair, in PairIndex order. Every
// relation not listed is a negative for that pair.
struct LabelSet {
  std::vector<std::vector<int>> positives;
};

LabelSet labels_from_document(const Document& doc, const RelationVocab& relations);

// Adaptive-threshold loss averaged over pairs. Column 0 of `logits` is TH.
nk::Tensor atl_loss(const nk::Tensor& logits, const LabelSet& labels);

// Replaces the ids of round(rate * P) distinct off-diagonal cells with a
// different id drawn uniformly from [0, num_ids). Diagonal ids are kept.
std::vector<std::size_t> inject_noise(std::span<const std::size_t> ids, std::size_t n, double rate,
                                      std::size_t num_ids, std::mt19937_64& rng);

inline constexpr double kMaxNoiseRate = 0.4;
double sample_noise_rate(std::mt19937_64& rng);

// Predictor MLP of the contrastive objective, width -> 2*width -> width.
class ContrastiveHead {
 public:
  ContrastiveHead(std::size_t width, nk::ParameterStore& store, std::mt19937_64& rng);
  nk::Tensor predict(const nk::Tensor& m) const;
  std::size_t width() const { return width_; }

 private:
  std::size_t width_;
  nk::Tensor w1_, b1_, w2_, b2_;
};

struct ContrastiveResult {
  nk::Tensor loss;
  nk::Tensor refined_logits;  // C x (|R|+1) from the (F_0, noised R) branch
  std::size_t skipped_cells = 0;
  double rate_bar = 0.0;
  double rate_hat = 0.0;
};

// 2 - [cos(MLP(M^), SG(M-)) + cos(MLP(M-), SG(M^))], cosines averaged over
// off-diagonal cells. Cells with a zero-norm vector are skipped and counted.
nk::Tensor contrastive_from_outputs(const nk::Tensor& m_bar, const nk::Tensor& m_hat,
                                    const ContrastiveHead& head, const PairIndex& index,
                                    std::size_t* skipped = nullptr);

// Two independently noised relation matrices; the second branch runs with
// feature and relation slots exchanged. f0 is C x d, base_ids has C entries.
ContrastiveResult contrastive_loss(const InferenceModule& module, const nk::Tensor& f0,
                                   std::span<const std::size_t> base_ids,
                                   const RelationEmbedder& embed, std::size_t num_ids,
                                   const ContrastiveHead& head, double rate_bar, double rate_hat,
                                   std::mt19937_64& rng);

// L_R(base) + L_R(refined) + lambda * L_C; undefined terms are left out.
nk::Tensor stage2_objective(const nk::Tensor& atl_base, const nk::Tensor& atl_refined,
                            const nk::Tensor& contrastive, double lambda);

}  // namespace pairinfer
