#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "pairinfer/base.hpp"
#include "pairinfer/document.hpp"
#include "pairinfer/encoder.hpp"
#include "pairinfer/inference.hpp"
#include "pairinfer/losses.hpp"
#include "pairinfer/optim.hpp"

namespace pairinfer {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t encoder_heads = 4;
  std::size_t encoder_layers = 2;
  std::size_t ffn_width = 256;
  std::size_t max_length = 512;
  double dropout = 0.1;  // encoder, training only
  std::size_t inference_layers = 2;  // N_I
  bool full_attention = false;
  bool no_fusion = false;
  bool carry_features = false;
};

// Encoder, base module, inference module and contrastive head over one
// parameter store. Parameters are created in that order from `init_seed`.
class Model {
 public:
  Model(const ModelConfig& cfg, Vocabulary vocab, RelationVocab relations, std::uint64_t init_seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // A generator switches encoder dropout on (training).
  EncodedDocument encode(const Document& doc, std::mt19937_64* dropout_rng = nullptr) const;
  BaseOutput forward_base(const Document& doc, std::mt19937_64* dropout_rng = nullptr) const;
  // Logits after k = 0..K refinement rounds, each P x (|R|+1).
  std::vector<nk::Tensor> predict_history(const Document& doc, std::size_t K) const;
  RelationEmbedder embedder() const;

  // Relation ids 1..|R| plus NA and the reserved mask id.
  std::size_t num_relation_ids() const { return relations_.size() + 2; }
  std::size_t num_classes() const { return relations_.size() + 1; }

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  const RelationVocab& relations() const { return relations_; }
  nk::ParameterStore& params() { return store_; }
  const nk::ParameterStore& params() const { return store_; }
  const Encoder& encoder() const { return *encoder_; }
  const BaseModule& base() const { return *base_; }
  InferenceModule& inference() { return *inference_; }
  const InferenceModule& inference() const { return *inference_; }
  const ContrastiveHead& contrastive_head() const { return *head_; }

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  RelationVocab relations_;
  nk::ParameterStore store_;
  std::unique_ptr<Encoder> encoder_;
  std::unique_ptr<BaseModule> base_;
  std::unique_ptr<InferenceModule> inference_;
  std::unique_ptr<ContrastiveHead> head_;
};

// Relation names predicted for each off-diagonal pair of `doc`.
std::vector<std::tuple<std::size_t, std::size_t, std::string>> decode_pairs(const nk::Tensor& pair_logits,
                                                                             std::size_t num_entities,
                                                                             const RelationVocab& relations);

}  // namespace pairinfer
