#include "pairinfer/model.hpp"

#include <tuple>

namespace pairinfer {

Model::Model(const ModelConfig& cfg, Vocabulary vocab, RelationVocab relations, std::uint64_t init_seed)
    : cfg_(cfg), vocab_(std::move(vocab)), relations_(std::move(relations)) {
  std::mt19937_64 rng(init_seed);
  EncoderConfig ec;
  ec.vocab_size = vocab_.size();
  ec.d_model = cfg.d_model;
  ec.heads = cfg.encoder_heads;
  ec.layers = cfg.encoder_layers;
  ec.ffn_width = cfg.ffn_width;
  ec.max_length = cfg.max_length;
  ec.dropout = cfg.dropout;
  encoder_ = std::make_unique<Encoder>(ec, store_, rng);

  BaseConfig bc;
  bc.d_model = cfg.d_model;
  bc.num_relations = relations_.size();
  bc.relation_dim = cfg.d_model;
  base_ = std::make_unique<BaseModule>(bc, store_, rng);

  InferenceConfig ic;
  ic.d_model = cfg.d_model;
  ic.num_layers = cfg.inference_layers;
  ic.num_classes = num_classes();
  ic.full_attention = cfg.full_attention;
  ic.no_fusion = cfg.no_fusion;
  ic.carry_features = cfg.carry_features;
  inference_ = std::make_unique<InferenceModule>(ic, store_, rng);
  head_ = std::make_unique<ContrastiveHead>(2 * cfg.d_model, store_, rng);
}

EncodedDocument Model::encode(const Document& doc, std::mt19937_64* dropout_rng) const {
  return encoder_->encode(doc, vocab_, dropout_rng);
}

BaseOutput Model::forward_base(const Document& doc, std::mt19937_64* dropout_rng) const {
  return base_->build_pair_matrices(encode(doc, dropout_rng));
}

RelationEmbedder Model::embedder() const {
  const BaseModule* base = base_.get();
  return [base](std::span<const std::size_t> ids) { return base->embed_relations(ids); };
}

std::vector<nk::Tensor> Model::predict_history(const Document& doc, std::size_t K) const {
  BaseOutput out = forward_base(doc);
  if (K == 0) return {out.logits};
  return inference_->iterate(out, embedder(), K);
}

std::vector<std::tuple<std::size_t, std::size_t, std::string>> decode_pairs(const nk::Tensor& pair_logits,
                                                                             std::size_t num_entities,
                                                                             const RelationVocab& relations) {
  PairIndex index(num_entities);
  const std::size_t classes = pair_logits.dim(1);
  std::vector<std::tuple<std::size_t, std::size_t, std::string>> out;
  for (std::size_t p = 0; p < index.num_pairs(); ++p) {
    auto row = pair_logits.values().subspan(p * classes, classes);
    for (int r : decide_relations(row)) out.emplace_back(index.subject(p), index.object(p), relations.name(r));
  }
  return out;
}

}  // namespace pairinfer
