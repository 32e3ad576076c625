#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "pairinfer/document.hpp"
#include "pairinfer/ops.hpp"
#include "pairinfer/optim.hpp"
#include "pairinfer/tensor.hpp"

namespace pairinfer {

template <class T>
struct MarkedSequence {
  std::vector<T> tokens;
  std::vector<std::size_t> start_markers;  // one per input mention, same order
  std::vector<std::uint8_t> is_marker;
};

// Inserts `marker` immediately before and after every mention span. Events
// at the same position put closing markers ahead of opening ones; opening
// markers sharing a start keep the input mention order.
template <class T>
MarkedSequence<T> mark_mentions(std::span<const T> tokens, std::span<const TokenSpan> mentions,
                                const T& marker);

template <class T>
std::vector<T> strip_markers(const MarkedSequence<T>& marked) {
  std::vector<T> out;
  for (std::size_t i = 0; i < marked.tokens.size(); ++i) {
    if (!marked.is_marker[i]) out.push_back(marked.tokens[i]);
  }
  return out;
}

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t ffn_width = 256;
  std::size_t max_length = 512;
  double dropout = 0.0;
};

struct EncodedDocument {
  nk::Tensor H;                              // L' x d
  std::vector<nk::Tensor> head_attention;    // heads x (L' x L'), last layer
  nk::Tensor A;                              // L' x L', head average of the above
  std::vector<std::vector<std::size_t>> entity_markers;  // start-marker rows per entity

  std::size_t length() const { return H.dim(0); }
  std::size_t num_entities() const { return entity_markers.size(); }
};

// Small post-LN transformer standing in for a pre-trained language model.
class Encoder {
 public:
  Encoder(const EncoderConfig& cfg, nk::ParameterStore& store, std::mt19937_64& rng);

  // Encodes marked token ids. Throws DataError on ids outside the vocabulary
  // or sequences longer than max_length. Dropout is applied only when a
  // generator is given.
  EncodedDocument encode(std::span<const int> ids, std::mt19937_64* dropout_rng = nullptr) const;
  // Marks the document's mentions and encodes the result.
  EncodedDocument encode(const Document& doc, const Vocabulary& vocab,
                         std::mt19937_64* dropout_rng = nullptr) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  struct Layer {
    nk::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    nk::Tensor ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
  };
  EncoderConfig cfg_;
  nk::Tensor token_emb_, pos_emb_;
  std::vector<Layer> layers_;
};

// logsumexp over the start-marker embeddings of one entity's mentions.
nk::Tensor entity_embedding(const EncodedDocument& enc, std::size_t entity);
// All entities stacked, N x d.
nk::Tensor entity_embeddings(const EncodedDocument& enc);

// Mean of the entity's start-marker attention rows, renormalized to sum 1.
nk::Tensor entity_attention(const EncodedDocument& enc, std::size_t entity);
nk::Tensor entity_attentions(const EncodedDocument& enc);  // N x L'

// H^T (A_s * A_o) / 1^T(A_s * A_o); uniform weights when the overlap
// mass is below 1e-12.
nk::Tensor local_context(const EncodedDocument& enc, std::size_t s, std::size_t o);
// Rows of `attn` (N x L') combined for each (subject, object) pair, P x d.
nk::Tensor local_contexts(const EncodedDocument& enc, const nk::Tensor& attn,
                          std::span<const std::size_t> subjects,
                          std::span<const std::size_t> objects);

inline constexpr double kContextEps = 1e-12;

}  // namespace pairinfer

#include "pairinfer/encoder_inl.hpp"
