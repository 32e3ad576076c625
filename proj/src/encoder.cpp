#include "pairinfer/encoder.hpp"

#include <cmath>

namespace pairinfer {

using nk::Group;
using nk::Tensor;

namespace {
// Inverted dropout: kept entries are scaled by 1 / (1 - rate).
Tensor dropout(const Tensor& x, double rate, std::mt19937_64* rng) {
  if (rng == nullptr || rate <= 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = keep(*rng) ? 1.0 / (1.0 - rate) : 0.0;
  return nk::mul(x, Tensor(x.shape(), std::move(mask)));
}
}  // namespace

Encoder::Encoder(const EncoderConfig& cfg, nk::ParameterStore& store, std::mt19937_64& rng)
    : cfg_(cfg) {
  if (cfg.vocab_size < 3) throw std::invalid_argument("encoder vocabulary too small");
  if (cfg.d_model % cfg.heads != 0) throw std::invalid_argument("d_model must divide by heads");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw std::invalid_argument("dropout must lie in [0, 1)");
  const auto d = cfg.d_model;
  token_emb_ = store.add_uniform("encoder.token_emb", Group::encoder, {cfg.vocab_size, d}, 1.0, rng);
  pos_emb_ = store.add_uniform("encoder.pos_emb", Group::encoder, {cfg.max_length, d}, 1.0, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    Layer L;
    L.wq = store.add_weight(p + "wq", Group::encoder, d, d, rng);
    L.bq = store.add_zeros(p + "bq", Group::encoder, {d});
    L.wk = store.add_weight(p + "wk", Group::encoder, d, d, rng);
    L.bk = store.add_zeros(p + "bk", Group::encoder, {d});
    L.wv = store.add_weight(p + "wv", Group::encoder, d, d, rng);
    L.bv = store.add_zeros(p + "bv", Group::encoder, {d});
    L.wo = store.add_weight(p + "wo", Group::encoder, d, d, rng);
    L.bo = store.add_zeros(p + "bo", Group::encoder, {d});
    L.ln1_g = store.add_constant(p + "ln1_g", Group::encoder, {d}, 1.0);
    L.ln1_b = store.add_zeros(p + "ln1_b", Group::encoder, {d});
    L.w1 = store.add_weight(p + "w1", Group::encoder, d, cfg.ffn_width, rng);
    L.b1 = store.add_zeros(p + "b1", Group::encoder, {cfg.ffn_width});
    L.w2 = store.add_weight(p + "w2", Group::encoder, cfg.ffn_width, d, rng);
    L.b2 = store.add_zeros(p + "b2", Group::encoder, {d});
    L.ln2_g = store.add_constant(p + "ln2_g", Group::encoder, {d}, 1.0);
    L.ln2_b = store.add_zeros(p + "ln2_b", Group::encoder, {d});
    layers_.push_back(std::move(L));
  }
}

EncodedDocument Encoder::encode(std::span<const int> ids, std::mt19937_64* dropout_rng) const {
  const std::size_t len = ids.size();
  if (len == 0) throw DataError("cannot encode an empty token sequence");
  if (len > cfg_.max_length) {
    throw DataError("sequence of " + std::to_string(len) + " tokens exceeds max_length " +
                    std::to_string(cfg_.max_length));
  }
  std::vector<std::size_t> rows(len);
  for (std::size_t i = 0; i < len; ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= cfg_.vocab_size) {
      throw DataError("token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                      std::to_string(cfg_.vocab_size));
    }
    rows[i] = static_cast<std::size_t>(ids[i]);
  }
  const std::size_t dh = cfg_.d_model / cfg_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  const double rate = cfg_.dropout;
  Tensor x = dropout(nk::add(nk::gather_rows(token_emb_, rows), nk::slice(pos_emb_, 0, 0, len)), rate, dropout_rng);
  EncodedDocument out;
  for (const auto& L : layers_) {
    Tensor q = nk::add_row(nk::matmul(x, L.wq), L.bq);
    Tensor k = nk::add_row(nk::matmul(x, L.wk), L.bk);
    Tensor v = nk::add_row(nk::matmul(x, L.wv), L.bv);
    std::vector<Tensor> heads, probs;
    for (std::size_t h = 0; h < cfg_.heads; ++h) {
      Tensor qh = nk::slice(q, 1, h * dh, dh);
      Tensor kh = nk::slice(k, 1, h * dh, dh);
      Tensor vh = nk::slice(v, 1, h * dh, dh);
      Tensor p = nk::softmax(nk::scale(nk::matmul(qh, nk::transpose(kh)), inv_sqrt), 1);
      heads.push_back(nk::matmul(p, vh));
      probs.push_back(p);
    }
    Tensor attn = nk::add_row(nk::matmul(nk::concat(heads, 1), L.wo), L.bo);
    x = nk::layer_norm(nk::add(x, dropout(attn, rate, dropout_rng)), L.ln1_g, L.ln1_b);
    Tensor ff = nk::add_row(nk::matmul(nk::gelu(nk::add_row(nk::matmul(x, L.w1), L.b1)), L.w2), L.b2);
    x = nk::layer_norm(nk::add(x, dropout(ff, rate, dropout_rng)), L.ln2_g, L.ln2_b);
    out.head_attention = std::move(probs);
  }
  Tensor avg = out.head_attention[0];
  for (std::size_t h = 1; h < out.head_attention.size(); ++h) avg = nk::add(avg, out.head_attention[h]);
  out.A = nk::scale(avg, 1.0 / static_cast<double>(out.head_attention.size()));
  out.H = x;
  return out;
}

EncodedDocument Encoder::encode(const Document& doc, const Vocabulary& vocab, std::mt19937_64* dropout_rng) const {
  std::vector<int> ids = vocab.encode(doc.words);
  std::vector<TokenSpan> spans;
  for (const auto& e : doc.entities) {
    for (const auto& m : e.mentions) spans.push_back(m.span);
  }
  auto marked = mark_mentions<int>(ids, spans, Vocabulary::kMarker);
  EncodedDocument enc = encode(marked.tokens, dropout_rng);
  std::size_t k = 0;
  for (const auto& e : doc.entities) {
    std::vector<std::size_t> rows;
    for (std::size_t m = 0; m < e.mentions.size(); ++m) rows.push_back(marked.start_markers[k++]);
    enc.entity_markers.push_back(std::move(rows));
  }
  return enc;
}

namespace {
const std::vector<std::size_t>& markers_of(const EncodedDocument& enc, std::size_t entity) {
  if (entity >= enc.entity_markers.size()) throw DataError("entity index out of range");
  const auto& rows = enc.entity_markers[entity];
  if (rows.empty()) throw DataError("entity " + std::to_string(entity) + " has no mentions");
  return rows;
}
}  // namespace

Tensor entity_embedding(const EncodedDocument& enc, std::size_t entity) {
  return nk::logsumexp(nk::gather_rows(enc.H, markers_of(enc, entity)), 0);
}

Tensor entity_embeddings(const EncodedDocument& enc) {
  std::vector<Tensor> rows;
  const std::size_t d = enc.H.dim(1);
  for (std::size_t e = 0; e < enc.num_entities(); ++e) {
    rows.push_back(nk::reshape(entity_embedding(enc, e), {1, d}));
  }
  return nk::concat(rows, 0);
}

Tensor entity_attention(const EncodedDocument& enc, std::size_t entity) {
  Tensor pooled = nk::mean(nk::gather_rows(enc.A, markers_of(enc, entity)), 0);
  return nk::reshape(nk::normalize_rows(nk::reshape(pooled, {1, enc.length()})), {enc.length()});
}

Tensor entity_attentions(const EncodedDocument& enc) {
  std::vector<Tensor> rows;
  for (std::size_t e = 0; e < enc.num_entities(); ++e) {
    rows.push_back(nk::reshape(entity_attention(enc, e), {1, enc.length()}));
  }
  return nk::concat(rows, 0);
}

Tensor local_contexts(const EncodedDocument& enc, const Tensor& attn,
                      std::span<const std::size_t> subjects, std::span<const std::size_t> objects) {
  Tensor prod = nk::mul(nk::gather_rows(attn, subjects), nk::gather_rows(attn, objects));
  return nk::matmul(nk::normalize_rows(prod, kContextEps), enc.H);
}

Tensor local_context(const EncodedDocument& enc, std::size_t s, std::size_t o) {
  Tensor attn = entity_attentions(enc);
  std::size_t ss[] = {s};
  std::size_t oo[] = {o};
  return nk::reshape(local_contexts(enc, attn, ss, oo), {enc.H.dim(1)});
}

}  // namespace pairinfer
