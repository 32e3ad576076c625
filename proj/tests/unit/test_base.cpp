#include <doctest.h>

#include <cmath>
#include <random>

#include "pairinfer/base.hpp"
#include "pairinfer/model.hpp"
#include "support/gradcheck.hpp"

using namespace pairinfer;
using nk::Tensor;

namespace {

struct Fixture {
  nk::ParameterStore store;
  std::mt19937_64 rng{21};
  BaseModule base;
  explicit Fixture(std::size_t d = 4, std::size_t relations = 3) : base({d, relations, d}, store, rng) {}

  void zero_all() {
    for (auto& p : store.all()) {
      auto v = p.tensor.mutable_values();
      std::fill(v.begin(), v.end(), 0.0);
    }
  }
};

Document three_entity_doc() {
  Document d;
  d.doc_id = "d";
  d.words = {"ann", "met", "bob", "in", "oslo", "bob", "likes", "oslo"};
  d.sentence_spans = {{0, 5}, {5, 8}};
  d.entities = {{0, {{{0, 1}, 0, "ann"}}},
                {1, {{{2, 3}, 0, "bob"}, {{5, 6}, 1, "bob"}}},
                {2, {{{4, 5}, 0, "oslo"}, {{7, 8}, 1, "oslo"}}}};
  return d;
}

}  // namespace

TEST_CASE("pair feature") {
  Fixture f;
  Tensor z = Tensor::zeros({1, 4});
  f.zero_all();
  const Tensor out = f.base.pair_feature(z, z, z);
  CHECK(out.dim(0) == 1);
  CHECK(out.dim(1) == 4);
  for (double v : out.data()) CHECK(v == 0.0);
  const Tensor logits = f.base.pair_logits(out);
  CHECK(logits.dim(1) == 4);
  for (double p : probability_view(logits.values())) CHECK(p == 0.5);
}

TEST_CASE("pair feature gradient") {
  Fixture f;
  std::mt19937_64 rng(22);
  Tensor hs = testing::random_tensor({3, 4}, rng), ho = testing::random_tensor({3, 4}, rng),
         c = testing::random_tensor({3, 4}, rng);
  std::vector<std::pair<std::string, Tensor>> inputs = {{"h_s", hs}, {"h_o", ho}, {"c", c}};
  for (const auto& p : f.store.all()) {
    if (p.name != "base.relation_emb") inputs.push_back({p.name, p.tensor});
  }
  auto loss = [&] { return nk::sum(f.base.pair_logits(f.base.pair_feature(hs, ho, c))); };
  CHECK(testing::check_gradients(loss, inputs, rng).ok());
}

TEST_CASE("threshold decisions") {
  CHECK(decide_relations(std::vector<double>{1.0, 0.5, -2.0, 0.9}).empty());
  CHECK(decide_relations(std::vector<double>{1.0, 0.5, 1.5, 0.9}) == std::vector<int>{2});
  std::vector<double> l = {0.0, 0.3, -0.1, 2.0, 0.7};
  CHECK(decide_relations(l) == std::vector<int>{1, 3, 4});
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(6);
    for (auto& v : x) v = g(rng);
    std::vector<int> brute;
    for (int r = 1; r < 6; ++r) {
      if (x[r] > x[0]) brute.push_back(r);
    }
    CHECK(decide_relations(x) == brute);
    std::vector<double> shifted = x;
    for (auto& v : shifted) v += 17.25;
    CHECK(decide_relations(shifted) == brute);
  }
}

TEST_CASE("pair matrices") {
  RelationVocab rels({"R1", "R2", "R3"});
  Document doc = three_entity_doc();
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.encoder_heads = 2;
  cfg.encoder_layers = 1;
  cfg.ffn_width = 8;
  Model model(cfg, Vocabulary::build({doc}), rels, 5);
  BaseOutput out = model.forward_base(doc);
  CHECK(out.matrices.n == 3);
  CHECK(out.logits.dim(0) == 6);
  CHECK(out.matrices.F.dim(0) == 3);
  PairIndex index(3);
  const auto& ids = out.matrices.relation_ids;
  for (std::size_t p = 0; p < index.num_pairs(); ++p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < 4; ++c) {
      if (out.logits.at(p, c) > out.logits.at(p, best)) best = c;
    }
    CHECK(ids[index.cells()[p]] == best);
  }
  for (std::size_t s = 0; s < 3; ++s) CHECK(ids[s * 3 + s] == 0);
  // R rows are the embeddings of the chosen ids
  const Tensor emb = model.base().embed_relations(ids);
  const Tensor r = nk::reshape(out.matrices.R, {9, 8});
  CHECK(emb.data() == r.data());

  Document two = doc;
  two.entities.pop_back();
  BaseOutput small = model.forward_base(two);
  CHECK(small.matrices.n == 2);
  CHECK(small.logits.dim(0) == 2);
}

TEST_CASE("a pair whose top logit is TH gets the NA embedding") {
  Tensor logits = Tensor::matrix(2, 3, {5.0, 1.0, 2.0, 0.0, 3.0, 1.0});
  auto ids = argmax_relation_ids(logits, PairIndex(2));
  CHECK(ids == std::vector<std::size_t>{0, 0, 1, 0});
}
