#include <doctest.h>

#include <filesystem>
#include <map>
#include <random>

#include "pairinfer/docred.hpp"
#include "pairinfer/errors.hpp"
#include "pairinfer/metrics.hpp"
#include "pairinfer/synth.hpp"
#include "support/oracles.hpp"

using namespace pairinfer;
namespace fs = std::filesystem;

namespace {

const fs::path kFixture = fs::path(PAIRINFER_FIXTURE_DIR) / "docred_sample.json";

Document chain_doc() {
  // a r1 b, b r2 c, a r3 c, plus an unrelated d
  Document d;
  d.doc_id = "chain";
  d.words = {"a", "x", "b", "y", "c", "d"};
  d.sentence_spans = {{0, 3}, {3, 6}};
  d.entities = {{0, {{{0, 1}, 0, "a"}}}, {1, {{{2, 3}, 0, "b"}}}, {2, {{{4, 5}, 1, "c"}}}, {3, {{{5, 6}, 1, "d"}}}};
  d.gold_facts = {{0, 1, "R1", {}}, {1, 2, "R2", {}}, {0, 2, "R3", {}}};
  return d;
}

std::vector<Prediction> as_predictions(const std::vector<Document>& docs) {
  std::vector<Prediction> out;
  for (const auto& d : docs)
    for (const auto& f : d.gold_facts) out.push_back({d.doc_id, f.head, f.tail, f.relation});
  return out;
}

}  // namespace

TEST_CASE("DocRED fixture loads with global offsets") {
  auto docs = load_docred(kFixture);
  REQUIRE(docs.size() == 2);
  const Document& d = docs[0];
  CHECK(d.doc_id == "Lake Ontario Ferry");
  CHECK(d.sentence_spans.size() == 3);
  CHECK(d.sentence_spans[1].start == 8);
  CHECK(d.sentence_spans[2].start == 15);
  CHECK(d.words.size() == 21);
  REQUIRE(d.entities.size() == 4);
  CHECK(d.entities[0].mentions[0].span.start == 1);
  CHECK(d.entities[0].mentions[0].span.end == 4);
  CHECK(d.entities[1].mentions[1].span.start == 8);
  CHECK(d.entities[1].mentions[1].sentence_index == 1);
  CHECK(d.entities[2].mentions[0].span.start == 11);
  CHECK(d.entities[2].mentions[0].span.end == 14);
  CHECK(d.entities[3].mentions[0].span.start == 19);
  CHECK(d.words[d.entities[2].mentions[0].span.start] == "New");
  CHECK(d.gold_facts.size() == 4);
  CHECK(d.gold_facts[3].evidence == std::vector<std::size_t>{0, 2});
  CHECK(docs[1].gold_facts.size() == 2);

  auto again = parse_docred(dump_docred(docs));
  CHECK(dump_docred(again) == dump_docred(docs));
}

TEST_CASE("DocRED edge cases") {
  const std::string minimal = R"([{"title": "m", "sents": [["p", "q"]],
    "vertexSet": [[{"name": "p", "sent_id": 0, "pos": [0, 1]}], [{"name": "q", "sent_id": 0, "pos": [1, 2]}]],
    "labels": [{"h": 0, "t": 1, "r": "P1", "evidence": [0]}]}])";
  auto docs = parse_docred(minimal);
  CHECK(docs[0].gold_facts.size() == 1);

  const std::string unlabeled = R"([{"title": "u", "sents": [["p", "q"]],
    "vertexSet": [[{"name": "p", "sent_id": 0, "pos": [0, 1]}], [{"name": "q", "sent_id": 0, "pos": [1, 2]}]]}])";
  CHECK(parse_docred(unlabeled)[0].gold_facts.empty());

  const std::string bad_pos = R"([{"title": "b", "sents": [["p"]],
    "vertexSet": [[{"name": "p", "sent_id": 0, "pos": [0, 3]}]], "labels": []}])";
  CHECK_THROWS_AS(parse_docred(bad_pos), DataError);
  const std::string bad_head = R"([{"title": "h", "sents": [["p", "q"]],
    "vertexSet": [[{"name": "p", "sent_id": 0, "pos": [0, 1]}]], "labels": [{"h": 0, "t": 4, "r": "P1"}]}])";
  CHECK_THROWS_AS(parse_docred(bad_head), DataError);
  CHECK_THROWS_AS(parse_docred("{not json"), DataError);
}

TEST_CASE("submission export and import") {
  fs::path dir = fs::temp_directory_path() / "pairinfer_unit_submission";
  fs::create_directories(dir);
  std::vector<Prediction> one = {{"doc", 1, 0, "P5"}};
  const std::string text = dump_submission(one);
  for (const char* key : {"\"title\"", "\"h_idx\"", "\"t_idx\"", "\"r\""}) CHECK(text.find(key) != std::string::npos);
  CHECK(parse_submission(dump_submission({{"d", 0, 1, "P"}, {"d", 0, 1, "P"}})).size() == 1);

  std::mt19937_64 rng(51);
  std::uniform_int_distribution<int> u(0, 4);
  std::vector<Prediction> preds;
  for (int i = 0; i < 60; ++i) preds.push_back({"t" + std::to_string(u(rng)), std::size_t(u(rng)), std::size_t(u(rng)), "P" + std::to_string(u(rng))});
  export_submission(preds, dir / "s.json");
  std::set<Prediction> want(preds.begin(), preds.end());
  CHECK(import_submission(dir / "s.json") == std::vector<Prediction>(want.begin(), want.end()));
}

TEST_CASE("synthetic corpus: rule soundness, fraction and determinism") {
  SynthConfig cfg;
  cfg.num_train = 100;
  cfg.num_dev = 5;
  cfg.num_test = 5;
  cfg.seed = 77;
  SynthCorpus c = generate_synthetic(cfg);
  CHECK(c.train.size() == 100);
  const auto conclusions = conclusion_relations(c.rules);
  std::size_t total = 0, inferable = 0;
  for (const auto& d : c.train) {
    d.validate();
    std::map<std::pair<std::size_t, std::size_t>, std::string> rel;
    for (const auto& f : d.gold_facts) rel[{f.head, f.tail}] = f.relation;
    for (const auto& f : d.gold_facts) {
      ++total;
      inferable += conclusions.count(f.relation);
    }
    const std::size_t n = d.entities.size();
    for (const auto& rule : c.rules)
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t x = 0; x < n; ++x) {
            if (a == b || b == x || a == x) continue;
            auto ab = rel.find({a, b}), bc = rel.find({b, x});
            if (ab != rel.end() && bc != rel.end() && ab->second == rule.premise1 && bc->second == rule.premise2) {
              auto ac = rel.find({a, x});
              CHECK((ac != rel.end() && ac->second == rule.conclusion));
            }
          }
    // every conclusion is backed by its premises
    for (const auto& f : d.gold_facts) {
      if (!conclusions.count(f.relation)) continue;
      bool backed = false;
      for (const auto& rule : c.rules) {
        if (rule.conclusion != f.relation) continue;
        for (std::size_t b = 0; b < n; ++b) {
          auto ab = rel.find({f.head, b}), bc = rel.find({b, f.tail});
          backed |= ab != rel.end() && bc != rel.end() && ab->second == rule.premise1 && bc->second == rule.premise2;
        }
      }
      CHECK(backed);
    }
  }
  const double frac = static_cast<double>(inferable) / static_cast<double>(total);
  CHECK(frac >= cfg.inferable_fraction - 0.05);
  CHECK(frac <= cfg.inferable_fraction + 0.05);

  SynthCorpus again = generate_synthetic(cfg);
  CHECK(dump_docred(again.train) == dump_docred(c.train));
  CHECK(dump_docred(again.test) == dump_docred(c.test));
  cfg.seed = 78;
  CHECK(dump_docred(generate_synthetic(cfg).train) != dump_docred(c.train));
}

TEST_CASE("synthetic corpus round-trips through disk") {
  SynthConfig cfg;
  cfg.num_train = 6;
  cfg.num_dev = 2;
  cfg.num_test = 2;
  SynthCorpus c = generate_synthetic(cfg);
  fs::path dir = fs::temp_directory_path() / "pairinfer_unit_corpus";
  save_corpus(c, dir);
  SynthCorpus back = load_corpus(dir);
  CHECK(dump_docred(back.train) == dump_docred(c.train));
  CHECK(back.relations == c.relations);
  CHECK(back.rules.size() == c.rules.size());
  SynthConfig bad;
  bad.inferable_fraction = 0.6;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("F1 conventions") {
  const std::vector<Document> gold = {chain_doc()};
  RelationVocab rels({"R1", "R2", "R3"});
  auto perfect = f1_scores(as_predictions(gold), gold, {}, rels);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.ign_f1 == 1.0);
  CHECK(perfect.infer_f1 == 1.0);
  auto empty = f1_scores({}, gold, {}, rels);
  CHECK(empty.precision == 0.0);
  CHECK(empty.recall == 0.0);
  CHECK(empty.f1 == 0.0);
  CHECK_THROWS_AS(f1_scores({{"nope", 0, 1, "R1"}}, gold, {}, rels), DataError);
  CHECK_THROWS_AS(f1_scores({{"chain", 0, 1, "R9"}}, gold, {}, rels), DataError);
}

TEST_CASE("Ign F1 on a hand-enumerated instance") {
  Document d = chain_doc();
  d.gold_facts = {{0, 1, "R1", {}}, {1, 2, "R2", {}}, {0, 2, "R3", {}},
                  {2, 3, "R1", {}}, {3, 0, "R2", {}}, {1, 3, "R3", {}}};
  // mention-name triples seen in training
  TrainFactSet train = {{"a", "b", "R1"}, {"b", "c", "R2"}, {"c", "a", "R1"}};
  std::vector<Prediction> preds = {{"chain", 0, 1, "R1"}, {"chain", 1, 2, "R2"}, {"chain", 0, 2, "R3"},
                                   {"chain", 2, 3, "R1"}, {"chain", 2, 0, "R1"}, {"chain", 3, 1, "R2"}};
  auto r = f1_scores(preds, {d}, train, RelationVocab({"R1", "R2", "R3"}));
  // tp 4 of 6 predicted, 6 gold, 2 of the correct ones seen in training
  CHECK(r.all.tp == 4);
  CHECK(r.correct_in_train == 2);
  const double p = 2.0 / 4.0, rec = 4.0 / 6.0;
  CHECK(r.ign_f1 == doctest::Approx(2 * p * rec / (p + rec)).epsilon(1e-15));
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("Infer F1 scope") {
  Document d = chain_doc();
  auto s = infer_f1(as_predictions({d}), {d});
  CHECK(s.in_scope);
  CHECK(s.counts.gold == 3);
  CHECK(s.f1 == 1.0);
  // conclusion-only view
  const std::set<std::string> only = {"R3"};
  auto c = infer_f1({{"chain", 0, 2, "R3"}, {"chain", 0, 3, "R3"}}, {d}, &only);
  CHECK(c.counts.gold == 1);
  CHECK(c.counts.predicted == 1);
  CHECK(c.f1 == 1.0);

  Document flat = chain_doc();
  flat.gold_facts = {{0, 1, "R1", {}}, {2, 3, "R2", {}}};
  auto none = infer_f1(as_predictions({flat}), {flat});
  CHECK_FALSE(none.in_scope);
  CHECK(none.counts.gold == 0);
  CHECK(none.f1 == 0.0);
}

TEST_CASE("metrics agree with brute-force enumeration") {
  std::mt19937_64 rng(52);
  for (int i = 0; i < 200; ++i) {
    auto inst = testing::random_metric_instance(rng);
    TrainFactSet train(inst.train.begin(), inst.train.end());
    auto r = f1_scores(inst.preds, inst.docs, train, RelationVocab(inst.relations));
    auto b = testing::brute_metrics(inst.docs, inst.preds, inst.train, inst.relations);
    CHECK(r.f1 == testing::brute_f1(b.tp, b.pred, b.gold));
    CHECK(r.ign_f1 == testing::brute_ign_f1(b));
    CHECK(r.intra_f1 == testing::brute_f1(b.intra_tp, b.intra_pred, b.intra_gold));
    CHECK(r.inter_f1 == testing::brute_f1(b.inter_tp, b.inter_pred, b.inter_gold));
    CHECK(r.infer_f1 == testing::brute_f1(b.infer_tp, b.infer_pred, b.infer_gold));
  }
}
