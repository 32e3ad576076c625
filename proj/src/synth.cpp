#include "pairinfer/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "pairinfer/docred.hpp"
#include "pairinfer/errors.hpp"

namespace pairinfer {

namespace {

const std::vector<std::string> kFillers = {"the", "of", "and", "in", "was", "with", "near", "said",
                                           "later", "also", "from", "by", "then", "often"};
const std::vector<std::string> kTypes = {"PER", "ORG", "LOC", "MISC"};
constexpr std::size_t kNamePool = 5000;
constexpr int kMaxAttempts = 10000;

using Pair = std::pair<std::size_t, std::size_t>;

struct Clause {
  std::vector<std::string> tokens;
  std::vector<std::pair<std::size_t, std::size_t>> mentions;  // entity, token offset
  std::set<std::size_t> entities;
  std::vector<std::size_t> facts;  // indices into the surfaced list
};

struct Planted {
  std::map<Pair, std::string> surfaced;    // premises and distractors
  std::map<Pair, std::string> conclusions;
  std::set<Pair> premises;
};

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

bool coin(std::mt19937_64& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

bool pair_used(const Planted& p, std::size_t a, std::size_t b) {
  for (const auto* m : {&p.surfaced, &p.conclusions}) {
    if (m->count({a, b}) || m->count({b, a})) return true;
  }
  return false;
}

// Fixed point of the rules over `facts`. False when two relations land on
// one pair.
bool closure(const std::map<Pair, std::string>& facts, const std::vector<CompositionRule>& rules,
             std::map<Pair, std::string>& out) {
  out = facts;
  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<std::pair<Pair, std::string>> found;
    for (const auto& [ab, r1] : out) {
      for (const auto& [bc, r2] : out) {
        if (bc.first != ab.second || bc.second == ab.first) continue;
        for (const auto& rule : rules) {
          if (rule.premise1 == r1 && rule.premise2 == r2) found.push_back({{ab.first, bc.second}, rule.conclusion});
        }
      }
    }
    for (const auto& [pr, r] : found) {
      auto it = out.find(pr);
      if (it == out.end()) {
        out.emplace(pr, r);
        changed = true;
      } else if (it->second != r) {
        return false;
      }
    }
  }
  return true;
}

bool closed_exactly(const Planted& p, const std::vector<CompositionRule>& rules) {
  std::map<Pair, std::string> closed;
  if (!closure(p.surfaced, rules, closed)) return false;
  std::map<Pair, std::string> expected = p.surfaced;
  expected.insert(p.conclusions.begin(), p.conclusions.end());
  return closed == expected;
}

class DocBuilder {
 public:
  DocBuilder(const SynthConfig& cfg, std::mt19937_64& rng) : cfg_(cfg), rng_(rng) {
    std::set<std::string> in_rules;
    for (const auto& r : cfg.rules) in_rules.insert({r.premise1, r.premise2, r.conclusion});
    for (const auto& name : synthetic_relation_names(cfg.relation_vocab_size)) {
      if (!in_rules.count(name)) free_relations_.push_back(name);
    }
  }

  bool try_build(const std::string& doc_id, Document& doc) {
    const std::size_t n = cfg_.entities_per_doc;
    Planted planted;
    std::vector<std::size_t> order(cfg_.rules.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng_);
    const std::size_t chains = (order.size() >= 2 && n >= 5 && coin(rng_, 0.5)) ? 2 : 1;

    planted_rules_.assign(order.begin(), order.begin() + static_cast<long>(chains));
    for (std::size_t c = 0; c < chains; ++c) {
      const auto& rule = cfg_.rules[order[c]];
      std::size_t a = pick(rng_, n), b = pick(rng_, n), z = pick(rng_, n);
      if (a == b || b == z || a == z) return false;
      if (pair_used(planted, a, b) || pair_used(planted, b, z) || pair_used(planted, a, z)) return false;
      planted.surfaced[{a, b}] = rule.premise1;
      planted.surfaced[{b, z}] = rule.premise2;
      planted.premises.insert({a, b});
      planted.premises.insert({b, z});
      planted.conclusions[{a, z}] = rule.conclusion;
    }
    if (!closed_exactly(planted, cfg_.rules)) return false;

    const double per_chain = 1.0 / cfg_.inferable_fraction - 3.0;
    const double expected = per_chain * static_cast<double>(chains);
    std::size_t distractors = static_cast<std::size_t>(std::floor(expected + 1e-9));
    if (coin(rng_, expected - static_cast<double>(distractors))) ++distractors;
    for (std::size_t i = 0; i < distractors; ++i) {
      if (!place_distractor(planted)) return false;
    }

    std::vector<Clause> clauses = make_clauses(planted);
    if (!pack(planted, clauses)) return false;
    assemble(doc_id, planted, clauses, doc);
    return true;
  }

 private:
  bool place_distractor(Planted& planted) {
    const std::size_t n = cfg_.entities_per_doc;
    for (int attempt = 0; attempt < 50; ++attempt) {
      std::string rel;
      if (free_relations_.empty() || coin(rng_, cfg_.dangling_premise_rate)) {
        const auto& rule = cfg_.rules[planted_rules_[pick(rng_, planted_rules_.size())]];
        rel = coin(rng_, 0.5) ? rule.premise1 : rule.premise2;
      } else {
        rel = free_relations_[pick(rng_, free_relations_.size())];
      }
      const std::size_t h = pick(rng_, n), t = pick(rng_, n);
      if (h == t || pair_used(planted, h, t)) continue;
      planted.surfaced[{h, t}] = rel;
      if (closed_exactly(planted, cfg_.rules)) return true;
      planted.surfaced.erase({h, t});
    }
    return false;
  }

  const std::string& filler() { return kFillers[pick(rng_, kFillers.size())]; }

  std::string keyword(const std::string& relation) {
    std::string kw = "rel";
    for (char ch : relation) kw += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return kw;
  }

  std::vector<Clause> make_clauses(const Planted& planted) {
    std::vector<Clause> out;
    std::set<std::size_t> covered;
    std::size_t fact = 0;
    for (const auto& [pr, rel] : planted.surfaced) {
      Clause c;
      if (coin(rng_, cfg_.filler_rate)) c.tokens.push_back(filler());
      c.mentions.push_back({pr.first, c.tokens.size()});
      c.tokens.push_back("");
      const bool premise = planted.premises.count(pr) > 0;
      c.tokens.push_back(!premise || coin(rng_, cfg_.surface_noise) ? keyword(rel) : filler());
      c.mentions.push_back({pr.second, c.tokens.size()});
      c.tokens.push_back("");
      if (coin(rng_, cfg_.filler_rate)) c.tokens.push_back(filler());
      c.entities = {pr.first, pr.second};
      c.facts = {fact++};
      covered.insert(pr.first);
      covered.insert(pr.second);
      out.push_back(std::move(c));
    }
    for (std::size_t e = 0; e < cfg_.entities_per_doc; ++e) {
      if (!covered.count(e)) out.push_back(solo_clause(e));
    }
    std::shuffle(out.begin(), out.end(), rng_);
    return out;
  }

  Clause solo_clause(std::size_t e) {
    Clause c;
    c.mentions.push_back({e, 0});
    c.tokens.push_back("");
    c.tokens.push_back(filler());
    c.tokens.push_back(filler());
    c.entities = {e};
    return c;
  }

  bool conflict(const Planted& planted, const std::set<std::size_t>& ents) {
    for (const auto& [pr, rel] : planted.conclusions) {
      if (ents.count(pr.first) && ents.count(pr.second)) return true;
    }
    return false;
  }

  bool pack(const Planted& planted, std::vector<Clause>& clauses) {
    while (clauses.size() < cfg_.min_sentences) clauses.push_back(solo_clause(pick(rng_, cfg_.entities_per_doc)));
    int guard = 0;
    while (clauses.size() > cfg_.max_sentences) {
      if (++guard > 200) return false;
      std::size_t i = pick(rng_, clauses.size()), j = pick(rng_, clauses.size());
      if (i == j) continue;
      std::set<std::size_t> ents = clauses[i].entities;
      ents.insert(clauses[j].entities.begin(), clauses[j].entities.end());
      if (conflict(planted, ents)) continue;
      Clause& dst = clauses[i];
      const Clause& src = clauses[j];
      dst.tokens.push_back("and");
      const std::size_t shift = dst.tokens.size();
      dst.tokens.insert(dst.tokens.end(), src.tokens.begin(), src.tokens.end());
      for (const auto& [e, off] : src.mentions) dst.mentions.push_back({e, off + shift});
      dst.entities = ents;
      dst.facts.insert(dst.facts.end(), src.facts.begin(), src.facts.end());
      clauses.erase(clauses.begin() + static_cast<long>(j));
    }
    return true;
  }

  void assemble(const std::string& doc_id, const Planted& planted, const std::vector<Clause>& clauses,
                Document& doc) {
    const std::size_t n = cfg_.entities_per_doc;
    std::vector<std::size_t> names(kNamePool);
    for (std::size_t i = 0; i < kNamePool; ++i) names[i] = i;
    std::shuffle(names.begin(), names.end(), rng_);

    doc = Document{};
    doc.doc_id = doc_id;
    doc.entities.resize(n);
    for (std::size_t e = 0; e < n; ++e) {
      doc.entities[e].index = e;
      doc.entities[e].type_tag = kTypes[pick(rng_, kTypes.size())];
    }
    std::map<std::size_t, std::size_t> fact_sentence;
    for (std::size_t s = 0; s < clauses.size(); ++s) {
      const Clause& c = clauses[s];
      const std::size_t start = doc.words.size();
      for (const auto& tok : c.tokens) doc.words.push_back(tok);
      for (const auto& [e, off] : c.mentions) {
        const std::string name = "ent" + std::to_string(names[e]);
        doc.words[start + off] = name;
        doc.entities[e].mentions.push_back({{start + off, start + off + 1}, s, name});
      }
      doc.words.push_back(".");
      doc.sentence_spans.push_back({start, doc.words.size()});
      for (std::size_t f : c.facts) fact_sentence[f] = s;
    }
    std::size_t fact = 0;
    std::map<Pair, std::size_t> surfaced_sentence;
    for (const auto& [pr, rel] : planted.surfaced) {
      const std::size_t s = fact_sentence.at(fact++);
      surfaced_sentence[pr] = s;
      doc.gold_facts.push_back({pr.first, pr.second, rel, {s}});
    }
    for (const auto& [pr, rel] : planted.conclusions) {
      std::set<std::size_t> ev;
      for (std::size_t b = 0; b < n; ++b) {
        auto ab = surfaced_sentence.find({pr.first, b});
        auto bc = surfaced_sentence.find({b, pr.second});
        if (ab == surfaced_sentence.end() || bc == surfaced_sentence.end()) continue;
        ev.insert(ab->second);
        ev.insert(bc->second);
      }
      doc.gold_facts.push_back({pr.first, pr.second, rel, {ev.begin(), ev.end()}});
    }
    std::sort(doc.gold_facts.begin(), doc.gold_facts.end(), [](const RelationFact& x, const RelationFact& y) {
      return std::tie(x.head, x.tail) < std::tie(y.head, y.tail);
    });
    doc.validate();
  }

  const SynthConfig& cfg_;
  std::mt19937_64& rng_;
  std::vector<std::string> free_relations_;
  std::vector<std::size_t> planted_rules_;
};

std::vector<Document> generate_split(const SynthConfig& cfg, const std::string& split, std::size_t count,
                                     std::mt19937_64& rng) {
  DocBuilder builder(cfg, rng);
  std::vector<Document> out;
  for (std::size_t i = 0; i < count; ++i) {
    char id[64];
    std::snprintf(id, sizeof id, "synth-%s-%04zu", split.c_str(), i);
    Document doc;
    int attempt = 0;
    while (!builder.try_build(id, doc)) {
      if (++attempt > kMaxAttempts) throw std::runtime_error("synthetic generator could not satisfy its constraints");
    }
    out.push_back(std::move(doc));
  }
  return out;
}

}  // namespace

std::vector<std::string> synthetic_relation_names(std::size_t count) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= count; ++i) out.push_back("P" + std::to_string(i));
  return out;
}

std::set<std::string> conclusion_relations(const std::vector<CompositionRule>& rules) {
  std::set<std::string> out;
  for (const auto& r : rules) out.insert(r.conclusion);
  return out;
}

void SynthConfig::validate() const {
  if (entities_per_doc < 3) throw std::invalid_argument("synthetic documents need at least 3 entities");
  if (rules.empty()) throw std::invalid_argument("at least one composition rule is required");
  const auto names = synthetic_relation_names(relation_vocab_size);
  const std::set<std::string> known(names.begin(), names.end());
  for (const auto& r : rules) {
    for (const auto* rel : {&r.premise1, &r.premise2, &r.conclusion}) {
      if (!known.count(*rel)) throw std::invalid_argument("rule relation '" + *rel + "' is outside the vocabulary");
    }
    if (r.conclusion == r.premise1 || r.conclusion == r.premise2) {
      throw std::invalid_argument("a rule conclusion must differ from its premises");
    }
  }
  if (!(inferable_fraction > 0.0) || inferable_fraction > 1.0 / 3.0) {
    throw std::invalid_argument("inferable_fraction must lie in (0, 1/3]");
  }
  for (double p : {surface_noise, dangling_premise_rate, filler_rate}) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("synthetic probabilities must lie in [0, 1]");
  }
  if (min_sentences == 0 || min_sentences > max_sentences) throw std::invalid_argument("bad sentence bounds");
}

SynthCorpus generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  SynthCorpus corpus;
  corpus.relations = synthetic_relation_names(cfg.relation_vocab_size);
  corpus.rules = cfg.rules;
  corpus.train = generate_split(cfg, "train", cfg.num_train, rng);
  corpus.dev = generate_split(cfg, "dev", cfg.num_dev, rng);
  corpus.test = generate_split(cfg, "test", cfg.num_test, rng);
  return corpus;
}

void save_synth_meta(const SynthMeta& meta, const std::filesystem::path& path) {
  nlohmann::json j;
  j["relations"] = meta.relations;
  j["rules"] = nlohmann::json::array();
  for (const auto& r : meta.rules) j["rules"].push_back({r.premise1, r.premise2, r.conclusion});
  write_text_file(path, j.dump(2));
}

SynthMeta load_synth_meta(const std::filesystem::path& path) {
  SynthMeta meta;
  try {
    auto j = nlohmann::json::parse(read_text_file(path));
    meta.relations = j.at("relations").get<std::vector<std::string>>();
    for (const auto& r : j.at("rules")) {
      auto v = r.get<std::vector<std::string>>();
      if (v.size() != 3) throw DataError("rule entries hold three relation names");
      meta.rules.push_back({v[0], v[1], v[2]});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed corpus metadata " + path.string() + ": " + e.what());
  }
  return meta;
}

void save_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_docred(corpus.train, dir / "train.json");
  save_docred(corpus.dev, dir / "dev.json");
  save_docred(corpus.test, dir / "test.json");
  save_synth_meta({corpus.relations, corpus.rules}, dir / "meta.json");
}

SynthCorpus load_corpus(const std::filesystem::path& dir) {
  SynthCorpus c;
  c.train = load_docred(dir / "train.json");
  if (std::filesystem::exists(dir / "dev.json")) c.dev = load_docred(dir / "dev.json");
  if (std::filesystem::exists(dir / "test.json")) c.test = load_docred(dir / "test.json");
  if (std::filesystem::exists(dir / "meta.json")) {
    SynthMeta meta = load_synth_meta(dir / "meta.json");
    c.relations = meta.relations;
    c.rules = meta.rules;
  } else {
    std::vector<Document> all = c.train;
    all.insert(all.end(), c.dev.begin(), c.dev.end());
    c.relations = RelationVocab::build(all).names();
  }
  return c;
}

}  // namespace pairinfer
