#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "pairinfer/document.hpp"

namespace pairinfer {

// premise1(a, b) and premise2(b, c) imply conclusion(a, c).
struct CompositionRule {
  std::string premise1;
  std::string premise2;
  std::string conclusion;
};

struct SynthConfig {
  std::size_t num_train = 400;
  std::size_t num_dev = 100;
  std::size_t num_test = 100;
  std::size_t entities_per_doc = 6;
  std::size_t relation_vocab_size = 8;  // relations are named P1..Pn
  std::vector<CompositionRule> rules = {{"P1", "P2", "P3"}, {"P4", "P5", "P6"}};
  // Probability that a premise is written with its relation keyword. When it
  // is not, the premise stays in gold but its clause carries a filler word.
  double surface_noise = 1.0;
  // Target share of conclusion facts among all gold facts, at most 1/3.
  double inferable_fraction = 0.2;
  // Probability that a distractor fact uses a premise relation of a rule
  // planted in the same document instead of a relation outside every rule.
  double dangling_premise_rate = 0.8;
  double filler_rate = 0.3;
  std::size_t min_sentences = 3;
  std::size_t max_sentences = 6;
  std::uint64_t seed = 1;

  void validate() const;  // std::invalid_argument
};

struct SynthCorpus {
  std::vector<Document> train, dev, test;
  std::vector<std::string> relations;
  std::vector<CompositionRule> rules;
};

SynthCorpus generate_synthetic(const SynthConfig& cfg);

std::vector<std::string> synthetic_relation_names(std::size_t count);
std::set<std::string> conclusion_relations(const std::vector<CompositionRule>& rules);

// Relation list and rules, stored next to a generated corpus.
struct SynthMeta {
  std::vector<std::string> relations;
  std::vector<CompositionRule> rules;
};
void save_synth_meta(const SynthMeta& meta, const std::filesystem::path& path);
SynthMeta load_synth_meta(const std::filesystem::path& path);

// train.json, dev.json, test.json and meta.json under `dir`. Without
// meta.json the relation list is collected from the loaded splits and no
// rules are known.
void save_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);
SynthCorpus load_corpus(const std::filesystem::path& dir);

}  // namespace pairinfer
