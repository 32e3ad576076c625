#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace pairinfer {

struct TokenSpan {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // exclusive
};

struct Mention {
  TokenSpan span;  // document-global token offsets
  std::size_t sentence_index = 0;
  std::string name;
};

struct Entity {
  std::size_t index = 0;
  std::vector<Mention> mentions;
  std::string type_tag;
};

struct RelationFact {
  std::size_t head = 0;
  std::size_t tail = 0;
  std::string relation;
  std::vector<std::size_t> evidence;
};

struct Document {
  std::string doc_id;
  std::vector<std::string> words;
  std::vector<TokenSpan> sentence_spans;
  std::vector<Entity> entities;
  std::vector<RelationFact> gold_facts;

  // Throws DataError naming the document when an invariant is broken.
  void validate() const;
  // True when some sentence holds a mention of both entities.
  bool intra_sentence(std::size_t a, std::size_t b) const;
};

// Word vocabulary with reserved ids for padding, unknown words and the
// mention marker.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMarker = 2;
  static constexpr const char* kMarkerText = "*";

  Vocabulary();
  static Vocabulary build(const std::vector<Document>& docs);

  int id(const std::string& word) const;
  std::vector<int> encode(const std::vector<std::string>& words) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  static Vocabulary from_words(std::vector<std::string> words);

 private:
  void add(const std::string& w);
  std::vector<std::string> words_;
  std::map<std::string, int> ids_;
};

// Relation label vocabulary. Relation ids run 1..size(); id 0 is reserved
// for "no relation" and, on the logit side, for the threshold class.
class RelationVocab {
 public:
  static constexpr int kNone = 0;

  RelationVocab() = default;
  explicit RelationVocab(std::vector<std::string> names);
  static RelationVocab build(const std::vector<Document>& docs);

  std::size_t size() const { return names_.size(); }
  int id(const std::string& name) const;  // DataError on unknown relation
  bool contains(const std::string& name) const { return ids_.count(name) > 0; }
  const std::string& name(int id) const { return names_.at(static_cast<std::size_t>(id - 1)); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> ids_;
};

}  // namespace pairinfer
