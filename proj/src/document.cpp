#include "pairinfer/document.hpp"

#include <algorithm>
#include <set>

#include "pairinfer/errors.hpp"

namespace pairinfer {

void Document::validate() const {
  auto fail = [&](const std::string& what) {
    throw DataError("document '" + doc_id + "': " + what);
  };
  std::size_t prev_end = 0;
  for (const auto& s : sentence_spans) {
    if (s.start != prev_end || s.end <= s.start) fail("sentence spans must tile the tokens");
    prev_end = s.end;
  }
  if (prev_end != words.size()) fail("sentence spans do not cover all tokens");
  for (std::size_t e = 0; e < entities.size(); ++e) {
    const auto& ent = entities[e];
    if (ent.index != e) fail("entity index " + std::to_string(ent.index) + " at position " + std::to_string(e));
    if (ent.mentions.empty()) fail("entity " + std::to_string(e) + " has no mentions");
    for (const auto& m : ent.mentions) {
      if (m.span.start >= m.span.end) fail("empty mention span in entity " + std::to_string(e));
      if (m.sentence_index >= sentence_spans.size()) fail("mention sentence index out of range");
      const auto& s = sentence_spans[m.sentence_index];
      if (m.span.start < s.start || m.span.end > s.end) {
        fail("mention span [" + std::to_string(m.span.start) + "," + std::to_string(m.span.end) +
             ") of entity " + std::to_string(e) + " leaves its sentence");
      }
    }
  }
  for (const auto& f : gold_facts) {
    if (f.head >= entities.size() || f.tail >= entities.size()) fail("relation fact entity index out of range");
    if (f.head == f.tail) fail("relation fact with head == tail");
  }
}

bool Document::intra_sentence(std::size_t a, std::size_t b) const {
  std::set<std::size_t> sa;
  for (const auto& m : entities.at(a).mentions) sa.insert(m.sentence_index);
  for (const auto& m : entities.at(b).mentions) {
    if (sa.count(m.sentence_index)) return true;
  }
  return false;
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
  add(kMarkerText);
}

void Vocabulary::add(const std::string& w) {
  if (ids_.count(w)) return;
  ids_[w] = static_cast<int>(words_.size());
  words_.push_back(w);
}

Vocabulary Vocabulary::build(const std::vector<Document>& docs) {
  std::set<std::string> seen;
  for (const auto& d : docs) seen.insert(d.words.begin(), d.words.end());
  Vocabulary v;
  for (const auto& w : seen) {
    // a corpus word equal to the marker text would alias the marker id
    if (w == kMarkerText) continue;
    v.add(w);
  }
  return v;
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  if (words.size() < 3 || words[kMarker] != kMarkerText) throw DataError("vocabulary lacks reserved ids");
  Vocabulary v;
  v.words_.clear();
  v.ids_.clear();
  for (const auto& w : words) v.add(w);
  return v;
}

int Vocabulary::id(const std::string& word) const {
  if (word == kMarkerText) return kUnk;
  auto it = ids_.find(word);
  return it == ids_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(id(w));
  return out;
}

RelationVocab::RelationVocab(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!ids_.emplace(names_[i], static_cast<int>(i + 1)).second) {
      throw DataError("duplicate relation name " + names_[i]);
    }
  }
}

RelationVocab RelationVocab::build(const std::vector<Document>& docs) {
  std::set<std::string> seen;
  for (const auto& d : docs) {
    for (const auto& f : d.gold_facts) seen.insert(f.relation);
  }
  return RelationVocab(std::vector<std::string>(seen.begin(), seen.end()));
}

int RelationVocab::id(const std::string& name) const {
  auto it = ids_.find(name);
  if (it == ids_.end()) throw DataError("unknown relation id '" + name + "'");
  return it->second;
}

}  // namespace pairinfer
