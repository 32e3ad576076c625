#include "pairinfer/docred.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pairinfer/errors.hpp"

namespace pairinfer {

using nlohmann::json;

namespace {

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw DataError(where + ": missing field '" + key + "'");
  return obj.at(key);
}

template <class T>
T as(const json& v, const std::string& where, const char* key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw DataError(where + ": field '" + key + "' has the wrong type");
  }
}

Document parse_one(const json& rec, std::size_t position) {
  std::string where = "document #" + std::to_string(position);
  Document doc;
  doc.doc_id = as<std::string>(field(rec, "title", where), where, "title");
  where = "document '" + doc.doc_id + "'";

  const json& sents = field(rec, "sents", where);
  if (!sents.is_array()) throw DataError(where + ": field 'sents' must be an array");
  for (const auto& s : sents) {
    auto words = as<std::vector<std::string>>(s, where, "sents");
    if (words.empty()) throw DataError(where + ": field 'sents' holds an empty sentence");
    TokenSpan span{doc.words.size(), doc.words.size() + words.size()};
    doc.words.insert(doc.words.end(), words.begin(), words.end());
    doc.sentence_spans.push_back(span);
  }

  const json& vertices = field(rec, "vertexSet", where);
  if (!vertices.is_array()) throw DataError(where + ": field 'vertexSet' must be an array");
  for (std::size_t e = 0; e < vertices.size(); ++e) {
    Entity ent;
    ent.index = e;
    if (!vertices[e].is_array() || vertices[e].empty()) {
      throw DataError(where + ": field 'vertexSet' entry " + std::to_string(e) + " has no mentions");
    }
    for (const auto& m : vertices[e]) {
      Mention mention;
      mention.name = as<std::string>(field(m, "name", where), where, "name");
      auto sid = as<long long>(field(m, "sent_id", where), where, "sent_id");
      auto pos = as<std::vector<long long>>(field(m, "pos", where), where, "pos");
      if (pos.size() != 2) throw DataError(where + ": field 'pos' must hold two offsets");
      if (sid < 0 || static_cast<std::size_t>(sid) >= doc.sentence_spans.size()) {
        throw DataError(where + ": field 'sent_id' " + std::to_string(sid) + " out of range");
      }
      const auto& sent = doc.sentence_spans[static_cast<std::size_t>(sid)];
      const auto len = static_cast<long long>(sent.end - sent.start);
      if (pos[0] < 0 || pos[1] <= pos[0] || pos[1] > len) {
        throw DataError(where + ": field 'pos' [" + std::to_string(pos[0]) + "," + std::to_string(pos[1]) +
                        ") out of range for sentence " + std::to_string(sid));
      }
      mention.sentence_index = static_cast<std::size_t>(sid);
      mention.span = {sent.start + static_cast<std::size_t>(pos[0]), sent.start + static_cast<std::size_t>(pos[1])};
      if (m.contains("type")) ent.type_tag = as<std::string>(m.at("type"), where, "type");
      ent.mentions.push_back(std::move(mention));
    }
    doc.entities.push_back(std::move(ent));
  }

  if (rec.contains("labels")) {
    const json& labels = rec.at("labels");
    if (!labels.is_array()) throw DataError(where + ": field 'labels' must be an array");
    for (const auto& l : labels) {
      RelationFact f;
      auto h = as<long long>(field(l, "h", where), where, "h");
      auto t = as<long long>(field(l, "t", where), where, "t");
      const auto n = static_cast<long long>(doc.entities.size());
      if (h < 0 || h >= n || t < 0 || t >= n) throw DataError(where + ": field 'labels' entity index out of range");
      f.head = static_cast<std::size_t>(h);
      f.tail = static_cast<std::size_t>(t);
      f.relation = as<std::string>(field(l, "r", where), where, "r");
      if (l.contains("evidence")) f.evidence = as<std::vector<std::size_t>>(l.at("evidence"), where, "evidence");
      doc.gold_facts.push_back(std::move(f));
    }
  }
  doc.validate();
  return doc;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::vector<Document> parse_docred(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed DocRED input: ") + e.what());
  }
  if (!root.is_array()) throw DataError("DocRED input must be an array of documents");
  std::vector<Document> docs;
  for (std::size_t i = 0; i < root.size(); ++i) docs.push_back(parse_one(root[i], i));
  return docs;
}

std::vector<Document> load_docred(const std::filesystem::path& path) {
  return parse_docred(read_text_file(path));
}

std::string dump_docred(const std::vector<Document>& docs) {
  json root = json::array();
  for (const auto& d : docs) {
    json rec;
    rec["title"] = d.doc_id;
    json sents = json::array();
    for (const auto& s : d.sentence_spans) {
      sents.push_back(std::vector<std::string>(d.words.begin() + static_cast<long>(s.start),
                                               d.words.begin() + static_cast<long>(s.end)));
    }
    rec["sents"] = sents;
    json vertices = json::array();
    for (const auto& e : d.entities) {
      json ms = json::array();
      for (const auto& m : e.mentions) {
        const auto base = d.sentence_spans[m.sentence_index].start;
        ms.push_back({{"name", m.name},
                      {"sent_id", m.sentence_index},
                      {"pos", {m.span.start - base, m.span.end - base}},
                      {"type", e.type_tag}});
      }
      vertices.push_back(ms);
    }
    rec["vertexSet"] = vertices;
    json labels = json::array();
    for (const auto& f : d.gold_facts) {
      labels.push_back({{"h", f.head}, {"t", f.tail}, {"r", f.relation}, {"evidence", f.evidence}});
    }
    rec["labels"] = labels;
    root.push_back(rec);
  }
  return root.dump();
}

void save_docred(const std::vector<Document>& docs, const std::filesystem::path& path) {
  write_text_file(path, dump_docred(docs));
}

std::string dump_submission(std::vector<Prediction> predictions) {
  std::sort(predictions.begin(), predictions.end());
  predictions.erase(std::unique(predictions.begin(), predictions.end()), predictions.end());
  json root = json::array();
  for (const auto& p : predictions) {
    root.push_back({{"title", p.title}, {"h_idx", p.h}, {"t_idx", p.t}, {"r", p.relation}});
  }
  return root.dump();
}

std::vector<Prediction> parse_submission(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("malformed submission: ") + e.what());
  }
  if (!root.is_array()) throw DataError("submission must be an array");
  std::vector<Prediction> out;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string where = "submission record #" + std::to_string(i);
    const auto& r = root[i];
    Prediction p;
    p.title = as<std::string>(field(r, "title", where), where, "title");
    p.h = as<std::size_t>(field(r, "h_idx", where), where, "h_idx");
    p.t = as<std::size_t>(field(r, "t_idx", where), where, "t_idx");
    p.relation = as<std::string>(field(r, "r", where), where, "r");
    out.push_back(std::move(p));
  }
  return out;
}

void export_submission(const std::vector<Prediction>& predictions, const std::filesystem::path& path) {
  write_text_file(path, dump_submission(predictions));
}

std::vector<Prediction> import_submission(const std::filesystem::path& path) {
  return parse_submission(read_text_file(path));
}

}  // namespace pairinfer
