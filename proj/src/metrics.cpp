#include "pairinfer/metrics.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "pairinfer/errors.hpp"

namespace pairinfer {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

using FactKey = std::tuple<std::size_t, std::size_t, std::string>;  // h, t, r

std::map<std::string, const Document*> index_documents(const std::vector<Document>& gold) {
  std::map<std::string, const Document*> by_title;
  for (const auto& d : gold) {
    if (!by_title.emplace(d.doc_id, &d).second) throw DataError("duplicate document title '" + d.doc_id + "'");
  }
  return by_title;
}

// Deduplicated predictions grouped by document, validated against gold.
std::map<std::string, std::set<FactKey>> group_predictions(const std::vector<Prediction>& predictions,
                                                           const std::map<std::string, const Document*>& docs,
                                                           const RelationVocab* relations) {
  std::map<std::string, std::set<FactKey>> out;
  for (const auto& p : predictions) {
    auto it = docs.find(p.title);
    if (it == docs.end()) throw DataError("prediction for unknown document '" + p.title + "'");
    const std::size_t n = it->second->entities.size();
    if (p.h >= n || p.t >= n || p.h == p.t) {
      throw DataError("prediction in '" + p.title + "' has an invalid entity pair");
    }
    if (relations && !relations->contains(p.relation)) throw DataError("unknown relation id '" + p.relation + "'");
    out[p.title].emplace(p.h, p.t, p.relation);
  }
  return out;
}

std::set<FactKey> gold_facts(const Document& d) {
  std::set<FactKey> out;
  for (const auto& f : d.gold_facts) out.emplace(f.head, f.tail, f.relation);
  return out;
}

bool fact_in_train(const Document& d, const FactKey& f, const TrainFactSet& train) {
  for (const auto& mh : d.entities[std::get<0>(f)].mentions) {
    for (const auto& mt : d.entities[std::get<1>(f)].mentions) {
      if (train.count({mh.name, mt.name, std::get<2>(f)})) return true;
    }
  }
  return false;
}

// Facts of `facts` taking part in some two-hop pattern.
std::set<FactKey> pattern_facts(const std::set<FactKey>& facts) {
  std::map<std::pair<std::size_t, std::size_t>, std::vector<const FactKey*>> by_pair;
  for (const auto& f : facts) by_pair[{std::get<0>(f), std::get<1>(f)}].push_back(&f);
  std::set<FactKey> scope;
  for (const auto& ab : facts) {
    const std::size_t a = std::get<0>(ab), b = std::get<1>(ab);
    for (const auto& bc : facts) {
      if (std::get<0>(bc) != b) continue;
      const std::size_t c = std::get<1>(bc);
      if (c == a) continue;
      auto ac = by_pair.find({a, c});
      if (ac == by_pair.end()) continue;
      scope.insert(ab);
      scope.insert(bc);
      for (const auto* f : ac->second) scope.insert(*f);
    }
  }
  return scope;
}

}  // namespace

double harmonic_f1(double precision, double recall) {
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

double SliceCounts::precision() const { return ratio(tp, predicted); }
double SliceCounts::recall() const { return ratio(tp, gold); }
double SliceCounts::f1() const { return harmonic_f1(precision(), recall()); }

TrainFactSet build_train_fact_set(const std::vector<Document>& train) {
  TrainFactSet out;
  for (const auto& d : train) {
    for (const auto& f : d.gold_facts) {
      for (const auto& mh : d.entities.at(f.head).mentions) {
        for (const auto& mt : d.entities.at(f.tail).mentions) out.emplace(mh.name, mt.name, f.relation);
      }
    }
  }
  return out;
}

MetricReport f1_scores(const std::vector<Prediction>& predictions, const std::vector<Document>& gold,
                       const TrainFactSet& train_facts, const RelationVocab& relations) {
  const auto docs = index_documents(gold);
  const auto grouped = group_predictions(predictions, docs, &relations);
  MetricReport r;
  for (const auto& [title, doc] : docs) {
    const auto truth = gold_facts(*doc);
    for (const auto& f : truth) {
      ++r.all.gold;
      (doc->intra_sentence(std::get<0>(f), std::get<1>(f)) ? r.intra : r.inter).gold += 1;
    }
    auto it = grouped.find(title);
    if (it == grouped.end()) continue;
    for (const auto& f : it->second) {
      const bool intra = doc->intra_sentence(std::get<0>(f), std::get<1>(f));
      SliceCounts& slice = intra ? r.intra : r.inter;
      ++r.all.predicted;
      ++slice.predicted;
      if (!truth.count(f)) continue;
      ++r.all.tp;
      ++slice.tp;
      if (fact_in_train(*doc, f, train_facts)) ++r.correct_in_train;
    }
  }
  r.precision = r.all.precision();
  r.recall = r.all.recall();
  r.f1 = r.all.f1();
  const double ign_p = ratio(r.all.tp - r.correct_in_train, r.all.predicted - r.correct_in_train);
  r.ign_f1 = harmonic_f1(ign_p, r.recall);
  r.intra_f1 = r.intra.f1();
  r.inter_f1 = r.inter.f1();
  InferScore inf = infer_f1(predictions, gold);
  r.infer = inf.counts;
  r.infer_f1 = inf.f1;
  return r;
}

InferScore infer_f1(const std::vector<Prediction>& predictions, const std::vector<Document>& gold,
                    const std::set<std::string>* relation_filter) {
  const auto docs = index_documents(gold);
  const auto grouped = group_predictions(predictions, docs, nullptr);
  InferScore out;
  for (const auto& [title, doc] : docs) {
    std::set<FactKey> scope;
    for (const auto& f : pattern_facts(gold_facts(*doc))) {
      if (!relation_filter || relation_filter->count(std::get<2>(f))) scope.insert(f);
    }
    if (scope.empty()) continue;
    std::set<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& f : scope) pairs.emplace(std::get<0>(f), std::get<1>(f));
    out.counts.gold += scope.size();
    auto it = grouped.find(title);
    if (it == grouped.end()) continue;
    for (const auto& f : it->second) {
      if (!pairs.count({std::get<0>(f), std::get<1>(f)})) continue;
      ++out.counts.predicted;
      if (scope.count(f)) ++out.counts.tp;
    }
  }
  out.in_scope = out.counts.gold > 0;
  out.f1 = out.in_scope ? out.counts.f1() : 0.0;
  return out;
}

std::string format_metric_report(const MetricReport& r) {
  std::ostringstream os;
  auto real = [&](const char* key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << key << '=' << buf << '\n';
  };
  auto slice = [&](const std::string& name, const SliceCounts& s) {
    os << name << "_tp=" << s.tp << '\n' << name << "_fp=" << s.fp() << '\n' << name << "_fn=" << s.fn() << '\n';
  };
  real("precision", r.precision);
  real("recall", r.recall);
  real("f1", r.f1);
  real("ign_f1", r.ign_f1);
  real("intra_f1", r.intra_f1);
  real("inter_f1", r.inter_f1);
  real("infer_f1", r.infer_f1);
  slice("all", r.all);
  slice("intra", r.intra);
  slice("inter", r.inter);
  slice("infer", r.infer);
  os << "correct_in_train=" << r.correct_in_train << '\n';
  return os.str();
}

}  // namespace pairinfer
