#pragma once

#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "pairinfer/docred.hpp"
#include "pairinfer/document.hpp"

namespace pairinfer {

struct SliceCounts {
  std::size_t tp = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;

  std::size_t fp() const { return predicted - tp; }
  std::size_t fn() const { return gold - tp; }
  double precision() const;
  double recall() const;
  double f1() const;
};

// 2PR/(P+R), 0 when both are 0.
double harmonic_f1(double precision, double recall);

struct MetricReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double ign_f1 = 0.0;
  double intra_f1 = 0.0;
  double inter_f1 = 0.0;
  double infer_f1 = 0.0;
  SliceCounts all, intra, inter, infer;
  std::size_t correct_in_train = 0;
};

// (head mention name, tail mention name, relation) for every mention pair
// of every training fact.
using TrainFactSet = std::set<std::tuple<std::string, std::string, std::string>>;
TrainFactSet build_train_fact_set(const std::vector<Document>& train);

// Predictions naming an unknown document, entity or relation raise DataError.
// Duplicate predictions count once.
MetricReport f1_scores(const std::vector<Prediction>& predictions, const std::vector<Document>& gold,
                       const TrainFactSet& train_facts, const RelationVocab& relations);

struct InferScore {
  SliceCounts counts;
  double f1 = 0.0;
  bool in_scope = false;  // false when no gold fact takes part in a two-hop pattern
};

// Gold facts that play any role in a pattern r1(a,b), r2(b,c), r3(a,c)
// within one document. Predictions are kept when their (doc, h, t) pair
// carries such a fact. A relation filter narrows the gold scope further.
InferScore infer_f1(const std::vector<Prediction>& predictions, const std::vector<Document>& gold,
                    const std::set<std::string>* relation_filter = nullptr);

// Flat key=value lines, one metric per line.
std::string format_metric_report(const MetricReport& report);

}  // namespace pairinfer
