#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "pairinfer/docred.hpp"
#include "pairinfer/metrics.hpp"
#include "pairinfer/model.hpp"

namespace pairinfer {

inline constexpr double kWarmupFraction = 0.06;

struct TrainPlan {
  int stage = 1;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double encoder_lr = 5e-5;     // stage 1
  double classifier_lr = 1e-4;  // stage 1, base module
  double base_lr = 1e-5;        // stage 2, encoder and base module
  double inference_lr = 1e-4;   // stage 2, inference module and contrastive head
  double lambda = 1.0;
  double max_grad_norm = 1.0;   // 0 disables clipping
  std::size_t K = 3;
  std::size_t N_I = 2;
  std::uint64_t seed = 0;
  bool no_contrastive = false;
  bool freeze_base = false;

  // Reference defaults for the given stage (30/15 epochs, 5e-5/1e-4, 1e-5/1e-4).
  static TrainPlan defaults(int stage);
  void validate() const;  // std::invalid_argument
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double dev_f1 = 0.0;
};

struct TrainLog {
  std::vector<double> step_losses;  // mean document loss of each optimizer step
  std::vector<double> noise_rates;  // stage 2, per batch: bar rate then hat rate
  std::vector<EpochLog> epochs;
  std::size_t steps = 0;
  std::size_t best_epoch = 0;
  double best_dev_f1 = -1.0;
};

using ProgressFn = std::function<void(const EpochLog&)>;

// Optimizes encoder and base module with the adaptive-threshold loss. The
// model ends holding the parameters of the best dev-F1 epoch.
TrainLog train_stage1(Model& model, const TrainPlan& plan, const std::vector<Document>& train,
                      const std::vector<Document>& dev, const ProgressFn& progress = {});

// Joint objective over all groups; base groups use the small learning rate
// (0 when frozen). Dev F1 for selection is measured after K rounds.
TrainLog train_stage2(Model& model, const TrainPlan& plan, const std::vector<Document>& train,
                      const std::vector<Document>& dev, const ProgressFn& progress = {});

struct EvalResult {
  std::vector<MetricReport> per_k;         // k = 0..K
  std::vector<InferScore> conclusion_per_k;  // Infer-F1 restricted to conclusion relations
};

std::vector<std::vector<Prediction>> predict_history(const Model& model, const std::vector<Document>& docs,
                                                     std::size_t K);
std::vector<Prediction> predict(const Model& model, const std::vector<Document>& docs, std::size_t K);

EvalResult evaluate(const Model& model, const std::vector<Document>& docs, std::size_t K,
                    const TrainFactSet& train_facts, const std::set<std::string>& conclusions = {});

// Delimited per-iteration table, one row per k.
std::string format_history(const EvalResult& result, char sep = '\t');

}  // namespace pairinfer
