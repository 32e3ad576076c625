#include "pairinfer/train.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "pairinfer/errors.hpp"
#include "pairinfer/losses.hpp"

namespace pairinfer {

using nk::Group;
using nk::Tensor;

TrainPlan TrainPlan::defaults(int stage) {
  TrainPlan p;
  p.stage = stage;
  p.epochs = stage == 2 ? 15 : 30;
  return p;
}

void TrainPlan::validate() const {
  if (stage != 1 && stage != 2) throw std::invalid_argument("stage must be 1 or 2");
  if (epochs == 0 || batch_size == 0) throw std::invalid_argument("epochs and batch size must be positive");
  if (encoder_lr < 0 || classifier_lr < 0 || base_lr < 0 || inference_lr <= 0) {
    throw std::invalid_argument("learning rates must be non-negative");
  }
  if (stage == 2 && !(base_lr < inference_lr)) {
    throw std::invalid_argument("stage-2 base learning rate must be below the inference learning rate");
  }
  if (lambda < 0) throw std::invalid_argument("contrastive weight must be >= 0");
  if (N_I == 0) throw std::invalid_argument("N_I must be positive");
}

namespace {

struct Snapshot {
  std::vector<std::vector<double>> values;
};

Snapshot take(const nk::ParameterStore& store) {
  Snapshot s;
  for (const auto& p : store.all()) s.values.push_back(p.tensor.data());
  return s;
}

void restore(nk::ParameterStore& store, const Snapshot& s) {
  auto& all = store.all();
  for (std::size_t i = 0; i < all.size(); ++i) {
    std::copy(s.values[i].begin(), s.values[i].end(), all[i].tensor.mutable_values().begin());
  }
}

std::vector<nk::Parameter> trainable(nk::ParameterStore& store, const std::map<Group, double>& lr) {
  std::vector<nk::Parameter> out;
  for (const auto& p : store.all()) {
    auto it = lr.find(p.group);
    if (it != lr.end() && it->second > 0.0) out.push_back(p);
  }
  return out;
}

double dev_f1(const Model& model, const std::vector<Document>& dev, std::size_t K) {
  if (dev.empty()) return 0.0;
  auto preds = predict(model, dev, K);
  return f1_scores(preds, dev, {}, model.relations()).f1;
}

using StepLoss = std::function<Tensor(const Document&, const LabelSet&, std::mt19937_64&)>;
using BatchHook = std::function<void(std::mt19937_64&)>;

TrainLog run(Model& model, const TrainPlan& plan, const std::vector<Document>& train,
             const std::vector<Document>& dev, const std::map<Group, double>& peak, std::size_t eval_k,
             const StepLoss& loss_fn, const BatchHook& on_batch, std::mt19937_64& rng,
             const ProgressFn& progress) {
  if (train.empty()) throw DataError("empty training corpus");
  std::vector<LabelSet> labels;
  for (const auto& d : train) labels.push_back(labels_from_document(d, model.relations()));

  const std::size_t per_epoch = (train.size() + plan.batch_size - 1) / plan.batch_size;
  const std::size_t total = per_epoch * plan.epochs;
  nk::AdamW opt;
  auto params = trainable(model.params(), peak);
  TrainLog log;
  Snapshot best;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < plan.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t lo = b * plan.batch_size;
      const std::size_t hi = std::min(order.size(), lo + plan.batch_size);
      model.params().zero_grad();
      if (on_batch) on_batch(rng);
      double batch_loss = 0.0;
      for (std::size_t i = lo; i < hi; ++i) {
        nk::Tape tape;
        nk::Tape::Scope scope(tape);
        Tensor loss = nk::scale(loss_fn(train[order[i]], labels[order[i]], rng), 1.0 / static_cast<double>(hi - lo));
        batch_loss += loss.item();
        tape.backward(loss);
      }
      if (plan.max_grad_norm > 0.0) nk::clip_grad_norm(params, plan.max_grad_norm);
      std::map<Group, double> lr;
      for (const auto& [g, v] : peak) lr[g] = nk::linear_warmup_decay(log.steps + 1, total, v, kWarmupFraction);
      opt.step(params, lr);
      ++log.steps;
      log.step_losses.push_back(batch_loss);
      epoch_loss += batch_loss;
    }
    EpochLog e{epoch + 1, epoch_loss / static_cast<double>(per_epoch), dev_f1(model, dev, eval_k)};
    log.epochs.push_back(e);
    if (e.dev_f1 > log.best_dev_f1) {
      log.best_dev_f1 = e.dev_f1;
      log.best_epoch = e.epoch;
      best = take(model.params());
    }
    if (progress) progress(e);
  }
  restore(model.params(), best);
  return log;
}

}  // namespace

TrainLog train_stage1(Model& model, const TrainPlan& plan, const std::vector<Document>& train,
                      const std::vector<Document>& dev, const ProgressFn& progress) {
  plan.validate();
  if (plan.stage != 1) throw std::invalid_argument("train_stage1 needs a stage-1 plan");
  std::mt19937_64 rng(plan.seed);
  std::map<Group, double> peak{{Group::encoder, plan.encoder_lr}, {Group::base, plan.classifier_lr}};
  auto step = [&](const Document& doc, const LabelSet& labels, std::mt19937_64& r) {
    return atl_loss(model.forward_base(doc, &r).logits, labels);
  };
  return run(model, plan, train, dev, peak, 0, step, {}, rng, progress);
}

TrainLog train_stage2(Model& model, const TrainPlan& plan, const std::vector<Document>& train,
                      const std::vector<Document>& dev, const ProgressFn& progress) {
  plan.validate();
  if (plan.stage != 2) throw std::invalid_argument("train_stage2 needs a stage-2 plan");
  std::mt19937_64 rng(plan.seed ^ 0x9e3779b97f4a7c15ULL);
  const double base_lr = plan.freeze_base ? 0.0 : plan.base_lr;
  std::map<Group, double> peak{
      {Group::encoder, base_lr}, {Group::base, base_lr}, {Group::inference, plan.inference_lr}};
  const std::size_t d = model.config().d_model;
  std::vector<double> rates;
  double rate_bar = 0.0, rate_hat = 0.0;
  auto on_batch = [&](std::mt19937_64& r) {
    rate_bar = sample_noise_rate(r);
    rate_hat = sample_noise_rate(r);
    rates.push_back(rate_bar);
    if (!plan.no_contrastive) rates.push_back(rate_hat);
  };

  auto step = [&](const Document& doc, const LabelSet& labels, std::mt19937_64& r) {
    BaseOutput out = model.forward_base(doc, &r);
    const std::size_t n = out.matrices.n;
    PairIndex index(n);
    Tensor f0 = nk::reshape(out.matrices.F, {n * n, d});
    Tensor atl_base = plan.freeze_base ? Tensor() : atl_loss(out.logits, labels);
    Tensor refined_logits, contrastive;
    if (plan.no_contrastive) {
      auto ids = inject_noise(out.matrices.relation_ids, n, rate_bar, model.num_relation_ids(), r);
      refined_logits = model.inference().refine_once(f0, model.base().embed_relations(ids), n).logits;
    } else {
      ContrastiveResult c = contrastive_loss(model.inference(), f0, out.matrices.relation_ids, model.embedder(),
                                             model.num_relation_ids(), model.contrastive_head(), rate_bar, rate_hat, r);
      refined_logits = c.refined_logits;
      contrastive = c.loss;
    }
    Tensor atl_refined = atl_loss(nk::gather_rows(refined_logits, index.cells()), labels);
    return stage2_objective(atl_base, atl_refined, contrastive, plan.lambda);
  };
  TrainLog log = run(model, plan, train, dev, peak, plan.K, step, on_batch, rng, progress);
  log.noise_rates = std::move(rates);
  return log;
}

std::vector<std::vector<Prediction>> predict_history(const Model& model, const std::vector<Document>& docs,
                                                     std::size_t K) {
  std::vector<std::vector<Prediction>> out(K + 1);
  for (const auto& doc : docs) {
    auto history = model.predict_history(doc, K);
    for (std::size_t k = 0; k < history.size(); ++k) {
      for (auto& [h, t, r] : decode_pairs(history[k], doc.entities.size(), model.relations())) {
        out[k].push_back({doc.doc_id, h, t, r});
      }
    }
  }
  return out;
}

std::vector<Prediction> predict(const Model& model, const std::vector<Document>& docs, std::size_t K) {
  return predict_history(model, docs, K).back();
}

EvalResult evaluate(const Model& model, const std::vector<Document>& docs, std::size_t K,
                    const TrainFactSet& train_facts, const std::set<std::string>& conclusions) {
  EvalResult r;
  for (const auto& preds : predict_history(model, docs, K)) {
    r.per_k.push_back(f1_scores(preds, docs, train_facts, model.relations()));
    r.conclusion_per_k.push_back(infer_f1(preds, docs, &conclusions));
  }
  return r;
}

std::string format_history(const EvalResult& result, char sep) {
  std::ostringstream os;
  os << "k" << sep << "f1" << sep << "ign_f1" << sep << "intra_f1" << sep << "inter_f1" << sep << "infer_f1" << sep
     << "conclusion_infer_f1\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    os << sep << buf;
  };
  for (std::size_t k = 0; k < result.per_k.size(); ++k) {
    const auto& m = result.per_k[k];
    os << k;
    put(m.f1);
    put(m.ign_f1);
    put(m.intra_f1);
    put(m.inter_f1);
    put(m.infer_f1);
    put(k < result.conclusion_per_k.size() ? result.conclusion_per_k[k].f1 : 0.0);
    os << '\n';
  }
  return os.str();
}

}  // namespace pairinfer
