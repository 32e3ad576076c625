#include "pairinfer/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "pairinfer/errors.hpp"

namespace pairinfer {

using nk::Tensor;

LabelSet labels_from_document(const Document& doc, const RelationVocab& relations) {
  const std::size_t n = doc.entities.size();
  PairIndex index(n);
  std::vector<std::set<int>> sets(index.num_pairs());
  for (const auto& f : doc.gold_facts) sets[index.pair(f.head, f.tail)].insert(relations.id(f.relation));
  LabelSet out;
  for (auto& s : sets) out.positives.emplace_back(s.begin(), s.end());
  return out;
}

Tensor atl_loss(const Tensor& logits, const LabelSet& labels) {
  const std::size_t pairs = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  if (labels.positives.size() != pairs) throw ShapeError("atl_loss: one label set per pair required");
  nk::Mask with_positive(pairs * classes, 0), with_negative(pairs * classes, 0);
  std::vector<double> counts(pairs, 0.0), pos_sel(pairs * classes, 0.0), th_sel(pairs * classes, 0.0);
  for (std::size_t p = 0; p < pairs; ++p) {
    std::vector<std::uint8_t> positive(classes, 0);
    for (int r : labels.positives[p]) {
      if (r <= 0 || static_cast<std::size_t>(r) >= classes) throw DataError("relation id out of range");
      positive[static_cast<std::size_t>(r)] = 1;
    }
    for (std::size_t c = 0; c < classes; ++c) {
      const std::size_t k = p * classes + c;
      if (c == kThresholdClass) {
        with_positive[k] = with_negative[k] = 1;
        th_sel[k] = 1.0;
      } else if (positive[c]) {
        with_positive[k] = 1;
        pos_sel[k] = 1.0;
        counts[p] += 1.0;
      } else {
        with_negative[k] = 1;
      }
    }
  }
  Tensor counts_t({pairs}, std::move(counts));
  Tensor pos_t(logits.shape(), std::move(pos_sel));
  Tensor th_t(logits.shape(), std::move(th_sel));
  Tensor lse_pos = nk::logsumexp(logits, 1, with_positive);
  Tensor lse_neg = nk::logsumexp(logits, 1, with_negative);
  Tensor term_a = nk::sub(nk::sum(nk::mul(lse_pos, counts_t)), nk::sum(nk::mul(logits, pos_t)));
  Tensor term_b = nk::sub(nk::sum(lse_neg), nk::sum(nk::mul(logits, th_t)));
  return nk::scale(nk::add(term_a, term_b), 1.0 / static_cast<double>(pairs));
}

std::vector<std::size_t> inject_noise(std::span<const std::size_t> ids, std::size_t n, double rate,
                                      std::size_t num_ids, std::mt19937_64& rng) {
  if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("noise rate must lie in [0, 1]");
  if (ids.size() != n * n) throw ShapeError("inject_noise: expected one id per matrix cell");
  if (num_ids < 2) throw std::invalid_argument("inject_noise needs at least two ids");
  PairIndex index(n);
  std::vector<std::size_t> cells = index.cells();
  const auto count = static_cast<std::size_t>(std::lround(rate * static_cast<double>(cells.size())));
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, cells.size() - 1);
    std::swap(cells[i], cells[pick(rng)]);
  }
  std::vector<std::size_t> out(ids.begin(), ids.end());
  std::uniform_int_distribution<std::size_t> other(0, num_ids - 2);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t cur = out[cells[i]];
    std::size_t v = other(rng);
    out[cells[i]] = v >= cur ? v + 1 : v;
  }
  return out;
}

double sample_noise_rate(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, kMaxNoiseRate);
  return dist(rng);
}

ContrastiveHead::ContrastiveHead(std::size_t width, nk::ParameterStore& store, std::mt19937_64& rng)
    : width_(width) {
  w1_ = store.add_weight("contrastive.w1", nk::Group::inference, width, 2 * width, rng);
  b1_ = store.add_zeros("contrastive.b1", nk::Group::inference, {2 * width});
  w2_ = store.add_weight("contrastive.w2", nk::Group::inference, 2 * width, width, rng);
  b2_ = store.add_zeros("contrastive.b2", nk::Group::inference, {width});
}

Tensor ContrastiveHead::predict(const Tensor& m) const {
  return nk::add_row(nk::matmul(nk::gelu(nk::add_row(nk::matmul(m, w1_), b1_)), w2_), b2_);
}

namespace {
bool zero_row(const Tensor& t, std::size_t r) {
  const std::size_t c = t.dim(1);
  for (std::size_t j = 0; j < c; ++j) {
    if (t.data()[r * c + j] != 0.0) return false;
  }
  return true;
}
}  // namespace

Tensor contrastive_from_outputs(const Tensor& m_bar, const Tensor& m_hat, const ContrastiveHead& head,
                                const PairIndex& index, std::size_t* skipped) {
  Tensor bar = nk::gather_rows(m_bar, index.cells());
  Tensor hat = nk::gather_rows(m_hat, index.cells());
  Tensor pred_bar = head.predict(bar);
  Tensor pred_hat = head.predict(hat);
  std::vector<std::size_t> keep;
  for (std::size_t p = 0; p < index.num_pairs(); ++p) {
    if (zero_row(bar, p) || zero_row(hat, p) || zero_row(pred_bar, p) || zero_row(pred_hat, p)) continue;
    keep.push_back(p);
  }
  if (skipped) *skipped = index.num_pairs() - keep.size();
  if (keep.empty()) throw NumericError("contrastive loss: every cell has a zero-norm vector");
  if (keep.size() != index.num_pairs()) {
    bar = nk::gather_rows(bar, keep);
    hat = nk::gather_rows(hat, keep);
    pred_bar = nk::gather_rows(pred_bar, keep);
    pred_hat = nk::gather_rows(pred_hat, keep);
  }
  Tensor cos_hat = nk::mean(nk::cosine_rows(pred_hat, nk::stop_gradient(bar)));
  Tensor cos_bar = nk::mean(nk::cosine_rows(pred_bar, nk::stop_gradient(hat)));
  return nk::add(Tensor::scalar(2.0), nk::scale(nk::add(cos_hat, cos_bar), -1.0));
}

ContrastiveResult contrastive_loss(const InferenceModule& module, const Tensor& f0,
                                   std::span<const std::size_t> base_ids, const RelationEmbedder& embed,
                                   std::size_t num_ids, const ContrastiveHead& head, double rate_bar,
                                   double rate_hat, std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(base_ids.size()))));
  PairIndex index(n);
  ContrastiveResult out;
  out.rate_bar = rate_bar;
  out.rate_hat = rate_hat;
  auto ids_bar = inject_noise(base_ids, n, out.rate_bar, num_ids, rng);
  auto ids_hat = inject_noise(base_ids, n, out.rate_hat, num_ids, rng);
  RefineOutput bar = module.refine_once(f0, embed(ids_bar), n);
  RefineOutput hat = module.refine_once(embed(ids_hat), f0, n);
  out.refined_logits = bar.logits;
  out.loss = contrastive_from_outputs(bar.top, hat.top, head, index, &out.skipped_cells);
  return out;
}

Tensor stage2_objective(const Tensor& atl_base, const Tensor& atl_refined, const Tensor& contrastive,
                        double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("contrastive weight must be >= 0");
  Tensor total;
  auto accumulate = [&](const Tensor& t) { total = total.defined() ? nk::add(total, t) : t; };
  if (atl_base.defined()) accumulate(atl_base);
  if (atl_refined.defined()) accumulate(atl_refined);
  if (contrastive.defined() && lambda > 0.0) accumulate(nk::scale(contrastive, lambda));
  if (!total.defined()) throw std::invalid_argument("stage-2 objective with no terms");
  return total;
}

}  // namespace pairinfer
