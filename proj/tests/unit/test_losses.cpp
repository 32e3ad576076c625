#include <doctest.h>

#include <cmath>
#include <random>

#include "pairinfer/losses.hpp"
#include "pairinfer/model.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace pairinfer;
using nk::Tensor;

TEST_CASE("adaptive threshold loss by hand") {
  // columns: TH, R1, R2, R3; positives {1, 3}
  const std::vector<double> l = {0.5, 1.2, -0.3, 0.8};
  Tensor logits = Tensor::matrix(1, 4, l);
  LabelSet labels{{{1, 3}}};
  const double z = std::log(std::exp(l[0]) + std::exp(l[1]) + std::exp(l[3]));
  const double pos = -(l[1] - z) - (l[3] - z);
  const double neg = -(l[0] - std::log(std::exp(l[0]) + std::exp(l[2])));
  CHECK(std::abs(atl_loss(logits, labels).item() - (pos + neg)) <= 1e-10);
  CHECK(std::abs(testing::direct_atl(l, 1, 4, labels.positives) - (pos + neg)) <= 1e-10);
}

TEST_CASE("adaptive threshold loss saturates") {
  LabelSet one{{{1}}};
  CHECK(atl_loss(Tensor::matrix(1, 3, {0.0, 80.0, -80.0}), one).item() < 1e-30);
  LabelSet none{{{}}};
  CHECK(atl_loss(Tensor::matrix(1, 3, {80.0, 0.0, -5.0}), none).item() < 1e-30);
}

TEST_CASE("noise injection counts") {
  std::mt19937_64 rng(41);
  const std::size_t n = 3;  // P = 6
  std::vector<std::size_t> ids = {0, 1, 2, 3, 0, 1, 2, 3, 0};
  CHECK(inject_noise(ids, n, 0.0, 5, rng) == ids);
  auto all = inject_noise(ids, n, 1.0, 5, rng);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t o = 0; o < n; ++o) {
      const std::size_t c = s * n + o;
      if (s == o) CHECK(all[c] == ids[c]);
      else CHECK(all[c] != ids[c]);
    }

  // N = 4, P = 12
  std::vector<std::size_t> sixteen(16, 1);
  for (int t = 0; t < 20; ++t) {
    auto half = inject_noise(sixteen, 4, 0.5, 6, rng);
    std::size_t changed = 0;
    for (std::size_t c = 0; c < 16; ++c) changed += half[c] != sixteen[c];
    CHECK(changed == 6);
  }
}

TEST_CASE("noise rate sampler") {
  std::mt19937_64 a(42), b(42);
  double lo = 1.0, hi = 0.0, mean = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double r = sample_noise_rate(a);
    CHECK(r == sample_noise_rate(b));
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    mean += r / 10000.0;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < kMaxNoiseRate);
  CHECK(std::abs(mean - 0.2) <= 0.01);
}

TEST_CASE("contrastive loss range and zero case") {
  std::mt19937_64 rng(43);
  for (int i = 0; i < 50; ++i) {
    nk::ParameterStore store;
    ContrastiveHead head(4, store, rng);
    const double l = contrastive_from_outputs(testing::random_tensor({9, 4}, rng, 3.0),
                                              testing::random_tensor({9, 4}, rng), head, PairIndex(3))
                         .item();
    CHECK(l >= 0.0);
    CHECK(l <= 4.0);
  }
  nk::ParameterStore store;
  ContrastiveHead head(3, store, rng);
  Tensor w1 = store.get("contrastive.w1").tensor, w2 = store.get("contrastive.w2").tensor;
  auto a = w1.mutable_values(), b = w2.mutable_values();
  std::fill(a.begin(), a.end(), 0.0);
  std::fill(b.begin(), b.end(), 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    a[i * 6 + i] = 1.0;
    a[i * 6 + 3 + i] = -1.0;
    b[i * 3 + i] = 1.0;
    b[(3 + i) * 3 + i] = -1.0;
  }
  Tensor m = testing::random_tensor({4, 3}, rng);
  CHECK(std::abs(contrastive_from_outputs(m, m, head, PairIndex(2)).item()) <= 1e-12);
}

TEST_CASE("contrastive gradient skips the stop-gradient side") {
  std::mt19937_64 rng(44);
  nk::ParameterStore store;
  ContrastiveHead head(4, store, rng);
  PairIndex index(2);
  Tensor bar = testing::random_tensor({4, 4}, rng), hat = testing::random_tensor({4, 4}, rng);
  {
    nk::Tape tape;
    nk::Tape::Scope scope(tape);
    tape.backward(contrastive_from_outputs(bar, hat, head, index));
  }
  // With the targets frozen, each branch's gradient comes only from the
  // term where it feeds the predictor.
  const Tensor bar_t = nk::gather_rows(bar, index.cells()), hat_t = nk::gather_rows(hat, index.cells());
  const Tensor bar_frozen(bar_t.shape(), bar_t.data()), hat_frozen(hat_t.shape(), hat_t.data());
  Tensor x = Tensor(bar.shape(), bar.data(), true);
  auto loss = [&] {
    Tensor a = nk::mean(nk::cosine_rows(head.predict(nk::gather_rows(hat, index.cells())), bar_frozen));
    Tensor b = nk::mean(nk::cosine_rows(head.predict(nk::gather_rows(x, index.cells())), hat_frozen));
    return nk::sub(Tensor::scalar(2.0), nk::add(a, b));
  };
  std::vector<double> analytic(bar.grad().begin(), bar.grad().end());
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto v = x.mutable_values();
    const double keep = v[i];
    v[i] = keep + h;
    const double up = loss().item();
    v[i] = keep - h;
    const double down = loss().item();
    v[i] = keep;
    CHECK(analytic[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
  }
  // diagonal cells are not part of the objective
  CHECK(analytic[0] == 0.0);
  CHECK(analytic[15] == 0.0);
}

TEST_CASE("stage-2 objective") {
  Tensor a = Tensor::scalar(0.7), b = Tensor::scalar(1.1), c = Tensor::scalar(0.4);
  CHECK(stage2_objective(a, b, c, 0.0).item() == doctest::Approx(1.8));
  CHECK(stage2_objective(a, b, c, 2.0).item() == doctest::Approx(2.6));
  CHECK(stage2_objective(Tensor(), b, Tensor(), 1.0).item() == doctest::Approx(1.1));
  CHECK(stage2_objective(a, b, c, 1.0).item() >= 0.0);
}

TEST_CASE("stage-2 gradient is the sum of component gradients") {
  std::mt19937_64 rng(45);
  Tensor x = testing::random_tensor({2, 3}, rng);
  LabelSet labels{{{1}, {}}};
  auto comp_a = [&] { return atl_loss(x, labels); };
  auto comp_b = [&] { return atl_loss(nk::scale(x, 2.0), labels); };
  auto comp_c = [&] { return nk::mean(nk::mul(x, x)); };
  auto grad_of = [&](const std::function<Tensor()>& f) {
    nk::Tape tape;
    nk::Tape::Scope scope(tape);
    x.zero_grad();
    tape.backward(f());
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };
  const double lambda = 0.6;
  auto total = grad_of([&] { return stage2_objective(comp_a(), comp_b(), comp_c(), lambda); });
  auto ga = grad_of(comp_a), gb = grad_of(comp_b), gc = grad_of(comp_c);
  for (std::size_t i = 0; i < total.size(); ++i) CHECK(total[i] == doctest::Approx(ga[i] + gb[i] + lambda * gc[i]));
  auto fd = testing::check_gradients([&] { return stage2_objective(comp_a(), comp_b(), comp_c(), lambda); },
                                     {{"x", x}}, rng);
  CHECK(fd.ok());
}

TEST_CASE("contrastive_loss uses the given rates and swaps slots on the second branch") {
  Document doc;
  doc.doc_id = "c";
  doc.words = {"a", "b", "c", "d"};
  doc.sentence_spans = {{0, 4}};
  doc.entities = {{0, {{{0, 1}, 0, "a"}}}, {1, {{{1, 2}, 0, "b"}}}, {2, {{{3, 4}, 0, "d"}}}};
  ModelConfig cfg;
  cfg.d_model = 4;
  cfg.encoder_heads = 2;
  cfg.encoder_layers = 1;
  cfg.ffn_width = 4;
  Model model(cfg, Vocabulary::build({doc}), RelationVocab({"R1", "R2"}), 9);
  BaseOutput base = model.forward_base(doc);
  Tensor f0 = nk::reshape(base.matrices.F, {9, 4});
  std::mt19937_64 r1(7), r2(7);
  auto a = contrastive_loss(model.inference(), f0, base.matrices.relation_ids, model.embedder(),
                            model.num_relation_ids(), model.contrastive_head(), 0.0, 0.0, r1);
  CHECK(a.rate_bar == 0.0);
  CHECK(a.refined_logits.dim(0) == 9);
  CHECK(a.loss.item() >= 0.0);
  CHECK(a.loss.item() <= 4.0);
  // rate 0 on both branches: the bar branch is a plain refinement
  Tensor r = nk::reshape(base.matrices.R, {9, 4});
  CHECK(a.refined_logits.data() == model.inference().refine_once(f0, r, 3).logits.data());
  auto b = contrastive_loss(model.inference(), f0, base.matrices.relation_ids, model.embedder(),
                            model.num_relation_ids(), model.contrastive_head(), 0.0, 0.0, r2);
  CHECK(a.loss.item() == b.loss.item());
}
