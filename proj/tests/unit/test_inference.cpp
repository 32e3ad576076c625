#include <doctest.h>

#include <cmath>
#include <random>

#include "pairinfer/inference.hpp"
#include "pairinfer/model.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace pairinfer;
using nk::Tensor;

namespace {

using Vec = std::vector<double>;

// Plain row-major helpers for the straight-line re-implementation.
Vec mm(const Vec& a, std::size_t rows, std::size_t inner, const Vec& b, std::size_t cols) {
  Vec out(rows * cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < inner; ++k)
      for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += a[i * inner + k] * b[k * cols + j];
  return out;
}

Vec cat(const Vec& a, std::size_t ca, const Vec& b, std::size_t cb, std::size_t rows) {
  Vec out;
  for (std::size_t i = 0; i < rows; ++i) {
    out.insert(out.end(), a.begin() + i * ca, a.begin() + (i + 1) * ca);
    out.insert(out.end(), b.begin() + i * cb, b.begin() + (i + 1) * cb);
  }
  return out;
}

void add_bias(Vec& x, const Vec& b) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += b[i % b.size()];
}

double gelu(double v) { return 0.5 * v * (1.0 + std::tanh(0.7978845608028654 * (v + 0.044715 * v * v * v))); }

Vec layer_norm(const Vec& x, std::size_t d, const Vec& g, const Vec& b) {
  Vec out(x.size());
  for (std::size_t r = 0; r < x.size() / d; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += x[r * d + j] / d;
    for (std::size_t j = 0; j < d; ++j) var += (x[r * d + j] - mean) * (x[r * d + j] - mean) / d;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = (x[r * d + j] - mean) / std::sqrt(var + 1e-5) * g[j] + b[j];
  }
  return out;
}

struct StraightLine {
  const nk::ParameterStore& p;
  std::size_t n, d;
  bool full = false, no_fusion = false;

  const Vec& w(const std::string& name) const { return p.get(name).tensor.data(); }

  Vec ffn(const std::string& pre, const Vec& x, std::size_t c) const {
    Vec h = mm(x, c, d, w(pre + ".w1"), 2 * d);
    add_bias(h, w(pre + ".b1"));
    for (auto& v : h) v = gelu(v);
    Vec o = mm(h, c, 2 * d, w(pre + ".w2"), d);
    add_bias(o, w(pre + ".b2"));
    return o;
  }

  std::pair<Vec, Vec> run(Vec f, Vec r, std::size_t layers, Vec* logits) const {
    const std::size_t c = n * n;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::string pre = "inference.layer" + std::to_string(l);
      Vec mem = cat(f, d, r, d, c);
      auto eca = [&](const std::string& u, const Vec& q) {
        return testing::brute_eca(n, q, mem, d, 2 * d, w(pre + u + ".wq"), w(pre + u + ".wk"), w(pre + u + ".wv"),
                                  w(pre + u + ".wo"), full)
            .out;
      };
      Vec ft = eca(".feature_eca", f), rt = eca(".relation_eca", r);
      Vec to_f = ft, to_r = rt;
      if (!no_fusion) {
        Vec gate = mm(cat(ft, d, rt, d, c), c, 2 * d, w(pre + ".w_g"), d);
        add_bias(gate, w(pre + ".b_g"));
        for (std::size_t i = 0; i < gate.size(); ++i) {
          const double s = 1.0 / (1.0 + std::exp(-gate[i]));
          to_f[i] = s * ft[i] + (1.0 - s) * rt[i];
        }
        to_r = to_f;
      }
      Vec uf = ffn(pre + ".ffn_f", to_f, c), ur = ffn(pre + ".ffn_r", to_r, c);
      for (std::size_t i = 0; i < uf.size(); ++i) {
        uf[i] += f[i];
        ur[i] += r[i];
      }
      f = layer_norm(uf, d, w(pre + ".ln_f_g"), w(pre + ".ln_f_b"));
      r = layer_norm(ur, d, w(pre + ".ln_r_g"), w(pre + ".ln_r_b"));
    }
    const std::size_t classes = w("inference.b_c").size();
    *logits = mm(cat(f, d, r, d, c), c, 2 * d, w("inference.w_c"), classes);
    add_bias(*logits, w("inference.b_c"));
    return {f, r};
  }
};

void randomize(nk::ParameterStore& store, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& p : store.all()) {
    for (auto& v : p.tensor.mutable_values()) v += g(rng);
  }
}

double max_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

}  // namespace

TEST_CASE("ECA regions") {
  for (std::size_t n : {2, 3, 4}) {
    EcaMask m = EcaMask::build(n);
    const std::size_t c = n * n;
    for (std::size_t h = 0; h < kEcaHeads; ++h)
      for (std::size_t t = 0; t < c; ++t)
        for (std::size_t k = 0; k < c; ++k)
          CHECK(m.allowed(h, t, k) == testing::in_region(h, t / n, t % n, k / n, k % n));
  }
  CHECK_THROWS(EcaMask::build(1));
}

TEST_CASE("ECA weights: zero outside regions, rows sum to one, singleton regions") {
  std::mt19937_64 rng(31);
  for (std::size_t n : {2, 4}) {
    nk::ParameterStore store;
    EcaUnit unit("u", 4, 8, store, rng);
    Tensor q = testing::random_tensor({n * n, 4}, rng), m = testing::random_tensor({n * n, 8}, rng);
    EcaWeights w;
    unit.forward(q, m, EcaMask::build(n), &w);
    const std::size_t c = n * n;
    for (std::size_t h = 0; h < kEcaHeads; ++h) {
      for (std::size_t t = 0; t < c; ++t) {
        double sum = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
          const double v = w[h].at(t, k);
          if (!testing::in_region(h, t / n, t % n, k / n, k % n)) CHECK(v == 0.0);
          sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
    if (n == 2) {
      // every region of a 2-entity matrix holds exactly one cell
      for (std::size_t h = 0; h < kEcaHeads; ++h)
        for (std::size_t t = 0; t < c; ++t)
          for (std::size_t k = 0; k < c; ++k)
            if (testing::in_region(h, t / n, t % n, k / n, k % n)) CHECK(w[h].at(t, k) == 1.0);
    }
  }
}

TEST_CASE("gated fusion") {
  std::mt19937_64 rng(32);
  nk::ParameterStore store;
  InferenceLayer layer("l", 3, store, rng);
  Tensor ft = testing::random_tensor({4, 3}, rng), rt = testing::random_tensor({4, 3}, rng);
  Tensor wg = store.get("l.w_g").tensor;
  const Vec keep = wg.data();
  std::fill(wg.mutable_values().begin(), wg.mutable_values().end(), 0.0);
  const Tensor half = layer.fuse(ft, rt);
  for (std::size_t i = 0; i < half.size(); ++i) CHECK(half.data()[i] == doctest::Approx((ft.data()[i] + rt.data()[i]) / 2));
  std::copy(keep.begin(), keep.end(), wg.mutable_values().begin());
  const Tensor same = layer.fuse(ft, ft);
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(same.data()[i] == doctest::Approx(ft.data()[i]));

  auto loss = [&] { return nk::sum(nk::mul(layer.fuse(ft, rt), layer.fuse(ft, rt))); };
  CHECK(testing::check_gradients(loss, {{"w_g", wg}, {"b_g", store.get("l.b_g").tensor}}, rng).ok());
}

TEST_CASE("refine_once matches a straight-line re-implementation") {
  for (int variant = 0; variant < 3; ++variant) {
    std::mt19937_64 rng(33 + variant);
    const std::size_t n = 3, d = 4;
    InferenceConfig cfg{d, 2, 4, variant == 1, variant == 2, false};
    nk::ParameterStore store;
    InferenceModule mod(cfg, store, rng);
    randomize(store, rng);
    Tensor f = testing::random_tensor({n * n, d}, rng), r = testing::random_tensor({n * n, d}, rng);
    RefineOutput out = mod.refine_once(f, r, n);
    CHECK(out.logits.dim(0) == n * n);
    CHECK(out.logits.dim(1) == 4);
    CHECK(out.top.dim(1) == 2 * d);

    StraightLine ref{store, n, d, variant == 1, variant == 2};
    Vec logits;
    auto [fl, rl] = ref.run(f.data(), r.data(), 2, &logits);
    CHECK(max_diff(out.logits.data(), logits) <= 1e-10);
    CHECK(max_diff(out.top.data(), cat(fl, d, rl, d, n * n)) <= 1e-10);

    RefineOutput again = mod.refine_once(f, r, n);
    CHECK(again.logits.data() == out.logits.data());
  }
}

TEST_CASE("full attention changes the output") {
  std::mt19937_64 rng(34);
  nk::ParameterStore store;
  InferenceModule mod({4, 1, 3, false, false, false}, store, rng);
  Tensor f = testing::random_tensor({16, 4}, rng), r = testing::random_tensor({16, 4}, rng);
  const Vec eca = mod.refine_once(f, r, 4).logits.data();
  mod.mutable_config().full_attention = true;
  const Vec full = mod.refine_once(f, r, 4).logits.data();
  CHECK(max_diff(eca, full) > 1e-6);
}

TEST_CASE("iterate: K=0 is the base, K=1 is one refinement") {
  Document doc;
  doc.doc_id = "it";
  doc.words = {"a", "b", "c", "d", "e", "f"};
  doc.sentence_spans = {{0, 3}, {3, 6}};
  doc.entities = {{0, {{{0, 1}, 0, "a"}}}, {1, {{{2, 3}, 0, "c"}}}, {2, {{{4, 5}, 1, "e"}}}};
  ModelConfig cfg;
  cfg.d_model = 6;
  cfg.encoder_heads = 2;
  cfg.encoder_layers = 1;
  cfg.ffn_width = 8;
  Model model(cfg, Vocabulary::build({doc}), RelationVocab({"R1", "R2"}), 3);
  BaseOutput base = model.forward_base(doc);
  CHECK(model.predict_history(doc, 0).size() == 1);
  CHECK(model.predict_history(doc, 0)[0].data() == base.logits.data());

  auto h1 = model.predict_history(doc, 1);
  REQUIRE(h1.size() == 2);
  RefineOutput once = model.inference().refine_once(nk::reshape(base.matrices.F, {9, 6}),
                                                    nk::reshape(base.matrices.R, {9, 6}), 3);
  CHECK(h1[1].data() == nk::gather_rows(once.logits, PairIndex(3).cells()).data());
  auto h3 = model.predict_history(doc, 3);
  CHECK(h3.size() == 4);
  CHECK(h3[1].data() == h1[1].data());
  CHECK(InferenceConfig{}.num_layers == 2);
}
