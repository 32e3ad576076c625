#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "pairinfer/checkpoint.hpp"
#include "pairinfer/config.hpp"
#include "pairinfer/docred.hpp"
#include "pairinfer/errors.hpp"
#include "pairinfer/synth.hpp"
#include "pairinfer/train.hpp"

using namespace pairinfer;
namespace fs = std::filesystem;

namespace {

SynthCorpus small_corpus(std::size_t train = 8) {
  SynthConfig cfg;
  cfg.num_train = train;
  cfg.num_dev = 3;
  cfg.num_test = 3;
  cfg.seed = 5;
  return generate_synthetic(cfg);
}

ModelConfig small_model() {
  ModelConfig m;
  m.d_model = 16;
  m.encoder_heads = 2;
  m.encoder_layers = 1;
  m.ffn_width = 32;
  m.inference_layers = 1;
  return m;
}

std::map<std::string, std::vector<double>> snapshot(const Model& m, nk::Group g) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& p : m.params().all()) {
    if (p.group == g) out[p.name] = p.tensor.data();
  }
  return out;
}

}  // namespace

TEST_CASE("plan defaults and validation") {
  TrainPlan s1 = TrainPlan::defaults(1), s2 = TrainPlan::defaults(2);
  CHECK(s1.epochs == 30);
  CHECK(s2.epochs == 15);
  CHECK(s1.encoder_lr == 5e-5);
  CHECK(s1.classifier_lr == 1e-4);
  CHECK(s2.base_lr == 1e-5);
  CHECK(s2.inference_lr == 1e-4);
  CHECK(s2.K == 3);
  CHECK(s2.N_I == 2);
  CHECK(kWarmupFraction == 0.06);
  s2.base_lr = s2.inference_lr;
  CHECK_THROWS_AS(s2.validate(), std::invalid_argument);
}

TEST_CASE("stage 1: loss decreases, inference group untouched, reproducible") {
  SynthCorpus c = small_corpus();
  Settings s = desk_settings(1);
  s.plan.epochs = 20;
  s.plan.batch_size = 8;  // the whole corpus, one step per epoch
  s.plan.seed = 3;
  Model m(small_model(), Vocabulary::build(c.train), RelationVocab(c.relations), 3);
  const auto inference0 = snapshot(m, nk::Group::inference);
  TrainLog log = train_stage1(m, s.plan, c.train, c.dev);
  REQUIRE(log.step_losses.size() == 20);
  for (std::size_t i = 1; i < 20; ++i) CHECK(log.step_losses[i] < log.step_losses[i - 1]);
  CHECK(snapshot(m, nk::Group::inference) == inference0);
  CHECK(log.epochs.size() == 20);

  Model again(small_model(), Vocabulary::build(c.train), RelationVocab(c.relations), 3);
  TrainLog log2 = train_stage1(again, s.plan, c.train, c.dev);
  CHECK(log2.best_dev_f1 == log.best_dev_f1);
  CHECK(log2.step_losses == log.step_losses);
  CHECK(snapshot(again, nk::Group::base) == snapshot(m, nk::Group::base));

  CHECK_THROWS(train_stage1(m, s.plan, {}, c.dev));
}

TEST_CASE("stage 2: freeze keeps the base bitwise, noise rates in range") {
  SynthCorpus c = small_corpus();
  Settings s = desk_settings(2);
  s.plan.epochs = 2;
  s.plan.batch_size = 4;
  s.plan.K = 2;
  s.plan.N_I = 1;
  s.plan.freeze_base = true;
  Model m(small_model(), Vocabulary::build(c.train), RelationVocab(c.relations), 4);
  const auto base0 = snapshot(m, nk::Group::base), enc0 = snapshot(m, nk::Group::encoder);
  const auto inf0 = snapshot(m, nk::Group::inference);
  TrainLog log = train_stage2(m, s.plan, c.train, c.dev);
  CHECK(snapshot(m, nk::Group::base) == base0);
  CHECK(snapshot(m, nk::Group::encoder) == enc0);
  CHECK(snapshot(m, nk::Group::inference) != inf0);
  CHECK(log.noise_rates.size() == 2 * log.steps);
  for (double r : log.noise_rates) {
    CHECK(r >= 0.0);
    CHECK(r < kMaxNoiseRate);
  }

  s.plan.freeze_base = false;
  s.plan.no_contrastive = true;
  Model u(small_model(), Vocabulary::build(c.train), RelationVocab(c.relations), 4);
  TrainLog log2 = train_stage2(u, s.plan, c.train, c.dev);
  CHECK(log2.noise_rates.size() == log2.steps);
  CHECK(snapshot(u, nk::Group::base) != base0);
}

TEST_CASE("stage 2 without the contrastive term still converges") {
  SynthCorpus c = small_corpus(10);
  Settings s = desk_settings(2);
  s.plan.epochs = 5;
  s.plan.batch_size = 1;  // 50 steps
  s.plan.K = 1;
  s.plan.N_I = 1;
  s.plan.no_contrastive = true;
  s.plan.seed = 8;
  Model m(small_model(), Vocabulary::build(c.train), RelationVocab(c.relations), 8);
  TrainLog log = train_stage2(m, s.plan, c.train, c.dev);
  REQUIRE(log.step_losses.size() == 50);
  auto window = [&](std::size_t from) {
    return std::accumulate(log.step_losses.begin() + from, log.step_losses.begin() + from + 10, 0.0) / 10.0;
  };
  CHECK(window(40) < window(0));
}

TEST_CASE("evaluation history and K = 0") {
  SynthCorpus c = small_corpus();
  Model m(small_model(), Vocabulary::build(c.train), RelationVocab(c.relations), 6);
  const TrainFactSet train = build_train_fact_set(c.train);
  EvalResult r = evaluate(m, c.dev, 3, train, conclusion_relations(c.rules));
  CHECK(r.per_k.size() == 4);
  CHECK(r.conclusion_per_k.size() == 4);
  EvalResult base = evaluate(m, c.dev, 0, train);
  CHECK(base.per_k.size() == 1);
  CHECK(format_metric_report(base.per_k[0]) == format_metric_report(r.per_k[0]));
  CHECK(format_metric_report(f1_scores(predict(m, c.dev, 0), c.dev, train, m.relations())) ==
        format_metric_report(base.per_k[0]));
  const std::string table = format_history(r);
  CHECK(std::count(table.begin(), table.end(), '\n') == 5);  // header + K+1 rows

  const auto preds = predict(m, c.dev, 3);
  fs::path file = fs::temp_directory_path() / "pairinfer_unit_pred.json";
  export_submission(preds, file);
  std::set<Prediction> want(preds.begin(), preds.end());
  CHECK(import_submission(file) == std::vector<Prediction>(want.begin(), want.end()));
}

TEST_CASE("checkpoint round trip is bitwise") {
  SynthCorpus c = small_corpus(4);
  Model m(small_model(), Vocabulary::build(c.train), RelationVocab(c.relations), 7);
  Checkpoint ck = capture(m);
  ck.stage = 2;
  ck.step = 17;
  fs::path file = fs::temp_directory_path() / "pairinfer_unit.ckpt";
  save_checkpoint(ck, file);
  Checkpoint back = load_checkpoint(file);
  CHECK(back.step == 17);
  CHECK(back.config_hash == hash_config(m.config()));
  auto r = restore_model(back);
  for (const auto& d : c.dev) {
    auto a = m.predict_history(d, 2), b = r->predict_history(d, 2);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].data() == b[k].data());
  }

  std::string bytes = read_text_file(file);
  bytes[bytes.size() / 2] ^= 0x5a;
  bytes.resize(bytes.size() - 8);
  write_text_file(file, bytes);
  CHECK_THROWS(load_checkpoint(file));
  CHECK_THROWS(load_checkpoint(fs::temp_directory_path() / "pairinfer_missing.ckpt"));
}

TEST_CASE("config parsing and overrides") {
  ConfigMap m = parse_config("# comment\n epochs = 4\nk=2\n\nno-eca = true\n");
  CHECK(m.size() == 3);
  Settings s = desk_settings(2);
  apply_settings(s, m);
  CHECK(s.plan.epochs == 4);
  CHECK(s.plan.K == 2);
  CHECK(s.model.full_attention);
  apply_setting(s, "ni", "1");
  CHECK(s.plan.N_I == 1);
  CHECK(s.model.inference_layers == 1);
  apply_setting(s, "dropout", "0.25");
  CHECK(s.model.dropout == 0.25);
  CHECK_THROWS_AS(apply_setting(s, "warp-speed", "9"), std::invalid_argument);
  CHECK_THROWS_AS(apply_setting(s, "epochs", "many"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config("just words\n"), std::invalid_argument);
  CHECK(desk_settings(2).plan.base_lr < desk_settings(2).plan.inference_lr);
}
