#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "pairinfer/checkpoint.hpp"
#include "pairinfer/config.hpp"
#include "pairinfer/docred.hpp"
#include "pairinfer/errors.hpp"
#include "pairinfer/metrics.hpp"
#include "pairinfer/synth.hpp"
#include "pairinfer/train.hpp"

namespace fs = std::filesystem;
using namespace pairinfer;

namespace {

const std::set<std::string> kSwitches = {"no-contrastive", "freeze-base", "no-eca", "no-fusion", "carry-features"};

// Every setting key becomes a --flag; values given on the command line win
// over the config file.
struct SettingFlags {
  std::string config_file;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key = value settings file")->check(CLI::ExistingFile);
    for (const auto& key : setting_keys()) {
      if (kSwitches.count(key)) {
        app->add_flag("--" + key, switches[key]);
      } else if (key != "seed" && key != "stage") {
        app->add_option("--" + key, values[key]);
      }
    }
  }

  Settings resolve(int stage) const {
    Settings s = desk_settings(stage);
    if (!config_file.empty()) apply_settings(s, load_config(config_file));
    for (const auto& [k, v] : values) {
      if (!v.empty()) apply_setting(s, k, v);
    }
    for (const auto& [k, on] : switches) {
      if (on) apply_setting(s, k, "true");
    }
    return s;
  }
};

struct Split {
  std::vector<Document> docs;
  std::vector<Document> train;  // for Ign F1; empty when unknown
  std::set<std::string> conclusions;
};

// A directory holds train/dev/test JSON files (plus meta.json for synthetic
// corpora); a file is a single DocRED-format split.
Split load_split(const fs::path& data, const std::string& split, const std::string& train_file) {
  Split out;
  if (fs::is_directory(data)) {
    SynthCorpus c = load_corpus(data);
    out.train = c.train;
    if (split == "train") out.docs = c.train;
    else if (split == "dev") out.docs = c.dev;
    else if (split == "test") out.docs = c.test;
    else throw std::invalid_argument("unknown split '" + split + "'");
    out.conclusions = conclusion_relations(c.rules);
  } else {
    out.docs = load_docred(data);
  }
  if (!train_file.empty()) out.train = load_docred(train_file);
  return out;
}

void print_epoch(const EpochLog& e) {
  std::fprintf(stderr, "epoch %zu  loss %.6f  dev_f1 %.4f\n", e.epoch, e.mean_loss, e.dev_f1);
}

int cmd_gen_data(const fs::path& out, const SettingFlags& flags, std::uint64_t seed) {
  Settings s = flags.resolve(1);
  s.synth.seed = seed;
  SynthCorpus corpus = generate_synthetic(s.synth);
  save_corpus(corpus, out);
  std::printf("wrote %zu/%zu/%zu documents to %s\n", corpus.train.size(), corpus.dev.size(), corpus.test.size(),
              out.c_str());
  return 0;
}

int cmd_train(int stage, std::uint64_t seed, const fs::path& data, const fs::path& init, const fs::path& out,
              const fs::path& log_file, const SettingFlags& flags) {
  Settings s = flags.resolve(stage);
  s.plan.stage = stage;
  s.plan.seed = seed;
  s.plan.validate();
  SynthCorpus corpus = load_corpus(data);
  if (corpus.train.empty()) throw DataError("training split is empty");

  std::unique_ptr<Model> model;
  TrainLog log;
  if (stage == 1) {
    model = std::make_unique<Model>(s.model, Vocabulary::build(corpus.train), RelationVocab(corpus.relations), seed);
    log = train_stage1(*model, s.plan, corpus.train, corpus.dev, print_epoch);
  } else {
    if (init.empty()) throw std::invalid_argument("stage 2 needs --init with a stage-1 checkpoint");
    const Checkpoint c1 = load_checkpoint(init);
    ModelConfig cfg = c1.config;
    cfg.inference_layers = s.plan.N_I;
    cfg.full_attention = s.model.full_attention;
    cfg.no_fusion = s.model.no_fusion;
    cfg.carry_features = s.model.carry_features;
    model = std::make_unique<Model>(cfg, Vocabulary::from_words(c1.vocab), RelationVocab(c1.relations), seed);
    copy_parameters(c1, *model, {nk::Group::encoder, nk::Group::base});
    log = train_stage2(*model, s.plan, corpus.train, corpus.dev, print_epoch);
  }
  Checkpoint ckpt = capture(*model);
  ckpt.stage = stage;
  ckpt.step = log.steps;
  ckpt.dev_f1 = log.best_dev_f1;
  std::ostringstream rng;
  rng << std::mt19937_64(seed);
  ckpt.rng_state = rng.str();
  save_checkpoint(ckpt, out);
  std::printf("best epoch %zu  dev_f1 %.6f  -> %s\n", log.best_epoch, log.best_dev_f1, out.c_str());

  if (!log_file.empty()) {
    std::ofstream f(log_file);
    f << "step\tloss\n";
    for (std::size_t i = 0; i < log.step_losses.size(); ++i) f << i + 1 << '\t' << log.step_losses[i] << '\n';
    if (!log.noise_rates.empty()) {
      f << "\nbatch_rate\n";
      for (double r : log.noise_rates) f << r << '\n';
    }
  }
  return 0;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& data, const std::string& split, const std::string& train_file,
             int k, const fs::path& history) {
  if (k < 0) throw std::invalid_argument("--k must be non-negative");
  auto model = restore_model(load_checkpoint(ckpt_path));
  Split sp = load_split(data, split, train_file);
  EvalResult r = evaluate(*model, sp.docs, static_cast<std::size_t>(k), build_train_fact_set(sp.train), sp.conclusions);
  std::cout << format_metric_report(r.per_k.back());
  if (!sp.conclusions.empty()) std::printf("conclusion_infer_f1=%.17g\n", r.conclusion_per_k.back().f1);
  if (!history.empty()) write_text_file(history, format_history(r));
  return 0;
}

int cmd_predict(const fs::path& ckpt_path, const fs::path& data, const std::string& split, int k, const fs::path& out) {
  if (k < 0) throw std::invalid_argument("--k must be non-negative");
  auto model = restore_model(load_checkpoint(ckpt_path));
  Split sp = load_split(data, split, "");
  const auto preds = predict(*model, sp.docs, static_cast<std::size_t>(k));
  export_submission(preds, out);
  std::printf("%zu predictions -> %s\n", preds.size(), out.c_str());
  return 0;
}

// Averages per-iteration histories (one file per run) column by column.
int cmd_report(const std::vector<std::string>& inputs, const fs::path& out) {
  std::vector<std::string> header;
  std::vector<std::vector<double>> sums;
  for (const auto& path : inputs) {
    std::istringstream in(read_text_file(path));
    std::string line;
    std::vector<std::string> cols;
    std::size_t row = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> cells;
      std::stringstream ls(line);
      for (std::string c; std::getline(ls, c, '\t');) cells.push_back(c);
      if (cols.empty()) {
        cols = cells;
        if (header.empty()) header = cols;
        if (cols != header) throw DataError("history '" + path + "' has different columns");
        continue;
      }
      if (sums.size() <= row) sums.emplace_back(header.size(), 0.0);
      for (std::size_t i = 0; i < cells.size() && i < header.size(); ++i) sums[row][i] += std::stod(cells[i]);
      ++row;
    }
  }
  if (header.empty()) throw DataError("no history rows to report");
  std::ostringstream table;
  for (std::size_t i = 0; i < header.size(); ++i) table << (i ? "\t" : "") << header[i];
  table << '\n';
  const double runs = static_cast<double>(inputs.size());
  for (const auto& row : sums) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, i == 0 ? "%.0f" : "%.6f", row[i] / runs);
      table << (i ? "\t" : "") << buf;
    }
    table << '\n';
  }
  std::cout << table.str();
  if (!out.empty()) write_text_file(out, table.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Document-level relation extraction with iterative pair-matrix inference"};
  app.require_subcommand(1);

  SettingFlags gen_flags, train_flags;
  std::string out, data, init, ckpt, split = "dev", train_file, history, log_file;
  std::uint64_t seed = 0;
  int stage = 1, k = 3;
  std::vector<std::string> inputs;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  gen->add_option("--out", out, "output directory")->required();
  gen->add_option("--seed", seed, "generator seed")->required();
  gen_flags.attach(gen);

  auto* train = app.add_subcommand("train", "Run one training stage");
  train->add_option("--stage", stage)->required()->check(CLI::IsMember({1, 2}));
  train->add_option("--seed", seed)->required();
  train->add_option("--data", data, "corpus directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--init", init, "stage-1 checkpoint (stage 2)")->check(CLI::ExistingFile);
  train->add_option("--out", out, "checkpoint to write")->required();
  train->add_option("--log", log_file, "per-step loss log");
  train_flags.attach(train);

  auto* eval = app.add_subcommand("eval", "Score a checkpoint after K refinement rounds");
  eval->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "corpus directory or DocRED file")->required()->check(CLI::ExistingPath);
  eval->add_option("--split", split, "train, dev or test (corpus directories)");
  eval->add_option("--train-facts", train_file, "training file for Ign F1");
  eval->add_option("--k", k);
  eval->add_option("--history", history, "write the per-iteration table here");

  auto* pred = app.add_subcommand("predict", "Write a submission file");
  pred->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  pred->add_option("--data", data)->required()->check(CLI::ExistingPath);
  pred->add_option("--split", split);
  pred->add_option("--k", k);
  pred->add_option("--out", out)->required();

  auto* report = app.add_subcommand("report", "Average per-iteration histories");
  report->add_option("histories", inputs)->required()->check(CLI::ExistingFile);
  report->add_option("--out", out, "write the table here");

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return cmd_gen_data(out, gen_flags, seed);
    if (train->parsed()) return cmd_train(stage, seed, data, init, out, log_file, train_flags);
    if (eval->parsed()) return cmd_eval(ckpt, data, split, train_file, k, history);
    if (pred->parsed()) return cmd_predict(ckpt, data, split, k, out);
    if (report->parsed()) return cmd_report(inputs, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
