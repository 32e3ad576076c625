#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pairinfer/checkpoint.hpp"
#include "pairinfer/config.hpp"
#include "pairinfer/docred.hpp"
#include "pairinfer/errors.hpp"
#include "pairinfer/metrics.hpp"
#include "pairinfer/synth.hpp"
#include "pairinfer/train.hpp"

namespace py = pybind11;
using namespace pairinfer;

namespace {

nk::Tensor from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  nk::Shape shape(a.shape(), a.shape() + a.ndim());
  return nk::Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_array(const nk::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  d["f1"] = r.f1;
  d["ign_f1"] = r.ign_f1;
  d["intra_f1"] = r.intra_f1;
  d["inter_f1"] = r.inter_f1;
  d["infer_f1"] = r.infer_f1;
  d["correct_in_train"] = r.correct_in_train;
  return d;
}

void apply_kwargs(Settings& s, const py::dict& kwargs) {
  for (auto item : kwargs) {
    std::string key = py::str(item.first);
    std::replace(key.begin(), key.end(), '_', '-');
    apply_setting(s, key, py::str(item.second));
  }
}

}  // namespace

PYBIND11_MODULE(_pairinfer, m) {
  m.doc() = "Document-level relation extraction with iterative pair-matrix inference";
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

  py::class_<RelationFact>(m, "RelationFact")
      .def_readonly("head", &RelationFact::head)
      .def_readonly("tail", &RelationFact::tail)
      .def_readonly("relation", &RelationFact::relation)
      .def_readonly("evidence", &RelationFact::evidence);

  py::class_<Document>(m, "Document")
      .def_readonly("doc_id", &Document::doc_id)
      .def_readonly("words", &Document::words)
      .def_readonly("gold_facts", &Document::gold_facts)
      .def_property_readonly("num_entities", [](const Document& d) { return d.entities.size(); })
      .def("mention_spans",
           [](const Document& d, std::size_t e) {
             std::vector<std::pair<std::size_t, std::size_t>> out;
             for (const auto& mm : d.entities.at(e).mentions) out.emplace_back(mm.span.start, mm.span.end);
             return out;
           })
      .def("intra_sentence", &Document::intra_sentence);

  py::class_<Prediction>(m, "Prediction")
      .def(py::init<std::string, std::size_t, std::size_t, std::string>(), py::arg("title"), py::arg("h"),
           py::arg("t"), py::arg("relation"))
      .def_readonly("title", &Prediction::title)
      .def_readonly("h", &Prediction::h)
      .def_readonly("t", &Prediction::t)
      .def_readonly("relation", &Prediction::relation)
      .def("__eq__", [](const Prediction& a, const Prediction& b) { return a == b; })
      .def("__repr__", [](const Prediction& p) {
        return "Prediction(" + p.title + ", " + std::to_string(p.h) + ", " + std::to_string(p.t) + ", " +
               p.relation + ")";
      });

  m.def("parse_docred", &parse_docred, py::arg("json_text"));
  m.def("load_docred", &load_docred, py::arg("path"));
  m.def("dump_docred", &dump_docred, py::arg("docs"));
  m.def("export_submission", &export_submission, py::arg("predictions"), py::arg("path"));
  m.def("import_submission", &import_submission, py::arg("path"));

  py::class_<SynthCorpus>(m, "SynthCorpus")
      .def_readonly("train", &SynthCorpus::train)
      .def_readonly("dev", &SynthCorpus::dev)
      .def_readonly("test", &SynthCorpus::test)
      .def_readonly("relations", &SynthCorpus::relations)
      .def_property_readonly("conclusions", [](const SynthCorpus& c) { return conclusion_relations(c.rules); });

  m.def(
      "generate_synthetic",
      [](std::uint64_t seed, const py::kwargs& kwargs) {
        Settings s;
        apply_kwargs(s, kwargs);
        s.synth.seed = seed;
        return generate_synthetic(s.synth);
      },
      py::arg("seed"), "Synthetic corpus; keyword arguments are synthetic-data settings such as num_train.");
  m.def("save_corpus", &save_corpus, py::arg("corpus"), py::arg("dir"));
  m.def("load_corpus", &load_corpus, py::arg("dir"));

  m.def(
      "f1_scores",
      [](const std::vector<Prediction>& preds, const std::vector<Document>& gold, const std::vector<Document>& train,
         const std::vector<std::string>& relations) {
        return report_dict(f1_scores(preds, gold, build_train_fact_set(train), RelationVocab(relations)));
      },
      py::arg("predictions"), py::arg("gold"), py::arg("train"), py::arg("relations"));
  m.def(
      "infer_f1",
      [](const std::vector<Prediction>& preds, const std::vector<Document>& gold,
         std::optional<std::set<std::string>> only) {
        InferScore s = infer_f1(preds, gold, only ? &*only : nullptr);
        return py::make_tuple(s.f1, s.in_scope);
      },
      py::arg("predictions"), py::arg("gold"), py::arg("relations") = py::none());

  m.def(
      "atl_loss",
      [](const py::array_t<double>& logits, const std::vector<std::vector<int>>& positives) {
        return atl_loss(from_array(logits), LabelSet{positives}).item();
      },
      py::arg("logits"), py::arg("positives"), "Adaptive-threshold loss; column 0 is the threshold class.");
  m.def("decide_relations", [](const std::vector<double>& logits) { return decide_relations(logits); });
  m.def(
      "eca_mask",
      [](std::size_t n, bool full) {
        EcaMask mask = EcaMask::build(n, full);
        const std::size_t c = n * n;
        py::array_t<bool> out({kEcaHeads, c, c});
        auto* p = out.mutable_data();
        for (std::size_t h = 0; h < kEcaHeads; ++h)
          for (std::size_t i = 0; i < c * c; ++i) p[h * c * c + i] = mask.heads[h][i] != 0;
        return out;
      },
      py::arg("n"), py::arg("full_attention") = false);

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::vector<Document>& train, const std::vector<std::string>& relations,
                       std::uint64_t seed, const py::kwargs& kwargs) {
             Settings s;
             apply_kwargs(s, kwargs);
             return std::make_unique<Model>(s.model, Vocabulary::build(train), RelationVocab(relations), seed);
           }),
           py::arg("train"), py::arg("relations"), py::arg("seed"))
      .def("history",
           [](const Model& model, const Document& d, std::size_t k) {
             std::vector<py::array_t<double>> out;
             for (const auto& t : model.predict_history(d, k)) out.push_back(to_array(t));
             return out;
           },
           py::arg("doc"), py::arg("k"), "Pair logits after 0..k refinement rounds.")
      .def("predict", [](const Model& model, const std::vector<Document>& docs,
                         std::size_t k) { return predict(model, docs, k); },
           py::arg("docs"), py::arg("k") = 3)
      .def("evaluate",
           [](const Model& model, const std::vector<Document>& docs, std::size_t k,
              const std::vector<Document>& train) {
             py::list out;
             for (const auto& r : evaluate(model, docs, k, build_train_fact_set(train)).per_k) out.append(report_dict(r));
             return out;
           },
           py::arg("docs"), py::arg("k"), py::arg("train"))
      .def("save", [](const Model& model, const std::filesystem::path& p) { save_checkpoint(capture(model), p); })
      .def_static("load", [](const std::filesystem::path& p) { return restore_model(load_checkpoint(p)); })
      .def_property_readonly("num_parameters", [](const Model& model) { return model.params().total_size(); });

  m.def(
      "train",
      [](Model& model, int stage, const std::vector<Document>& train, const std::vector<Document>& dev,
         std::uint64_t seed, const py::kwargs& kwargs) {
        Settings s = desk_settings(stage);
        apply_kwargs(s, kwargs);
        s.plan.seed = seed;
        TrainLog log;
        {
          py::gil_scoped_release release;
          log = stage == 1 ? train_stage1(model, s.plan, train, dev) : train_stage2(model, s.plan, train, dev);
        }
        py::dict d;
        d["step_losses"] = log.step_losses;
        d["noise_rates"] = log.noise_rates;
        d["best_epoch"] = log.best_epoch;
        d["best_dev_f1"] = log.best_dev_f1;
        return d;
      },
      py::arg("model"), py::arg("stage"), py::arg("train"), py::arg("dev"), py::arg("seed"),
      "Runs one training stage; keyword arguments are training settings such as epochs or base_lr.");
}
