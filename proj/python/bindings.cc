#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gner/crf.h"
#include "gner/embeddings.h"
#include "gner/evaluation.h"
#include "gner/fasttext_bin.h"
#include "gner/json_io.h"
#include "gner/model.h"
#include "gner/service.h"
#include "gner/training.h"

namespace py = pybind11;
using namespace gner;

namespace {

using Labels = std::vector<std::vector<std::string>>;

Tensor ToTensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::dict ReportDict(const EvalReport& r) {
  py::dict per_class;
  for (const auto& [cls, c] : r.per_class) {
    per_class[py::str(cls)] = py::dict(py::arg("tp") = c.tp, py::arg("fp") = c.fp,
                                       py::arg("fn") = c.fn, py::arg("f1") = c.f1());
  }
  return py::dict(py::arg("precision") = r.precision, py::arg("recall") = r.recall,
                  py::arg("f1") = r.f1, py::arg("tp") = r.overall.tp,
                  py::arg("fp") = r.overall.fp, py::arg("fn") = r.overall.fn,
                  py::arg("sentences") = r.sentences, py::arg("per_class") = per_class);
}

py::dict SentenceDict(const Sentence& s) {
  return py::dict(py::arg("tokens") = s.Texts(), py::arg("outer") = s.outer_labels,
                  py::arg("inner") = s.inner_labels);
}

std::vector<Sentence> ReadCorpus(const std::string& path, const std::string& format) {
  if (format == "germeval") return ParseGermEval(path);
  if (format == "conll") {
    auto s = ParseConll03(path);
    ConvertIobToBio(s);
    return s;
  }
  throw Error("unknown format: " + format);
}

struct PyModel {
  std::shared_ptr<NerModel> model;
};

}  // namespace

PYBIND11_MODULE(_gner, m) {
  m.doc() = "German NER with a BiLSTM-CRF";
  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  m.def("fasttext_hash", [](const std::string& s) { return FastTextHash(s); });
  m.def("char_ngrams", [](const std::string& w, int min_n, int max_n) {
    return ExtractCharNgrams(w, min_n, max_n);
  }, py::arg("word"), py::arg("min_n") = 3, py::arg("max_n") = 6);
  m.def("casing", [](const std::string& t) { return std::string(CasingName(ClassifyCasing(t))); });
  m.def("iob_to_bio", [](const std::vector<std::string>& l) { return IobToBio(l); });
  m.def("map_label_combined", [](const std::string& l) { return MapLabelCombined(l); });

  m.def("extract_chunks", [](const std::vector<std::string>& labels, bool strict) {
    std::vector<std::tuple<std::string, size_t, size_t>> out;
    auto mode = strict ? StrayInside::kStrict : StrayInside::kLenient;
    for (const auto& c : ExtractChunks(labels, Level::kOuter, mode)) {
      out.emplace_back(c.entity_class, c.start, c.end);
    }
    return out;
  }, py::arg("labels"), py::arg("strict") = false);

  m.def("evaluate", [](const Labels& gold, const Labels& pred, bool strict) {
    return ReportDict(EvaluateLabels(gold, pred, strict ? StrayInside::kStrict : StrayInside::kLenient));
  }, py::arg("gold"), py::arg("pred"), py::arg("strict") = false);
  m.def("evaluate_combined", [](const Labels& go, const Labels& gi, const Labels& po,
                                const Labels& pi, bool average) {
    return ReportDict(GermEvalCombined(go, gi, po, pi,
                                       average ? CombineMode::kAverageF1 : CombineMode::kMicroPooled));
  }, py::arg("gold_outer"), py::arg("gold_inner"), py::arg("pred_outer"),
     py::arg("pred_inner"), py::arg("average") = false);

  m.def("read_corpus", [](const std::string& path, const std::string& format) {
    py::list out;
    for (const auto& s : ReadCorpus(path, format)) out.append(SentenceDict(s));
    return out;
  }, py::arg("path"), py::arg("format") = "germeval");

  // transitions [L x L], start [L], end [L], emissions [T x L].
  m.def("crf_log_partition", [](py::array_t<double> tr, py::array_t<double> st,
                                py::array_t<double> en, py::array_t<double> em) {
    Tensor t = ToTensor(tr), s = ToTensor(st), e = ToTensor(en), x = ToTensor(em);
    return LogPartition(CrfScores{t, s, e}, x);
  });
  m.def("crf_viterbi", [](py::array_t<double> tr, py::array_t<double> st,
                          py::array_t<double> en, py::array_t<double> em) {
    Tensor t = ToTensor(tr), s = ToTensor(st), e = ToTensor(en), x = ToTensor(em);
    auto r = ViterbiDecode(CrfScores{t, s, e}, x);
    return py::make_tuple(r.path, r.score);
  });

  py::class_<EmbeddingStore, std::shared_ptr<EmbeddingStore>>(m, "EmbeddingStore")
      .def_static("load", [](const std::string& path, const std::string& kind) {
        return std::make_shared<EmbeddingStore>(EmbeddingStore::Load(path, EmbeddingKindFromName(kind)));
      }, py::arg("path"), py::arg("kind") = "fasttext")
      .def("lookup", [](const EmbeddingStore& s, const std::string& w) {
        auto r = s.Lookup(w);
        return py::make_tuple(r.vector, r.was_oov);
      })
      .def("__contains__", [](const EmbeddingStore& s, const std::string& w) { return s.Contains(w); })
      .def_property_readonly("dim", &EmbeddingStore::dim)
      .def_property_readonly("word_count", &EmbeddingStore::word_count);

  m.def("convert_fasttext_bin", [](const std::string& in, const std::string& out) {
    auto info = ConvertFastTextBin(in, out);
    return py::dict(py::arg("dim") = info.dim, py::arg("words") = info.words,
                    py::arg("buckets") = info.buckets, py::arg("min_n") = info.min_n,
                    py::arg("max_n") = info.max_n);
  });

  py::class_<PyModel>(m, "Model")
      .def_static("load", [](const std::string& path) {
        return PyModel{std::make_shared<NerModel>(LoadModel(path))};
      })
      .def("save", [](const PyModel& p, const std::string& path) { SaveModel(*p.model, path); })
      .def_property_readonly("labels", [](const PyModel& p) { return p.model->schema().labels(); })
      .def_property_readonly("config_json", [](const PyModel& p) {
        return ModelConfigToJson(p.model->config()).dump();
      })
      .def("predict", [](const PyModel& p, const EmbeddingStore& store, const Labels& sentences) {
        std::vector<Sentence> ss;
        for (const auto& t : sentences) ss.push_back(Sentence::FromTexts(t));
        py::gil_scoped_release release;
        return PredictBatch(*p.model, store, ss);
      }, py::arg("store"), py::arg("sentences"))
      .def("evaluate", [](const PyModel& p, const EmbeddingStore& store, const std::string& path,
                          const std::string& format, const std::string& level) {
        auto data = ReadCorpus(path, format);
        return ReportDict(EvaluateModel(*p.model, store, data,
                                        level == "inner" ? Level::kInner : Level::kOuter));
      }, py::arg("store"), py::arg("path"), py::arg("format") = "germeval",
         py::arg("level") = "outer");

  // Configs are JSON strings in the same shape the CLI reads.
  m.def("train", [](const std::string& train_path, const std::string& dev_path,
                    const EmbeddingStore& store, const std::string& format,
                    const std::string& model_json, const std::string& train_json) {
    auto train = ReadCorpus(train_path, format);
    auto dev = ReadCorpus(dev_path, format);
    ModelConfig base;
    base.word_dim = store.dim();
    base.embedding_kind = store.kind();
    if (format == "conll") base.label_schema = LabelSchema::Conll();
    ModelConfig mc = ModelConfigFromJson(nlohmann::json::parse(model_json), base);
    TrainConfig tc = TrainConfigFromJson(nlohmann::json::parse(train_json), TrainConfig{});
    py::gil_scoped_release release;
    auto initial = NerModel::Build(mc, CharVocab::Build(train), tc.seed);
    auto result = TrainTwoStage(initial, train, dev, store, tc);
    return std::make_pair(PyModel{std::make_shared<NerModel>(std::move(result.model))},
                          result.report.ToJsonLines());
  }, py::arg("train_path"), py::arg("dev_path"), py::arg("store"),
     py::arg("format") = "germeval", py::arg("model_config") = "{}",
     py::arg("train_config") = "{}");
}
