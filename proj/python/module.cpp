#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "sevrank/cli.hpp"
#include "sevrank/corpus.hpp"
#include "sevrank/embedding.hpp"
#include "sevrank/eval.hpp"
#include "sevrank/metrics.hpp"
#include "sevrank/siamese.hpp"
#include "sevrank/synthetic.hpp"

namespace py = pybind11;
using namespace sevrank;

namespace {

std::vector<Severity> to_labels(const std::vector<int>& v) {
  std::vector<Severity> out;
  out.reserve(v.size());
  for (int x : v) out.push_back(severity_from_int(x));
  return out;
}

Severity severity_arg(int v) { return severity_from_int(v); }

py::tuple cli_run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"sevrank"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

class Model {
 public:
  explicit Model(const std::string& path)
      : model_(SiameseModel::load(path)), inputs_(make_provider(model_.info().provider_spec), model_.info().caps) {}

  py::dict info() const {
    const ModelInfo& i = model_.info();
    py::dict d;
    d["aspect"] = std::string(aspect_name(i.aspect));
    d["architecture"] = std::string(architecture_name(i.backbone.architecture));
    d["embeddings"] = i.provider_spec;
    d["multitask"] = i.multitask;
    d["best_dev_macro_f1"] = i.best_dev_macro_f1;
    d["best_epoch"] = i.best_epoch;
    d["config_hash"] = i.config_hash();
    return d;
  }

  py::tuple predict(const std::vector<std::string>& lines) {
    const ScriptDocument doc = make_document("query", "", lines);
    const SeverityPrediction p = predict_severity(model_, inputs_, doc);
    return py::make_tuple(std::string(severity_name(p.label)), p.probabilities);
  }

  py::tuple compare(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const Comparison c =
        sevrank::compare(model_, inputs_, make_document("left", "", a), make_document("right", "", b));
    return py::make_tuple(std::string(rank_name(c.label)), c.probabilities);
  }

 private:
  SiameseModel model_;
  InputCache inputs_;
};

}  // namespace

PYBIND11_MODULE(sevrank, m) {
  m.doc() = "Ordinal severity prediction for movie dialogue scripts";

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
  py::register_exception<UnsupportedOperation>(m, "UnsupportedOperation", PyExc_RuntimeError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  m.attr("SEVERITIES") = py::make_tuple("None", "Mild", "Moderate", "Severe");

  m.def("run", &cli_run, py::arg("args"), "Run a CLI command; returns (exit_code, stdout, stderr).");

  m.def(
      "macro_f1",
      [](const std::vector<int>& gold, const std::vector<int>& pred) {
        return macro_f1(to_labels(gold), to_labels(pred));
      },
      py::arg("gold"), py::arg("pred"));
  m.def(
      "confusion",
      [](const std::vector<int>& gold, const std::vector<int>& pred) {
        return confusion(to_labels(gold), to_labels(pred));
      },
      py::arg("gold"), py::arg("pred"));
  m.def(
      "cpr", [](int a, int b) { return std::string(rank_name(cpr(severity_arg(a), severity_arg(b)))); },
      py::arg("a"), py::arg("b"));
  m.def(
      "staircase", [](std::size_t count) { return to_int(staircase(count)); }, py::arg("marker_count"));
  m.def(
      "significance_test",
      [](const std::vector<int>& gold, const std::vector<int>& a, const std::vector<int>& b, int iterations,
         std::uint64_t seed, bool one_sided) {
        return significance_test(to_labels(gold), to_labels(a), to_labels(b), iterations, seed,
                                 one_sided ? Alternative::Greater : Alternative::TwoSided);
      },
      py::arg("gold"), py::arg("pred_a"), py::arg("pred_b"), py::arg("iterations") = 10000, py::arg("seed") = 0,
      py::arg("one_sided") = false);
  m.def(
      "split_sizes",
      [](const std::vector<int>& labels, std::uint64_t seed) {
        AspectDataset ds;
        ds.aspect = Aspect::Sex;
        for (std::size_t i = 0; i < labels.size(); ++i) {
          const std::string id = "i" + std::to_string(i);
          ds.instances.push_back(
              {std::make_shared<const ScriptDocument>(make_document(id, id, {"x"})), ds.aspect,
               severity_from_int(labels[i]), 5});
        }
        const AspectDataset split = stratified_split(ds, {}, seed);
        py::dict d;
        for (SplitPart p : {SplitPart::Train, SplitPart::Dev, SplitPart::Test}) {
          d[py::str(std::string(split_part_name(p)))] = split.part(p).size();
        }
        return d;
      },
      py::arg("labels"), py::arg("seed") = 0);

  py::class_<Model>(m, "Model")
      .def(py::init<const std::string&>(), py::arg("path"))
      .def("info", &Model::info)
      .def("predict", &Model::predict, py::arg("lines"), "(label, probabilities) for one script")
      .def("compare", &Model::compare, py::arg("a"), py::arg("b"), "(LOWER|EQUAL|HIGHER, probabilities)");
}
