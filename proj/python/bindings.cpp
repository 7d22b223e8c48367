#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cirfuse/calibration.hpp"
#include "cirfuse/cli.hpp"
#include "cirfuse/error.hpp"
#include "cirfuse/evaluation.hpp"
#include "cirfuse/projection.hpp"
#include "cirfuse/query_expansion.hpp"
#include "cirfuse/scoring.hpp"

namespace py = pybind11;
using namespace cirfuse;

namespace {

EmbeddingSet make_set(const std::string& modality, std::vector<std::string> ids,
                      const Eigen::Ref<const EmbeddingSet::RowMatrix>& rows) {
  return EmbeddingSet(parse_modality(modality), static_cast<std::size_t>(rows.cols()), std::move(ids),
                      EmbeddingSet::RowMatrix(rows));
}

py::tuple run_cli_captured(const std::vector<std::string>& args) {
  std::ostringstream log, err;
  const int code = run_cli(args, log, err);
  return py::make_tuple(code, log.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_cirfuse, m) {
  m.doc() = "Composed image retrieval by late fusion of refined similarities";

  // Raised instances carry the error code name in `.code`.
  static py::exception<Error> error(m, "CirfuseError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string code(error_code_name(e.code()));
      py::object inst = py::reinterpret_borrow<py::object>(error.ptr())(code + ": " + e.what());
      inst.attr("code") = code;
      PyErr_SetObject(error.ptr(), inst.ptr());
    }
  });

  py::class_<EmbeddingSet>(m, "EmbeddingSet")
      .def(py::init(&make_set), py::arg("modality"), py::arg("ids"), py::arg("rows"))
      .def_property_readonly("dim", &EmbeddingSet::dim)
      .def_property_readonly("ids", &EmbeddingSet::ids)
      .def_property_readonly("modality", [](const EmbeddingSet& s) { return std::string(modality_name(s.modality())); })
      .def_property_readonly("matrix", [](const EmbeddingSet& s) { return EmbeddingSet::RowMatrix(s.matrix()); })
      .def("__len__", &EmbeddingSet::size)
      .def("lookup", &EmbeddingSet::lookup)
      .def("subset", &EmbeddingSet::subset);
  m.def("load_embedding_set", &load_embedding_set, py::arg("path"));
  m.def("save_embedding_set", &save_embedding_set, py::arg("set"), py::arg("path"));

  py::class_<CalibrationStats>(m, "CalibrationStats")
      .def(py::init<>())
      .def_readwrite("mu_image", &CalibrationStats::mu_image)
      .def_readwrite("mu_text", &CalibrationStats::mu_text)
      .def_readwrite("s_v_min", &CalibrationStats::s_v_min)
      .def_readwrite("s_t_min", &CalibrationStats::s_t_min)
      .def_readwrite("projected", &CalibrationStats::projected)
      .def_readwrite("projection_fingerprint", &CalibrationStats::projection_fingerprint);
  m.def("load_stats", &load_stats, py::arg("path"));
  m.def("save_stats", [](const CalibrationStats& s, const std::filesystem::path& p) { save_stats(s, p); },
        py::arg("stats"), py::arg("path"));
  m.def("compute_mean", &compute_mean, py::arg("set"));
  m.def(
      "compute_min_stats",
      [](const EmbeddingSet& images, const EmbeddingSet& texts, const Vector& mu_image, const Vector& mu_text,
         const ProjectionOperator* proj) {
        const auto mins = compute_min_stats(images, texts, mu_image, mu_text, proj);
        return py::make_tuple(mins.s_v_min, mins.s_t_min);
      },
      py::arg("images"), py::arg("texts"), py::arg("mu_image"), py::arg("mu_text"), py::arg("projection") = nullptr);

  py::class_<ProjectionOperator>(m, "ProjectionOperator")
      .def_readonly("basis", &ProjectionOperator::basis)
      .def_readonly("eigenvalues", &ProjectionOperator::eigenvalues)
      .def_readonly("alpha", &ProjectionOperator::alpha)
      .def_readonly("k_requested", &ProjectionOperator::k_requested)
      .def_readonly("k_effective", &ProjectionOperator::k_effective)
      .def_readonly("fingerprint", &ProjectionOperator::fingerprint);
  m.def(
      "build_projection",
      [](const EmbeddingSet& positive, std::optional<EmbeddingSet> negative, const Vector& mu_text, double alpha,
         int k) {
        const auto pos = CorpusEmbeddings::from_set(positive, Polarity::Positive);
        const auto neg = negative ? CorpusEmbeddings::from_set(*negative, Polarity::Negative) : CorpusEmbeddings{};
        return build_projection(build_contrastive_covariance(pos, neg, mu_text, alpha), k, alpha);
      },
      py::arg("positive"), py::arg("negative"), py::arg("mu_text"), py::arg("alpha") = 0.2, py::arg("k") = 250);
  m.def("project", &project, py::arg("centered"), py::arg("projection"));
  m.def("load_projection", &load_projection, py::arg("path"));
  m.def("save_projection", [](const ProjectionOperator& op, const std::filesystem::path& p) { save_projection(op, p); },
        py::arg("projection"), py::arg("path"));

  m.def("min_normalize", &min_normalize, py::arg("s"), py::arg("s_min"));
  m.def("harris_fuse", &harris_fuse, py::arg("s_v"), py::arg("s_t"), py::arg("lam") = 0.1);
  m.def(
      "fuse",
      [](double s_v, double s_t, const std::string& mode, double lam, double weight) {
        return fuse(s_v, s_t, {parse_fusion_mode(mode), lam, weight});
      },
      py::arg("s_v"), py::arg("s_t"), py::arg("mode") = "basic_harris", py::arg("lam") = 0.1, py::arg("weight") = 0.5);

  m.def(
      "expand_query",
      [](const Vector& q, const EmbeddingSet& db, const Vector& mu, std::size_t k, double beta) {
        const auto r = expand_query(q, db, mu, nullptr, {k, beta});
        return py::make_tuple(r.query, r.neighbors, r.weights);
      },
      py::arg("q_centered"), py::arg("database"), py::arg("mu_image"), py::arg("k_neighbors") = 10,
      py::arg("beta") = 0.1);

  py::class_<ScoredItem>(m, "ScoredItem")
      .def_readonly("id", &ScoredItem::id)
      .def_readonly("s_v", &ScoredItem::s_v)
      .def_readonly("s_t", &ScoredItem::s_t)
      .def_readonly("s_v_norm", &ScoredItem::s_v_norm)
      .def_readonly("s_t_norm", &ScoredItem::s_t_norm)
      .def_readonly("fused", &ScoredItem::fused);

  m.def(
      "rank",
      [](const Vector& q_image, const Vector& q_text_centered, const EmbeddingSet& database,
         std::optional<CalibrationStats> stats, std::optional<ProjectionOperator> projection,
         const std::string& fusion, double lam, double weight, bool centering, bool min_norm, bool harris,
         bool expand, std::size_t k_neighbors, double beta) {
        EngineConfig cfg;
        cfg.toggles = {centering, min_norm, harris, false, projection.has_value(), expand};
        cfg.harris_lambda = lam;
        cfg.k_neighbors = k_neighbors;
        cfg.beta = beta;
        const Engine engine(cfg, std::move(stats), std::move(projection));
        return engine.rank(engine.make_query(q_image, q_text_centered, database), database,
                           {parse_fusion_mode(fusion), lam, weight});
      },
      py::arg("q_image"), py::arg("q_text_centered"), py::arg("database"), py::arg("stats") = py::none(),
      py::arg("projection") = py::none(), py::arg("fusion") = "basic_harris", py::arg("lam") = 0.1,
      py::arg("weight") = 0.5, py::arg("centering") = true, py::arg("min_norm") = true, py::arg("harris") = true,
      py::arg("expand") = false, py::arg("k_neighbors") = 10, py::arg("beta") = 0.1);

  m.def(
      "average_precision",
      [](const std::vector<std::string>& ranked, const std::vector<std::string>& positives) {
        return average_precision(ranked, IdSet(positives.begin(), positives.end()));
      },
      py::arg("ranked"), py::arg("positives"));
  m.def(
      "recall_at_k",
      [](const std::vector<std::string>& ranked, const std::vector<std::string>& positives, std::size_t k,
         bool hit_rate) {
        return recall_at_k(ranked, IdSet(positives.begin(), positives.end()), k,
                           hit_rate ? RecallConvention::HitRate : RecallConvention::Fraction);
      },
      py::arg("ranked"), py::arg("positives"), py::arg("k"), py::arg("hit_rate") = false);
  m.def(
      "map_at_k",
      [](const std::vector<std::string>& ranked, const std::vector<std::string>& positives, std::size_t k) {
        return map_at_k(ranked, IdSet(positives.begin(), positives.end()), k);
      },
      py::arg("ranked"), py::arg("positives"), py::arg("k"));

  m.def("run_cli", &run_cli_captured, py::arg("args"),
        "Runs a cirfuse subcommand; returns (exit_code, log, err).");
}
