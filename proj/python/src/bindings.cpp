#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "kimm/congruence.hpp"
#include "kimm/embedding_io.hpp"
#include "kimm/error.hpp"
#include "kimm/fusion.hpp"
#include "kimm/kg_store.hpp"
#include "kimm/kge.hpp"
#include "kimm/metrics.hpp"
#include "kimm/pipeline.hpp"
#include "kimm/retrieval.hpp"

namespace py = pybind11;
using namespace kimm;

namespace {

py::dict stats_dict(const CongruenceStats& s) {
  py::dict d;
  d["centroid_distance"] = s.centroid_distance;
  d["mean_pairwise_cosine"] = s.mean_pairwise_cosine;
  d["pair_cosines"] = s.pair_cosines;
  d["histogram_edges"] = s.cosine_histogram.edges;
  d["histogram_counts"] = s.cosine_histogram.counts;
  return d;
}

py::dict report_dict(const CongruenceReport& r) {
  py::dict d;
  d["n"] = r.n;
  d["without_knowledge"] = stats_dict(r.without_knowledge);
  d["with_knowledge"] = r.with_knowledge ? py::object(stats_dict(*r.with_knowledge)) : py::none();
  d["relative_similarity_change"] = r.relative_similarity_change ? py::object(py::float_(*r.relative_similarity_change))
                                                                 : py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Knowledge graph embeddings, concept retrieval, knowledge fusion and evaluation metrics";

  // FormatError and its subclasses derive from ValidationError and map to it.
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<KnowledgeGraph>(m, "KnowledgeGraph")
      .def_static("from_rows", &KnowledgeGraph::from_labels, py::arg("rows"))
      .def_static(
          "load", [](const std::filesystem::path& p, const std::string& fmt) { return load_triples(p, parse_triple_format(fmt)); },
          py::arg("path"), py::arg("format") = "tsv")
      .def_static(
          "parse", [](const std::string& text, const std::string& fmt) { return parse_triples(text, parse_triple_format(fmt)); },
          py::arg("text"), py::arg("format") = "tsv")
      .def_property_readonly("num_entities", &KnowledgeGraph::num_entities)
      .def_property_readonly("num_relations", &KnowledgeGraph::num_relations)
      .def_property_readonly("duplicates_dropped", &KnowledgeGraph::duplicates_dropped)
      .def_property_readonly("entities", [](const KnowledgeGraph& g) { return g.entities().labels(); })
      .def_property_readonly("relations", [](const KnowledgeGraph& g) { return g.relations().labels(); })
      .def("triples",
           [](const KnowledgeGraph& g) {
             std::vector<std::array<std::uint32_t, 3>> out;
             for (const auto& t : g.triples()) out.push_back({t.head, t.relation, t.tail});
             return out;
           })
      .def("__len__", [](const KnowledgeGraph& g) { return g.triples().size(); });

  py::class_<KgeTrainConfig>(m, "KgeConfig")
      .def(py::init([](const std::string& kind, std::size_t dim, double lr, double margin, std::size_t epochs,
                       std::size_t negatives, std::uint64_t seed, const std::string& norm) {
             KgeTrainConfig c;
             c.kind = parse_kge_kind(kind);
             c.dim = dim;
             c.learning_rate = lr;
             c.margin = margin;
             c.epochs = epochs;
             c.negatives_per_positive = negatives;
             c.seed = seed;
             c.norm = parse_norm(norm);
             c.validate();
             return c;
           }),
           py::arg("kind") = "transe", py::arg("dim") = 256, py::arg("learning_rate") = 0.001, py::arg("margin") = 1.0,
           py::arg("epochs") = 100, py::arg("negatives_per_positive") = 1, py::arg("seed") = 0, py::arg("norm") = "l2")
      .def_property_readonly("kind", [](const KgeTrainConfig& c) { return to_string(c.kind); })
      .def_readonly("dim", &KgeTrainConfig::dim)
      .def_readonly("epochs", &KgeTrainConfig::epochs)
      .def_readonly("seed", &KgeTrainConfig::seed);

  m.def(
      "train_kge",
      [](const KnowledgeGraph& kg, const KgeTrainConfig& cfg, const std::vector<std::array<std::string, 3>>& heldout) {
        std::vector<Triple> held;
        for (const auto& [h, r, t] : heldout) held.push_back(kg.resolve(h, r, t));
        std::vector<Triple> training;
        for (const auto& t : kg.triples())
          if (std::find(held.begin(), held.end(), t) == held.end()) training.push_back(t);
        KgeTrainResult res;
        {
          py::gil_scoped_release release;
          res = train(kg.with_triples(training), cfg);
        }
        py::dict d;
        d["entity"] = res.model.entity;
        d["relation"] = res.model.relation;
        d["loss"] = res.loss_trace;
        if (!held.empty()) {
          const auto lp = link_predict_eval(res.model, kg, held);
          d["mean_rank"] = lp.mean_rank;
          d["hits"] = lp.hits_at;
        }
        return d;
      },
      py::arg("graph"), py::arg("config"), py::arg("heldout") = std::vector<std::array<std::string, 3>>{},
      "Trains on every triple not listed in `heldout` and evaluates filtered link prediction on the rest.");

  py::class_<EmbeddingStore>(m, "EmbeddingStore")
      .def(py::init([](const std::vector<std::string>& names, const RowMatrixXf& vectors, const std::string& kind) {
             return EmbeddingStore(static_cast<std::size_t>(vectors.cols()), names, vectors, kind);
           }),
           py::arg("names"), py::arg("vectors"), py::arg("kind") = "concept")
      .def_property_readonly("dim", &EmbeddingStore::dim)
      .def_property_readonly("names", &EmbeddingStore::names)
      .def_property_readonly("kind", &EmbeddingStore::kind_tag)
      .def_property_readonly("vectors", [](const EmbeddingStore& s) { return RowMatrixXf(s.vectors()); })
      .def("__len__", &EmbeddingStore::size)
      .def("__eq__", [](const EmbeddingStore& a, const EmbeddingStore& b) { return a == b; })
      .def("to_bytes", [](const EmbeddingStore& s) { return py::bytes(encode_store(s)); })
      .def_static("from_bytes", [](const py::bytes& b) { return decode_store(std::string(b)); });

  m.def("read_store", [](const std::filesystem::path& p) { return read_store(p); }, py::arg("path"));
  m.def("write_store", &write_store, py::arg("store"), py::arg("path"));

  py::class_<ConceptIndex>(m, "ConceptIndex")
      .def(py::init<EmbeddingStore>(), py::arg("store"))
      .def_property_readonly("dim", &ConceptIndex::dim)
      .def(
          "top_k",
          [](const ConceptIndex& idx, const VectorXd& q, std::size_t k) {
            std::vector<std::pair<std::string, double>> out;
            for (const auto& c : idx.top_k(q, k)) out.emplace_back(c.name, c.score);
            return out;
          },
          py::arg("query"), py::arg("k") = 10)
      .def(
          "retrieve",
          [](const ConceptIndex& idx, const VectorXd& text, const VectorXd& caption, std::size_t k) {
            return retrieve_for_record(idx, text, caption, k);
          },
          py::arg("text"), py::arg("caption"), py::arg("k") = 10);

  m.def(
      "classify_metrics",
      [](const std::vector<int>& labels, const std::vector<int>& predictions, std::optional<std::vector<double>> scores) {
        const auto r = scores ? evaluate_binary(labels, predictions, *scores) : classify_metrics(labels, predictions);
        py::dict d;
        d["precision"] = r.precision;
        d["recall"] = r.recall;
        d["f1"] = r.f1;
        d["accuracy"] = r.accuracy;
        d["auc"] = scores ? py::object(py::float_(r.auc)) : py::none();
        d["tp"] = r.confusion.tp;
        d["fp"] = r.confusion.fp;
        d["tn"] = r.confusion.tn;
        d["fn"] = r.confusion.fn;
        return d;
      },
      py::arg("labels"), py::arg("predictions"), py::arg("scores") = py::none());
  m.def(
      "auc", [](const std::vector<int>& labels, const std::vector<double>& scores) { return auc(labels, scores); },
      py::arg("labels"), py::arg("scores"));

  m.def(
      "congruence_report",
      [](const RowMatrixXd& text, const RowMatrixXd& image, std::optional<std::vector<RowMatrixXd>> knowledge,
         std::size_t bins) {
        ModalityPairSet p{text, image, std::move(knowledge)};
        return report_dict(report(p, bins));
      },
      py::arg("text"), py::arg("image"), py::arg("knowledge") = py::none(), py::arg("bins") = 20);
  m.def(
      "synth_midpoint_pairs",
      [](std::size_t n, std::size_t dim, std::size_t k, std::uint64_t seed) {
        auto p = synth_midpoint_pairs(n, dim, k, seed);
        return py::make_tuple(p.text, p.image, *p.knowledge);
      },
      py::arg("n"), py::arg("dim"), py::arg("k"), py::arg("seed"));

  py::class_<FusionNet>(m, "FusionNet")
      .def_readonly("multimodal_dim", &FusionNet::multimodal_dim)
      .def_readonly("knowledge_dim", &FusionNet::knowledge_dim)
      .def_readonly("d_model", &FusionNet::d_model)
      .def_readonly("num_heads", &FusionNet::num_heads)
      .def_property_readonly("num_parameters", &FusionNet::num_parameters);
  m.def("read_checkpoint", &read_checkpoint, py::arg("path"));
  m.def(
      "fusion_predict",
      [](const FusionNet& net, const RowVectorXd& multimodal, const RowMatrixXd& knowledge, bool use_knowledge) {
        const RowVectorXd logits = forward(net, multimodal, knowledge, use_knowledge).logits;
        const RowVectorXd p = softmax(logits);
        return py::make_tuple(logits[1] > logits[0] ? 1 : 0, std::array<double, 2>{p[0], p[1]});
      },
      py::arg("net"), py::arg("multimodal"), py::arg("knowledge"), py::arg("use_knowledge") = true,
      "Returns (label, [p_unsuccessful, p_successful]).");

  m.def(
      "run_command",
      [](const std::string& command, const std::string& config_json) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(config_json);
        } catch (const nlohmann::json::parse_error& e) {
          throw ValidationError(std::string("config: ") + e.what());
        }
        const auto cfg = pipeline_config_from_json(j);
        std::ostringstream log;
        py::gil_scoped_release release;
        if (command == "train-kge") cmd_train_kge(cfg, log);
        else if (command == "retrieve") cmd_retrieve(cfg, log);
        else if (command == "train-fusion") cmd_train_fusion(cfg, log);
        else if (command == "predict") cmd_predict(cfg, log);
        else if (command == "congruence") cmd_congruence(cfg, log);
        else if (command == "synth") cmd_synth(cfg, log);
        else throw ValidationError("unknown command: " + command);
        return log.str();
      },
      py::arg("command"), py::arg("config_json"),
      "Runs a pipeline command with a JSON config (same keys as the CLI --config file) and returns its log.");
}
