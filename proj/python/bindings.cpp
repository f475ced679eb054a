#include <pybind11/eigen.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cssim/checkpoint.hpp"
#include "cssim/dataset.hpp"
#include "cssim/embedding_store.hpp"
#include "cssim/errors.hpp"
#include "cssim/evaluation.hpp"
#include "cssim/model.hpp"
#include "cssim/synthetic.hpp"
#include "cssim/training.hpp"

namespace py = pybind11;
using namespace cssim;

PYBIND11_MODULE(_cssim, m) {
  m.doc() = "Context-sensitive similarity models over image embeddings";

  auto error = py::register_exception<Error>(m, "Error");
  py::register_exception<FormatError>(m, "FormatError", error);
  py::register_exception<CorruptionError>(m, "CorruptionError", error);
  py::register_exception<ValidationError>(m, "ValidationError", error);
  py::register_exception<DegenerateError>(m, "DegenerateError", error);
  py::register_exception<LookupError>(m, "LookupError", error);
  py::register_exception<IoError>(m, "IoError", error);
  py::register_exception<DivergenceError>(m, "DivergenceError", error);

  py::enum_<Split>(m, "Split")
      .value("train", Split::kTrain)
      .value("val", Split::kVal)
      .value("test", Split::kTest)
      .value("none", Split::kNone);
  py::enum_<ModelKind>(m, "ModelKind")
      .value("context_sensitive", ModelKind::kContextSensitive)
      .value("context_insensitive", ModelKind::kContextInsensitive);
  py::enum_<ContextInput>(m, "ContextInput")
      .value("normalized", ContextInput::kNormalized)
      .value("cit", ContextInput::kCit)
      .value("raw", ContextInput::kRaw);
  py::enum_<BaselineMode>(m, "BaselineMode")
      .value("fm_cosine", BaselineMode::kFmCosine)
      .value("cit_only", BaselineMode::kCitOnly);

  py::class_<EmbeddingStore>(m, "EmbeddingStore")
      .def(py::init<int, std::vector<ImageId>, RowMatrix>(), py::arg("dim"), py::arg("ids"), py::arg("vectors"))
      .def_property_readonly("dim", &EmbeddingStore::dim)
      .def_property_readonly("ids", &EmbeddingStore::ids)
      .def_property_readonly("vectors", &EmbeddingStore::vectors)
      .def("__len__", &EmbeddingStore::size)
      .def("__contains__", &EmbeddingStore::contains)
      .def("vector", [](const EmbeddingStore& s, ImageId id) { return Vector(s.vector(id)); })
      .def(py::self == py::self);
  m.def("load_embeddings", &load_embeddings, py::arg("path"));
  m.def("write_embeddings", &write_embeddings, py::arg("store"), py::arg("path"));

  py::class_<ContextTriplet>(m, "ContextTriplet")
      .def(py::init<>())
      .def_readwrite("context_id", &ContextTriplet::context_id)
      .def_readwrite("image_ids", &ContextTriplet::image_ids)
      .def_readwrite("oddball_index", &ContextTriplet::oddball_index)
      .def_readwrite("source_trial_id", &ContextTriplet::source_trial_id)
      .def_readwrite("participant_id", &ContextTriplet::participant_id)
      .def_readwrite("split", &ContextTriplet::split)
      .def("validate", &ContextTriplet::validate)
      .def(py::self == py::self);
  m.def("parse_triplets", &parse_triplets, py::arg("path"));
  m.def("parse_triplets_text", &parse_triplets_text, py::arg("text"));
  m.def("write_triplets", [](const std::vector<ContextTriplet>& t, const std::filesystem::path& p) { write_triplets(t, p); },
        py::arg("triplets"), py::arg("path"));
  m.def("load_class_map", &load_class_map, py::arg("path"));
  m.def("select_split", [](const std::vector<ContextTriplet>& t, Split s) { return select_split(t, s); },
        py::arg("triplets"), py::arg("split"));
  m.def("filter_class_collisions",
        [](const std::vector<ContextTriplet>& t, const ClassMap& c) { return filter_class_collisions(t, c); },
        py::arg("triplets"), py::arg("classes"));

  py::class_<ModelParams>(m, "ModelParams")
      .def_readonly("d", &ModelParams::d)
      .def_readonly("r", &ModelParams::r)
      .def_readwrite("tau", &ModelParams::tau)
      .def_readonly("kind", &ModelParams::kind)
      .def_readonly("context_input", &ModelParams::context_input)
      .def_readwrite("W", &ModelParams::W)
      .def_readwrite("b", &ModelParams::b)
      .def_readwrite("M", &ModelParams::M)
      .def_readwrite("m0", &ModelParams::m0)
      .def("validate", &ModelParams::validate)
      .def(py::self == py::self);
  m.def("init_params", &init_params, py::arg("d"), py::arg("r"), py::arg("tau"), py::arg("seed"),
        py::arg("init_scale") = std::nullopt);
  m.def("init_cit_params", &init_cit_params, py::arg("d"), py::arg("tau"));
  m.def("cit_forward", [](const ModelParams& p, const Vector& x) { return cit_forward(p, x); }, py::arg("params"),
        py::arg("x"));
  m.def("context_matrix", [](const ModelParams& p, const Vector& x) { return context_matrix(p, x); },
        py::arg("params"), py::arg("x_c"));
  m.def(
      "triplet_probs",
      [](const ModelParams& p, const EmbeddingStore& s, const ContextTriplet& t) { return triplet_probs(p, s, t).probs; },
      py::arg("params"), py::arg("store"), py::arg("triplet"));
  m.def("load_checkpoint", [](const std::filesystem::path& p) { return load_checkpoint(p).params; }, py::arg("path"));
  m.def("write_checkpoint", [](const ModelParams& p, const std::filesystem::path& path) { write_checkpoint({p, {}}, path); },
        py::arg("params"), py::arg("path"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("lambda1", &TrainConfig::lambda1)
      .def_readwrite("lambda2", &TrainConfig::lambda2)
      .def_readwrite("r", &TrainConfig::r)
      .def_readwrite("tau", &TrainConfig::tau)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("shuffle", &TrainConfig::shuffle)
      .def_readwrite("kind", &TrainConfig::kind)
      .def_readwrite("context_input", &TrainConfig::context_input)
      .def_readwrite("mapper_bias", &TrainConfig::mapper_bias)
      .def_readwrite("init_scale", &TrainConfig::init_scale)
      .def_readwrite("threads", &TrainConfig::threads);
  py::class_<EpochStats>(m, "EpochStats")
      .def_readonly("epoch", &EpochStats::epoch)
      .def_readonly("loss", &EpochStats::loss)
      .def_readonly("nll", &EpochStats::nll)
      .def_readonly("reg_w", &EpochStats::reg_w)
      .def_readonly("reg_a", &EpochStats::reg_a)
      .def_readonly("val_acc", &EpochStats::val_acc);
  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("params", &TrainResult::params)
      .def_readonly("final_params", &TrainResult::final_params)
      .def_property_readonly("best_epoch", [](const TrainResult& r) { return r.history.best_epoch; })
      .def_property_readonly("initial", [](const TrainResult& r) { return r.history.initial; })
      .def_property_readonly("epochs", [](const TrainResult& r) { return r.history.epochs; });
  m.def(
      "train",
      [](const TrainConfig& c, const std::vector<ContextTriplet>& tr, const std::vector<ContextTriplet>& val,
         const EmbeddingStore& s) {
        py::gil_scoped_release release;
        return train(c, tr, val, s);
      },
      py::arg("config"), py::arg("train_set"), py::arg("val_set"), py::arg("store"));
  m.def(
      "prediction_accuracy",
      [](const ModelParams& p, const std::vector<ContextTriplet>& t, const EmbeddingStore& s) {
        return accuracy(predict_model(p, t, s));
      },
      py::arg("params"), py::arg("triplets"), py::arg("store"));

  py::class_<Prediction>(m, "Prediction")
      .def_readonly("triplet_index", &Prediction::triplet_index)
      .def_readonly("predicted", &Prediction::predicted)
      .def_readonly("correct", &Prediction::correct);
  m.def(
      "predict_model",
      [](const ModelParams& p, const std::vector<ContextTriplet>& t, const EmbeddingStore& s, int threads) {
        return predict_model(p, t, s, threads);
      },
      py::arg("params"), py::arg("triplets"), py::arg("store"), py::arg("threads") = 1);
  m.def(
      "predict_baseline",
      [](const EmbeddingStore& s, const std::vector<ContextTriplet>& t, BaselineMode mode) {
        return predict_baseline(s, t, mode);
      },
      py::arg("store"), py::arg("triplets"), py::arg("mode") = BaselineMode::kFmCosine);
  m.def("accuracy", &accuracy, py::arg("predictions"));

  py::class_<BootstrapResult>(m, "BootstrapResult")
      .def_readonly("delta_mean", &BootstrapResult::delta_mean)
      .def_readonly("ci_low", &BootstrapResult::ci_low)
      .def_readonly("ci_high", &BootstrapResult::ci_high)
      .def_readonly("n_boot", &BootstrapResult::n_boot)
      .def_readonly("seed", &BootstrapResult::seed)
      .def_readonly("alpha", &BootstrapResult::alpha)
      .def_readonly("observed_delta", &BootstrapResult::observed_delta)
      .def("__str__", [](const BootstrapResult& r) { return format_delta(r); });
  m.def("paired_bootstrap", &paired_bootstrap, py::arg("a"), py::arg("b"), py::arg("n_boot") = 10000,
        py::arg("alpha") = 0.05, py::arg("seed") = 0, py::arg("threads") = 1);

  py::class_<UpperBoundResult>(m, "UpperBoundResult")
      .def_readonly("group_mean", &UpperBoundResult::group_mean)
      .def_readonly("response_mean", &UpperBoundResult::response_mean)
      .def_readonly("groups_total", &UpperBoundResult::groups_total)
      .def_readonly("groups_retained", &UpperBoundResult::groups_retained)
      .def_readonly("responses_retained", &UpperBoundResult::responses_retained);
  m.def("upper_bound", [](const std::vector<ContextTriplet>& t, const ClassMap& c) { return upper_bound(t, c); },
        py::arg("triplets"), py::arg("classes"));

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("d", &SyntheticSpec::d)
      .def_readwrite("r_true", &SyntheticSpec::r_true)
      .def_readwrite("n_images", &SyntheticSpec::n_images)
      .def_readwrite("n_clusters", &SyntheticSpec::n_clusters)
      .def_readwrite("cluster_spread", &SyntheticSpec::cluster_spread)
      .def_readwrite("n_trials", &SyntheticSpec::n_trials)
      .def_readwrite("n_participants", &SyntheticSpec::n_participants)
      .def_readwrite("seed", &SyntheticSpec::seed)
      .def_readwrite("context_free", &SyntheticSpec::context_free)
      .def_readwrite("kernel_gain", &SyntheticSpec::kernel_gain)
      .def_readwrite("transform_noise", &SyntheticSpec::transform_noise);
  py::class_<SyntheticData>(m, "SyntheticData")
      .def_readonly("store", &SyntheticData::store)
      .def_readonly("triplets", &SyntheticData::triplets)
      .def_readonly("classes", &SyntheticData::classes);
  m.def("gen_ground_truth", &gen_ground_truth, py::arg("spec"));
  m.def("sample_dataset", &sample_dataset, py::arg("spec"), py::arg("truth"));
  m.def(
      "bayes_accuracy",
      [](const ModelParams& p, const std::vector<ContextTriplet>& t, const EmbeddingStore& s) {
        return bayes_accuracy(p, t, s);
      },
      py::arg("truth"), py::arg("triplets"), py::arg("store"));
}
