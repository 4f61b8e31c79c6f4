#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "noiseavg/attack.hpp"
#include "noiseavg/data.hpp"
#include "noiseavg/error.hpp"
#include "noiseavg/experiment.hpp"
#include "noiseavg/gradcheck.hpp"
#include "noiseavg/model.hpp"
#include "noiseavg/rng.hpp"
#include "noiseavg/tensor.hpp"
#include "noiseavg/theory.hpp"

namespace py = pybind11;
using namespace noiseavg;

PYBIND11_MODULE(_core, m) {
    m.doc() = "Noise-averaged adversarial attacks on small dense-network ensembles";
#ifdef NOISEAVG_VERSION
    m.attr("__version__") = NOISEAVG_VERSION;
#else
    m.attr("__version__") = "dev";
#endif

    // Translators run newest-first, so the base goes in before the leaves.
    static py::exception<Error> base_exc(m, "NoiseavgError", PyExc_RuntimeError);
    py::register_exception<MalformedFileError>(m, "MalformedFileError", base_exc.ptr());
    py::register_exception<VersionError>(m, "VersionError", base_exc.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base_exc.ptr());
    py::register_exception<BadMagicError>(m, "BadMagicError", base_exc.ptr());
    py::register_exception<TruncatedFileError>(m, "TruncatedFileError", base_exc.ptr());
    py::register_exception<CountMismatchError>(m, "CountMismatchError", base_exc.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    py::class_<Tensor>(m, "Tensor")
        .def(py::init<std::vector<double>, std::vector<std::size_t>>(), py::arg("data"),
             py::arg("shape"))
        .def_static("zeros", &Tensor::zeros, py::arg("shape"))
        .def_static("vector", &Tensor::vector, py::arg("data"))
        .def_readonly("data", &Tensor::data)
        .def_readonly("shape", &Tensor::shape)
        .def("__len__", &Tensor::size)
        .def("__getitem__",
             [](const Tensor& t, std::size_t i) {
                 if (i >= t.size()) throw py::index_error();
                 return t[i];
             })
        .def("__eq__", [](const Tensor& a, const Tensor& b) { return a == b; })
        .def("__repr__", [](const Tensor& t) { return "Tensor" + t.shape_str(); });

    py::enum_<Activation>(m, "Activation")
        .value("relu", Activation::relu)
        .value("tanh", Activation::tanh);
    py::enum_<NoiseKind>(m, "NoiseKind")
        .value("none", NoiseKind::none)
        .value("uniform", NoiseKind::uniform)
        .value("gaussian", NoiseKind::gaussian);
    py::enum_<ResampleMode>(m, "ResampleMode")
        .value("once", ResampleMode::once)
        .value("per_step", ResampleMode::per_step);
    py::enum_<MeanEstimator>(m, "MeanEstimator")
        .value("all_members", MeanEstimator::all_members)
        .value("leave_one_out", MeanEstimator::leave_one_out);

    m.def("affine_forward", &affine_forward, py::arg("input"), py::arg("weights"), py::arg("bias"));
    m.def("activation_forward", &activation_forward, py::arg("input"), py::arg("kind"));
    m.def("softmax", &softmax, py::arg("logits"));
    m.def("softmax_cross_entropy", &softmax_cross_entropy, py::arg("logits"), py::arg("y_onehot"));

    py::class_<Dataset>(m, "Dataset")
        .def(py::init<>())
        .def_readwrite("inputs", &Dataset::inputs)
        .def_readwrite("labels", &Dataset::labels)
        .def_readwrite("class_count", &Dataset::class_count)
        .def("__len__", &Dataset::size)
        .def("dim", &Dataset::dim);

    m.def("one_hot", &one_hot, py::arg("label"), py::arg("class_count"));
    m.def("gen_gaussian_blobs", &gen_gaussian_blobs, py::arg("n_per_class"), py::arg("dim"),
          py::arg("class_count"), py::arg("spread"), py::arg("seed"));
    m.def("load_idx", &load_idx, py::arg("images_path"), py::arg("labels_path"));
    m.def("split", &split, py::arg("dataset"), py::arg("train_fraction"), py::arg("seed"));

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("shuffle_seed", &TrainConfig::shuffle_seed);

    py::class_<MlpModel>(m, "MlpModel")
        .def_readonly("layer_dims", &MlpModel::layer_dims)
        .def_readonly("activation", &MlpModel::activation)
        .def_readonly("seed", &MlpModel::seed)
        .def_readonly("weights", &MlpModel::weights)
        .def_readonly("biases", &MlpModel::biases)
        .def("parameter_count", &MlpModel::parameter_count)
        .def("__eq__", [](const MlpModel& a, const MlpModel& b) { return a == b; });

    m.def("init_model", &init_model, py::arg("layer_dims"), py::arg("activation"), py::arg("seed"));
    m.def("forward_logits", &forward_logits, py::arg("model"), py::arg("x"));
    m.def("model_loss", &model_loss, py::arg("model"), py::arg("x"), py::arg("y_onehot"));
    m.def("loss_input_grad", &loss_input_grad, py::arg("model"), py::arg("x"), py::arg("y_onehot"));
    m.def("train", &train, py::arg("model"), py::arg("dataset"), py::arg("cfg"));
    m.def("predict", &predict, py::arg("model"), py::arg("x"));
    m.def("accuracy", &accuracy, py::arg("model"), py::arg("dataset"));

    py::class_<Ensemble>(m, "Ensemble")
        .def_readonly("models", &Ensemble::models)
        .def_readonly("seeds", &Ensemble::seeds)
        .def_readonly("duplicate_seeds", &Ensemble::duplicate_seeds)
        .def("__len__", &Ensemble::size);

    m.def("train_ensemble", &train_ensemble, py::arg("layer_dims"), py::arg("activation"),
          py::arg("k"), py::arg("base_seed"), py::arg("dataset"), py::arg("cfg"));
    m.def("train_ensemble_with_seeds", &train_ensemble_with_seeds, py::arg("layer_dims"),
          py::arg("activation"), py::arg("member_seeds"), py::arg("dataset"), py::arg("cfg"));
    m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
    m.def("load_model", &load_model, py::arg("path"));
    m.def("save_ensemble", &save_ensemble, py::arg("ensemble"), py::arg("dir"));
    m.def("load_ensemble", &load_ensemble, py::arg("dir"));

    py::class_<AttackConfig>(m, "AttackConfig")
        .def(py::init<>())
        .def_readwrite("epsilon", &AttackConfig::epsilon)
        .def_readwrite("step_size", &AttackConfig::step_size)
        .def_readwrite("num_steps", &AttackConfig::num_steps)
        .def_readwrite("random_start", &AttackConfig::random_start)
        .def_readwrite("rs_seed", &AttackConfig::rs_seed)
        .def_readwrite("clip_min", &AttackConfig::clip_min)
        .def_readwrite("clip_max", &AttackConfig::clip_max);

    py::class_<NoiseSpec>(m, "NoiseSpec")
        .def(py::init<>())
        .def_readwrite("kind", &NoiseSpec::kind)
        .def_readwrite("sigma", &NoiseSpec::sigma)
        .def_readwrite("num_samples", &NoiseSpec::num_samples)
        .def_readwrite("weights", &NoiseSpec::weights)
        .def_readwrite("noise_seed", &NoiseSpec::noise_seed)
        .def_static("uniform_weights", &NoiseSpec::uniform_weights, py::arg("m"));

    py::class_<RandomEngine>(m, "RandomEngine")
        .def(py::init<std::uint64_t>(), py::arg("seed"))
        .def("uniform", &RandomEngine::uniform)
        .def("gaussian", &RandomEngine::gaussian);

    m.def("project_linf", &project_linf, py::arg("delta"), py::arg("epsilon"));
    m.def("sample_noises", &sample_noises, py::arg("spec"), py::arg("dim"), py::arg("rng"));
    m.def("fgsm", &fgsm, py::arg("model"), py::arg("x"), py::arg("y_onehot"), py::arg("epsilon"),
          py::arg("clip_min") = 0.0, py::arg("clip_max") = 1.0);
    m.def("pgd_baseline", &pgd_baseline, py::arg("model"), py::arg("x"), py::arg("y_onehot"),
          py::arg("cfg"));
    m.def("noise_avg_loss", &noise_avg_loss, py::arg("model"), py::arg("x"), py::arg("delta"),
          py::arg("noises"), py::arg("weights"), py::arg("y_onehot"));
    m.def("noise_avg_grad", &noise_avg_grad, py::arg("model"), py::arg("x"), py::arg("delta"),
          py::arg("noises"), py::arg("weights"), py::arg("y_onehot"));
    m.def("noise_pgd", &noise_pgd, py::arg("model"), py::arg("x"), py::arg("y_onehot"),
          py::arg("cfg"), py::arg("spec"), py::arg("resample") = ResampleMode::once);

    py::class_<EvalPoint>(m, "EvalPoint")
        .def(py::init<>())
        .def_readwrite("x", &EvalPoint::x)
        .def_readwrite("delta", &EvalPoint::delta)
        .def_readwrite("y_onehot", &EvalPoint::y_onehot)
        .def_readwrite("noises", &EvalPoint::noises)
        .def_readwrite("weights", &EvalPoint::weights)
        .def("adversarial", &EvalPoint::adversarial);

    py::class_<ErrorStats>(m, "ErrorStats")
        .def_readonly("source_mse", &ErrorStats::source_mse)
        .def_readonly("averaged_mse", &ErrorStats::averaged_mse)
        .def_readonly("source_errors", &ErrorStats::source_errors)
        .def_readonly("sample_errors", &ErrorStats::sample_errors)
        .def_readonly("sample_second_moments", &ErrorStats::sample_second_moments)
        .def_readonly("cross_moments", &ErrorStats::cross_moments)
        .def_readonly("rho", &ErrorStats::rho)
        .def_readonly("rho_defined", &ErrorStats::rho_defined)
        .def_readonly("weights", &ErrorStats::weights)
        .def_readonly("assumption_gap", &ErrorStats::assumption_gap);

    py::class_<CauchySchwarzReport>(m, "CauchySchwarzReport")
        .def_readonly("ok", &CauchySchwarzReport::ok)
        .def_readonly("worst_violation", &CauchySchwarzReport::worst_violation)
        .def_readonly("worst_l", &CauchySchwarzReport::worst_l)
        .def_readonly("worst_k", &CauchySchwarzReport::worst_k);

    py::class_<MseInequalityReport>(m, "MseInequalityReport")
        .def_readonly("holds", &MseInequalityReport::holds)
        .def_readonly("margin", &MseInequalityReport::margin)
        .def_readonly("expansion_ok", &MseInequalityReport::expansion_ok)
        .def_readonly("expansion_rel_err", &MseInequalityReport::expansion_rel_err);

    m.def("empirical_f", &empirical_f, py::arg("ensemble"), py::arg("x_adv"), py::arg("y_onehot"));
    m.def("error_hat", &error_hat, py::arg("source_index"), py::arg("ensemble"), py::arg("x_adv"),
          py::arg("y_onehot"));
    m.def("error_m", &error_m, py::arg("source_index"), py::arg("ensemble"), py::arg("point"),
          py::arg("m"));
    m.def("mse_stats", &mse_stats, py::arg("ensemble"), py::arg("point"),
          py::arg("estimator") = MeanEstimator::all_members);
    m.def("verify_cauchy_schwarz", &verify_cauchy_schwarz, py::arg("sample_errors"));
    m.def("verify_mse_inequality", &verify_mse_inequality, py::arg("stats"));
    m.def("assumption_check", &assumption_check, py::arg("ensemble"), py::arg("point"));
    m.def("transfer_rate", &transfer_rate, py::arg("targets"), py::arg("originals"),
          py::arg("adversarials"), py::arg("labels"));

    m.def("finite_difference_input_grad", &finite_difference_input_grad, py::arg("model"),
          py::arg("x"), py::arg("y_onehot"), py::arg("h") = 1e-5);
    m.def("input_grad_rel_err", &input_grad_rel_err, py::arg("model"), py::arg("x"),
          py::arg("y_onehot"), py::arg("h") = 1e-5);
}
