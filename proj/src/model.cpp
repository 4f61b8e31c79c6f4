#include "noiseavg/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "noiseavg/error.hpp"
#include "noiseavg/io_util.hpp"
#include "noiseavg/rng.hpp"

namespace noiseavg {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (epochs < 0) throw ValidationError("epochs must be >= 0");
    if (batch_size <= 0) throw ValidationError("batch_size must be > 0");
}

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

void MlpModel::validate() const {
    if (layer_dims.size() < 2) throw ValidationError("model needs >= 2 layer dims");
    for (std::size_t d : layer_dims)
        if (d == 0) throw ValidationError("layer dims must be positive");
    if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size())
        throw ShapeError("layer count does not match layer_dims");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].shape != std::vector<std::size_t>{layer_dims[l + 1], layer_dims[l]}) {
            std::ostringstream ss;
            ss << "layer " << l << " weights " << weights[l].shape_str() << " do not conform to dims "
               << layer_dims[l] << "->" << layer_dims[l + 1];
            throw ShapeError(ss.str());
        }
        if (biases[l].shape != std::vector<std::size_t>{layer_dims[l + 1]})
            throw ShapeError("layer " + std::to_string(l) + " bias shape mismatch");
        if (!weights[l].all_finite() || !biases[l].all_finite())
            throw ValidationError("model parameters must be finite");
    }
}

bool operator==(const MlpModel& a, const MlpModel& b) {
    return a.layer_dims == b.layer_dims && a.activation == b.activation && a.seed == b.seed &&
           a.weights == b.weights && a.biases == b.biases;
}

MlpModel init_model(const std::vector<std::size_t>& layer_dims, Activation activation,
                    std::uint64_t seed) {
    if (layer_dims.size() < 2) throw ValidationError("layer_dims needs at least input and output");
    for (std::size_t d : layer_dims)
        if (d == 0) throw ValidationError("layer dims must be positive");

    MlpModel model;
    model.layer_dims = layer_dims;
    model.activation = activation;
    model.seed = seed;

    RandomEngine rng(seed);
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const std::size_t fan_in = layer_dims[l];
        const std::size_t fan_out = layer_dims[l + 1];
        const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
        Tensor w = Tensor::zeros({fan_out, fan_in});
        for (double& v : w.data) v = rng.uniform(-bound, bound);
        model.weights.push_back(std::move(w));
        model.biases.push_back(Tensor::zeros({fan_out}));
    }
    return model;
}

namespace {

struct ForwardTrace {
    std::vector<Tensor> inputs_per_layer; // a_0 = x, a_1, ..., a_{L-1}
    std::vector<Tensor> pre_activations;  // z_1, ..., z_L (z_L = logits)
};

ForwardTrace forward_trace(const MlpModel& model, const Tensor& x) {
    if (x.size() != model.input_dim()) {
        std::ostringstream ss;
        ss << "input " << x.shape_str() << " does not match model input dim " << model.input_dim();
        throw ValidationError(ss.str());
    }
    ForwardTrace trace;
    trace.inputs_per_layer.push_back(x);
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        Tensor z = affine_forward(trace.inputs_per_layer.back(), model.weights[l], model.biases[l]);
        trace.pre_activations.push_back(z);
        if (l + 1 < model.num_layers())
            trace.inputs_per_layer.push_back(activation_forward(z, model.activation));
    }
    return trace;
}

// W^T g
Tensor backprop_through_affine(const Tensor& weights, const Tensor& grad_out) {
    const std::size_t d_out = weights.shape[0];
    const std::size_t d_in = weights.shape[1];
    Tensor grad_in = Tensor::zeros({d_in});
    for (std::size_t j = 0; j < d_out; ++j) {
        const double g = grad_out[j];
        const double* row = weights.data.data() + j * d_in;
        for (std::size_t i = 0; i < d_in; ++i) grad_in[i] += row[i] * g;
    }
    return grad_in;
}

struct ParamGrads {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;
};

// Shared reverse pass: logits gradient is softmax(z) - y; returns the
// gradient at the input and (optionally) accumulates parameter gradients.
Tensor backward(const MlpModel& model, const ForwardTrace& trace, const Tensor& y_onehot,
                ParamGrads* accum) {
    Tensor grad_z = softmax(trace.pre_activations.back());
    const std::size_t c = onehot_index(y_onehot);
    if (y_onehot.size() != model.class_count())
        throw ValidationError("label classes do not match model output");
    grad_z[c] -= 1.0;

    for (std::size_t l = model.num_layers(); l-- > 0;) {
        if (accum) {
            const Tensor& a = trace.inputs_per_layer[l];
            Tensor& dw = accum->weights[l];
            Tensor& db = accum->biases[l];
            const std::size_t d_in = a.size();
            for (std::size_t j = 0; j < grad_z.size(); ++j) {
                const double g = grad_z[j];
                db[j] += g;
                double* row = dw.data.data() + j * d_in;
                for (std::size_t i = 0; i < d_in; ++i) row[i] += g * a[i];
            }
        }
        Tensor grad_a = backprop_through_affine(model.weights[l], grad_z);
        if (l == 0) return grad_a;
        const Tensor deriv = activation_derivative(trace.pre_activations[l - 1], model.activation);
        for (std::size_t i = 0; i < grad_a.size(); ++i) grad_a[i] *= deriv[i];
        grad_z = std::move(grad_a);
    }
    return Tensor::zeros({model.input_dim()}); // unreachable
}

} // namespace

Tensor forward_logits(const MlpModel& model, const Tensor& x) {
    return forward_trace(model, x).pre_activations.back();
}

double model_loss(const MlpModel& model, const Tensor& x, const Tensor& y_onehot) {
    return softmax_cross_entropy(forward_logits(model, x), y_onehot);
}

Tensor loss_input_grad(const MlpModel& model, const Tensor& x, const Tensor& y_onehot) {
    const ForwardTrace trace = forward_trace(model, x);
    return backward(model, trace, y_onehot, nullptr);
}

MlpModel train(const MlpModel& model, const Dataset& dataset, const TrainConfig& cfg) {
    cfg.validate();
    dataset.validate();
    if (dataset.size() == 0) throw ValidationError("training dataset is empty");
    if (dataset.dim() != model.input_dim())
        throw ValidationError("dataset dimension does not match model input dim");
    if (dataset.class_count != static_cast<int>(model.class_count()))
        throw ValidationError("dataset class count does not match model output");

    MlpModel current = model;
    RandomEngine shuffle_rng(cfg.shuffle_seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::vector<Tensor> onehots;
    onehots.reserve(dataset.size());
    for (int label : dataset.labels) onehots.push_back(one_hot(label, dataset.class_count));

    const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        deterministic_shuffle(order, shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            ParamGrads grads;
            for (std::size_t l = 0; l < current.num_layers(); ++l) {
                grads.weights.push_back(Tensor::zeros(current.weights[l].shape));
                grads.biases.push_back(Tensor::zeros(current.biases[l].shape));
            }
            double batch_loss = 0.0;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                const ForwardTrace trace = forward_trace(current, dataset.inputs[idx]);
                batch_loss += softmax_cross_entropy(trace.pre_activations.back(), onehots[idx]);
                backward(current, trace, onehots[idx], &grads);
            }
            const double inv_n = 1.0 / double(end - start);
            if (!std::isfinite(batch_loss)) {
                std::ostringstream ss;
                ss << "training diverged: non-finite loss at epoch " << epoch
                   << " (learning rate " << cfg.learning_rate << " too high?)";
                throw Error(ss.str());
            }
            for (std::size_t l = 0; l < current.num_layers(); ++l) {
                for (std::size_t i = 0; i < current.weights[l].size(); ++i)
                    current.weights[l][i] -= cfg.learning_rate * inv_n * grads.weights[l][i];
                for (std::size_t i = 0; i < current.biases[l].size(); ++i)
                    current.biases[l][i] -= cfg.learning_rate * inv_n * grads.biases[l][i];
            }
        }
    }
    return current;
}

int predict(const MlpModel& model, const Tensor& x) {
    const Tensor logits = forward_logits(model, x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[best]) best = i; // ties go to the lowest index
    return static_cast<int>(best);
}

double accuracy(const MlpModel& model, const Dataset& dataset) {
    if (dataset.size() == 0) throw ValidationError("accuracy over an empty dataset is undefined");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (predict(model, dataset.inputs[i]) == dataset.labels[i]) ++correct;
    return double(correct) / double(dataset.size());
}

void Ensemble::validate() const {
    if (models.size() < 2) throw ValidationError("ensemble needs >= 2 members");
    if (seeds.size() != models.size()) throw ValidationError("ensemble seeds/members mismatch");
    for (const MlpModel& m : models) {
        if (m.input_dim() != input_dim() || m.class_count() != class_count())
            throw ShapeError("ensemble members disagree on input dim or class count");
    }
}

Ensemble train_ensemble(const std::vector<std::size_t>& layer_dims, Activation activation,
                        std::size_t k, std::uint64_t base_seed, const Dataset& dataset,
                        const TrainConfig& cfg) {
    if (k < 2) throw ValidationError("ensemble size must be >= 2");
    std::vector<std::uint64_t> seeds(k);
    for (std::size_t i = 0; i < k; ++i) seeds[i] = base_seed + i;
    return train_ensemble_with_seeds(layer_dims, activation, seeds, dataset, cfg);
}

Ensemble train_ensemble_with_seeds(const std::vector<std::size_t>& layer_dims,
                                   Activation activation,
                                   const std::vector<std::uint64_t>& member_seeds,
                                   const Dataset& dataset, const TrainConfig& cfg) {
    if (member_seeds.size() < 2) throw ValidationError("ensemble size must be >= 2");
    Ensemble ensemble;
    ensemble.seeds = member_seeds;
    ensemble.train_cfg = cfg;
    ensemble.duplicate_seeds =
        std::set<std::uint64_t>(member_seeds.begin(), member_seeds.end()).size() != member_seeds.size();
    for (std::size_t i = 0; i < member_seeds.size(); ++i) {
        // Both init and shuffle randomness derive from the member seed, so
        // duplicate seeds reproduce identical members exactly.
        TrainConfig member_cfg = cfg;
        member_cfg.shuffle_seed = cfg.shuffle_seed + member_seeds[i];
        try {
            const MlpModel m = init_model(layer_dims, activation, member_seeds[i]);
            ensemble.models.push_back(train(m, dataset, member_cfg));
        } catch (const Error& e) {
            throw Error("ensemble member " + std::to_string(i) + ": " + e.what());
        }
    }
    ensemble.validate();
    return ensemble;
}

namespace {

constexpr int kModelFormatVersion = 1;

void append_double_array(std::string& out, const Tensor& t) {
    out += "[";
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (i) out += ", ";
        out += fmt_double(t[i]);
    }
    out += "]";
}

using nlohmann::json;

json parse_json_file(const std::filesystem::path& path, const char* what) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const Error& e) {
        throw Error(std::string(what) + ": " + e.what());
    }
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw MalformedFileError(std::string("malformed ") + what + " " + path.string() + ": " +
                                 e.what());
    }
}

template <typename T>
T get_field(const json& j, const char* key, const std::filesystem::path& path) {
    if (!j.is_object() || !j.contains(key))
        throw MalformedFileError("malformed model file " + path.string() + ": missing field '" +
                                 key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw MalformedFileError("malformed model file " + path.string() + ": field '" + key +
                                 "' has the wrong type");
    }
}

} // namespace

void save_model(const MlpModel& model, const std::filesystem::path& path) {
    model.validate();
    std::string out = "{\n";
    out += "  \"format_version\": " + std::to_string(kModelFormatVersion) + ",\n";
    out += "  \"layer_dims\": [";
    for (std::size_t i = 0; i < model.layer_dims.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(model.layer_dims[i]);
    }
    out += "],\n";
    out += "  \"activation\": \"" + activation_name(model.activation) + "\",\n";
    out += "  \"seed\": " + std::to_string(model.seed) + ",\n";
    out += "  \"weights\": [\n";
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        out += "    ";
        append_double_array(out, model.weights[l]);
        out += l + 1 < model.weights.size() ? ",\n" : "\n";
    }
    out += "  ],\n  \"biases\": [\n";
    for (std::size_t l = 0; l < model.biases.size(); ++l) {
        out += "    ";
        append_double_array(out, model.biases[l]);
        out += l + 1 < model.biases.size() ? ",\n" : "\n";
    }
    out += "  ]\n}\n";
    write_text_file(path, out);
}

MlpModel load_model(const std::filesystem::path& path) {
    const json j = parse_json_file(path, "model file");

    const auto version = get_field<int>(j, "format_version", path);
    if (version != kModelFormatVersion) {
        std::ostringstream ss;
        ss << "model file " << path.string() << " has format_version " << version << ", expected "
           << kModelFormatVersion;
        throw VersionError(ss.str());
    }

    MlpModel model;
    model.layer_dims = get_field<std::vector<std::size_t>>(j, "layer_dims", path);
    model.activation = [&] {
        const auto name = get_field<std::string>(j, "activation", path);
        try {
            return activation_from_name(name);
        } catch (const ValidationError&) {
            throw MalformedFileError("malformed model file " + path.string() +
                                     ": unknown activation '" + name + "'");
        }
    }();
    model.seed = get_field<std::uint64_t>(j, "seed", path);
    const auto weights = get_field<std::vector<std::vector<double>>>(j, "weights", path);
    const auto biases = get_field<std::vector<std::vector<double>>>(j, "biases", path);

    if (model.layer_dims.size() < 2)
        throw ShapeError("model file " + path.string() + ": layer_dims needs >= 2 entries");
    const std::size_t layers = model.layer_dims.size() - 1;
    if (weights.size() != layers || biases.size() != layers) {
        std::ostringstream ss;
        ss << "model file " << path.string() << ": declared " << layers << " layers but found "
           << weights.size() << " weight blocks and " << biases.size() << " bias blocks";
        throw ShapeError(ss.str());
    }
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t expect_w = model.layer_dims[l + 1] * model.layer_dims[l];
        if (weights[l].size() != expect_w) {
            std::ostringstream ss;
            ss << "model file " << path.string() << ": layer " << l << " declares " << expect_w
               << " weights but contains " << weights[l].size();
            throw ShapeError(ss.str());
        }
        if (biases[l].size() != model.layer_dims[l + 1]) {
            std::ostringstream ss;
            ss << "model file " << path.string() << ": layer " << l << " declares "
               << model.layer_dims[l + 1] << " biases but contains " << biases[l].size();
            throw ShapeError(ss.str());
        }
        model.weights.emplace_back(weights[l],
                                   std::vector<std::size_t>{model.layer_dims[l + 1], model.layer_dims[l]});
        model.biases.emplace_back(biases[l], std::vector<std::size_t>{model.layer_dims[l + 1]});
        if (!model.weights.back().all_finite() || !model.biases.back().all_finite())
            throw MalformedFileError("model file " + path.string() +
                                     ": parameters contain non-finite values");
    }
    return model;
}

void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& dir) {
    ensemble.validate();
    std::filesystem::create_directories(dir);

    std::vector<std::string> names;
    for (std::size_t i = 0; i < ensemble.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "model_%03zu.json", i);
        names.emplace_back(name);
        save_model(ensemble.models[i], dir / names.back());
    }

    std::string out = "{\n";
    out += "  \"format_version\": " + std::to_string(kModelFormatVersion) + ",\n";
    out += "  \"members\": [";
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (i) out += ", ";
        out += "\"" + names[i] + "\"";
    }
    out += "],\n  \"seeds\": [";
    for (std::size_t i = 0; i < ensemble.seeds.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(ensemble.seeds[i]);
    }
    out += "],\n";
    out += std::string("  \"duplicate_seeds\": ") + (ensemble.duplicate_seeds ? "true" : "false") +
           ",\n";
    out += "  \"train\": {\"learning_rate\": " + fmt_double(ensemble.train_cfg.learning_rate) +
           ", \"epochs\": " + std::to_string(ensemble.train_cfg.epochs) +
           ", \"batch_size\": " + std::to_string(ensemble.train_cfg.batch_size) +
           ", \"shuffle_seed\": " + std::to_string(ensemble.train_cfg.shuffle_seed) + "}\n";
    out += "}\n";
    write_text_file(dir / "manifest.json", out);
}

Ensemble load_ensemble(const std::filesystem::path& dir) {
    const std::filesystem::path manifest_path = dir / "manifest.json";
    const json j = parse_json_file(manifest_path, "ensemble manifest");

    const auto version = get_field<int>(j, "format_version", manifest_path);
    if (version != kModelFormatVersion) {
        std::ostringstream ss;
        ss << "ensemble manifest " << manifest_path.string() << " has format_version " << version
           << ", expected " << kModelFormatVersion;
        throw VersionError(ss.str());
    }

    Ensemble ensemble;
    const auto members = get_field<std::vector<std::string>>(j, "members", manifest_path);
    ensemble.seeds = get_field<std::vector<std::uint64_t>>(j, "seeds", manifest_path);
    if (j.contains("duplicate_seeds") && j.at("duplicate_seeds").is_boolean())
        ensemble.duplicate_seeds = j.at("duplicate_seeds").get<bool>();
    if (j.contains("train") && j.at("train").is_object()) {
        const json& t = j.at("train");
        ensemble.train_cfg.learning_rate = t.value("learning_rate", 0.1);
        ensemble.train_cfg.epochs = t.value("epochs", 0);
        ensemble.train_cfg.batch_size = t.value("batch_size", 1);
        ensemble.train_cfg.shuffle_seed = t.value("shuffle_seed", std::uint64_t{0});
    }
    if (members.size() != ensemble.seeds.size())
        throw MalformedFileError("ensemble manifest " + manifest_path.string() +
                                 ": members/seeds length mismatch");
    for (const std::string& name : members) ensemble.models.push_back(load_model(dir / name));
    ensemble.validate();
    return ensemble;
}

} // namespace noiseavg
