#pragma once

#include <cstdint>
#include <filesystem>

#include "noiseavg/data.hpp"
#include "noiseavg/tensor.hpp"

namespace noiseavg {

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 20;
    int batch_size = 16;
    std::uint64_t shuffle_seed = 0;

    void validate() const; // learning_rate > 0, batch_size > 0, epochs >= 0
};

// Dense feed-forward classifier. weights[l] has shape {dims[l+1], dims[l]},
// biases[l] has shape {dims[l+1]}. The activation sits after every layer
// except the last; the last layer emits logits.
struct MlpModel {
    std::vector<std::size_t> layer_dims;
    Activation activation = Activation::relu;
    std::uint64_t seed = 0;
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t class_count() const { return layer_dims.back(); }
    std::size_t num_layers() const { return weights.size(); }
    std::size_t parameter_count() const;
    void validate() const;
};

bool operator==(const MlpModel& a, const MlpModel& b);

// Glorot-uniform weights in [-b, b] with b = sqrt(6/(fan_in+fan_out)), zero
// biases; fully determined by the seed.
MlpModel init_model(const std::vector<std::size_t>& layer_dims, Activation activation,
                    std::uint64_t seed);

Tensor forward_logits(const MlpModel& model, const Tensor& x);
double model_loss(const MlpModel& model, const Tensor& x, const Tensor& y_onehot);

// Exact dL/dx through all layers by reverse accumulation.
Tensor loss_input_grad(const MlpModel& model, const Tensor& x, const Tensor& y_onehot);

// Mini-batch SGD on softmax cross entropy, epoch-level shuffling from
// cfg.shuffle_seed. Deterministic; aborts on NaN loss.
MlpModel train(const MlpModel& model, const Dataset& dataset, const TrainConfig& cfg);

// Argmax with ties broken toward the lowest class index.
int predict(const MlpModel& model, const Tensor& x);
double accuracy(const MlpModel& model, const Dataset& dataset);

struct Ensemble {
    std::vector<MlpModel> models;
    std::vector<std::uint64_t> seeds;
    TrainConfig train_cfg;
    bool duplicate_seeds = false;

    std::size_t size() const { return models.size(); }
    std::size_t input_dim() const { return models.front().input_dim(); }
    std::size_t class_count() const { return models.front().class_count(); }
    void validate() const; // >= 2 members, consistent dims
};

// K members, member i trained with init seed base_seed+i and shuffle seed
// cfg.shuffle_seed + its member seed, on identical data.
Ensemble train_ensemble(const std::vector<std::size_t>& layer_dims, Activation activation,
                        std::size_t k, std::uint64_t base_seed, const Dataset& dataset,
                        const TrainConfig& cfg);

// Explicit per-member seeds; duplicates are accepted and flagged.
Ensemble train_ensemble_with_seeds(const std::vector<std::size_t>& layer_dims,
                                   Activation activation,
                                   const std::vector<std::uint64_t>& member_seeds,
                                   const Dataset& dataset, const TrainConfig& cfg);

// Self-describing JSON, format_version 1, doubles at 17 significant digits so
// the round-trip is bit-exact.
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

// Directory of one model file per member plus manifest.json (ordered).
void save_ensemble(const Ensemble& ensemble, const std::filesystem::path& dir);
Ensemble load_ensemble(const std::filesystem::path& dir);

} // namespace noiseavg
