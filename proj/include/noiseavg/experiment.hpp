#pragma once

#include <filesystem>
#include <string>

#include "noiseavg/attack.hpp"
#include "noiseavg/gradcheck.hpp"
#include "noiseavg/model.hpp"
#include "noiseavg/theory.hpp"

namespace noiseavg {

// Flat key=value experiment description; every key is listed in key_help().
// Unknown keys are rejected so configs stay replayable.
struct ExperimentConfig {
    // data.*
    std::string data_source = "blobs"; // blobs | idx
    std::size_t data_n_per_class = 200;
    std::size_t data_dim = 2;
    int data_classes = 2;
    double data_spread = 0.08;
    std::uint64_t data_seed = 1;
    double data_train_fraction = 0.5;
    std::string data_idx_images;
    std::string data_idx_labels;

    // ensemble.*
    std::size_t ensemble_members = 8;
    std::vector<std::size_t> ensemble_layer_dims = {2, 16, 2};
    Activation ensemble_activation = Activation::relu;
    TrainConfig train;
    std::uint64_t ensemble_base_seed = 100;

    // attack.*
    AttackConfig attack;
    NoiseKind noise_kind = NoiseKind::uniform;
    double noise_sigma = 0.3;
    std::size_t noise_samples = 4;
    std::vector<double> noise_alpha; // empty -> uniform weights
    ResampleMode resample = ResampleMode::once;
    std::uint64_t noise_seed = 500;

    // eval.*
    std::size_t eval_num_points = 100;
    MeanEstimator eval_estimator = MeanEstimator::all_members;
    std::string output_dir = "out";

    bool quiet = false; // CLI flag, not a config key

    NoiseSpec noise_spec() const;
    void validate() const;
    void validate_for_theory() const; // additionally requires >= 2 members
};

ExperimentConfig load_config(const std::filesystem::path& path);
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);

// data.seed=n, ensemble.base_seed=n+1000, attack.rs_seed=n+2000,
// attack.noise_seed=n+3000.
void apply_master_seed(ExperimentConfig& cfg, std::uint64_t n);

// Sorted key=value echo of the fully resolved config; every command writes it
// next to its outputs.
std::string resolved_config_text(const ExperimentConfig& cfg);
std::string key_help();

Dataset experiment_dataset(const ExperimentConfig& cfg);

struct TrainEnsembleResult {
    std::filesystem::path ensemble_dir;
    std::vector<double> member_test_accuracy;
};

struct AttackRunResult {
    std::filesystem::path adv_file;
    std::filesystem::path csv_file;
    std::size_t num_examples = 0;
    double baseline_fooling = 0.0;
    double noise_fooling = 0.0;
};

struct TransferResult {
    std::filesystem::path csv_file;
    double baseline_mean = 0.0;
    double noise_mean = 0.0;
};

struct TheoryVerdict {
    std::filesystem::path csv_file;
    std::filesystem::path verdict_file;
    std::size_t points = 0;
    double holds_fraction = 0.0;
    double mean_margin = 0.0;
    double mean_assumption_gap = 0.0;
    bool cs_all_ok = true;
    bool expansion_all_ok = true;
};

struct GradcheckSummary {
    std::filesystem::path report_file;
    std::vector<GradCheckResult> results;
    bool pass = false;
};

TrainEnsembleResult cmd_train_ensemble(const ExperimentConfig& cfg,
                                       const std::filesystem::path& out_dir);

AttackRunResult cmd_attack(const ExperimentConfig& cfg, const std::filesystem::path& ensemble_dir,
                           const std::filesystem::path& out_dir);

TransferResult cmd_eval_transfer(const ExperimentConfig& cfg,
                                 const std::filesystem::path& ensemble_dir,
                                 const std::filesystem::path& adv_file,
                                 const std::filesystem::path& out_dir);

TheoryVerdict cmd_verify_theory(const ExperimentConfig& cfg,
                                const std::filesystem::path& ensemble_dir,
                                const std::filesystem::path& out_dir);

GradcheckSummary cmd_gradcheck(const ExperimentConfig& cfg,
                               const std::filesystem::path& out_dir);

} // namespace noiseavg
