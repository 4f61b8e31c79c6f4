#pragma once

#include "noiseavg/attack.hpp"
#include "noiseavg/model.hpp"

namespace noiseavg {

// A fixed point x+delta together with the noise draws and mixture weights it
// is evaluated under.
struct EvalPoint {
    Tensor x;
    Tensor delta;
    Tensor y_onehot;
    std::vector<Tensor> noises;
    std::vector<double> weights;

    std::size_t num_samples() const { return noises.size(); }
    Tensor adversarial() const { return add(x, delta); }
    void validate() const;
};

// How the ensemble-mean objective is estimated when a member doubles as the
// attack source: include it (default) or leave it out.
enum class MeanEstimator { all_members, leave_one_out };

// Second-moment statistics of the single-source and noise-averaged objectives
// against the ensemble-mean objective, with every member cycled as source.
struct ErrorStats {
    double source_mse = 0.0;   // mean over sources of (per-source error)^2
    double averaged_mse = 0.0; // same for the weighted noise-averaged objective
    std::vector<double> source_errors;              // per source
    std::vector<std::vector<double>> sample_errors; // [source][sample]
    std::vector<double> sample_second_moments;      // per sample, mean over sources
    std::vector<std::vector<double>> cross_moments; // [l][k], mean over sources
    std::vector<std::vector<double>> rho;           // cross_moments / source_mse
    bool rho_defined = false;                       // false -> rho entries are NaN
    std::vector<double> weights;                    // mixture weights of the eval point
    double assumption_gap = 0.0;

    std::size_t num_sources() const { return source_errors.size(); }
    std::size_t num_samples() const { return sample_second_moments.size(); }
};

// Mean loss over ensemble members at x_adv. Requires >= 2 members.
double empirical_f(const Ensemble& ensemble, const Tensor& x_adv, const Tensor& y_onehot);

// Loss of one member minus the all-member mean at x_adv.
double error_hat(std::size_t source_index, const Ensemble& ensemble, const Tensor& x_adv,
                 const Tensor& y_onehot);

// Loss of one member at the m-th noised query minus the all-member mean at
// the un-noised point.
double error_m(std::size_t source_index, const Ensemble& ensemble, const EvalPoint& point,
               std::size_t m);

ErrorStats mse_stats(const Ensemble& ensemble, const EvalPoint& point,
                     MeanEstimator estimator = MeanEstimator::all_members);

struct CauchySchwarzReport {
    bool ok = true;
    double worst_violation = 0.0; // max over pairs of |E[e_l e_k]| - sqrt(E[e_l^2] E[e_k^2])
    std::size_t worst_l = 0;
    std::size_t worst_k = 0;
};

// |E[e_l e_k]| <= sqrt(E[e_l^2] E[e_k^2]) + 1e-9 for all pairs. Exact for
// empirical means, so a violation signals a bug.
CauchySchwarzReport verify_cauchy_schwarz(const std::vector<std::vector<double>>& sample_errors);

struct MseInequalityReport {
    bool holds = false;
    double margin = 0.0; // source_mse - averaged_mse
    bool expansion_ok = false;
    double expansion_rel_err = 0.0;
};

// holds <=> margin >= -1e-9 * max(1, source_mse). Also cross-checks the exact
// expansion of averaged_mse into weighted second moments and cross moments.
MseInequalityReport verify_mse_inequality(const ErrorStats& stats);

// max_m |E[e_m^2] - E[e_hat^2]| / E[e_hat^2]; 0 when both moments vanish.
double assumption_check(const Ensemble& ensemble, const EvalPoint& point);

// Fraction of adversarial examples each target misclassifies, restricted to
// examples that target classified correctly before the attack; macro-averaged
// over targets.
double transfer_rate(const std::vector<MlpModel>& targets, const std::vector<Tensor>& originals,
                     const std::vector<Tensor>& adversarials, const std::vector<int>& labels);

} // namespace noiseavg
