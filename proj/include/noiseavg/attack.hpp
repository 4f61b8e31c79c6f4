#pragma once

#include <cstdint>

#include "noiseavg/model.hpp"
#include "noiseavg/rng.hpp"
#include "noiseavg/tensor.hpp"

namespace noiseavg {

struct AttackConfig {
    double epsilon = 0.3;     // L-inf budget in normalized input units
    double step_size = 0.05;
    int num_steps = 20;
    bool random_start = false;
    std::uint64_t rs_seed = 0;
    double clip_min = 0.0;
    double clip_max = 1.0;

    void validate() const;
};

enum class NoiseKind { none, uniform, gaussian };

std::string noise_kind_name(NoiseKind k);
NoiseKind noise_kind_from_name(const std::string& name);

// Additive-noise spec for the averaged objective: num_samples draws from the
// given distribution, combined with simplex weights. kind=none forces a single
// zero sample.
struct NoiseSpec {
    NoiseKind kind = NoiseKind::none;
    double sigma = 0.0;
    std::size_t num_samples = 1;
    std::vector<double> weights; // >= 0, sums to 1 within 1e-12
    std::uint64_t noise_seed = 0;

    static std::vector<double> uniform_weights(std::size_t m);
    void validate() const;
};

enum class ResampleMode { once, per_step };

// Componentwise clamp of delta to [-epsilon, epsilon].
Tensor project_linf(const Tensor& delta, double epsilon);

// num_samples tensors; uniform -> iid components in [-sigma, sigma],
// gaussian -> iid N(0, sigma^2), none -> one zero tensor.
std::vector<Tensor> sample_noises(const NoiseSpec& spec, std::size_t dim, RandomEngine& rng);

// x' = clip(x + epsilon * sign(dL/dx)), sign(0) = 0.
Tensor fgsm(const MlpModel& model, const Tensor& x, const Tensor& y_onehot,
            double epsilon, double clip_min = 0.0, double clip_max = 1.0);

// Sign-gradient ascent with L-inf projection each step, clip at the end.
// Exactly cfg.num_steps gradient evaluations.
Tensor pgd_baseline(const MlpModel& model, const Tensor& x, const Tensor& y_onehot,
                    const AttackConfig& cfg);

// Weighted loss over the noised query points x+delta+n_m. The noised queries
// are deliberately not clipped to the input domain.
double noise_avg_loss(const MlpModel& model, const Tensor& x, const Tensor& delta,
                      const std::vector<Tensor>& noises, const std::vector<double>& weights,
                      const Tensor& y_onehot);

// Gradient of noise_avg_loss with respect to delta (equivalently x).
Tensor noise_avg_grad(const MlpModel& model, const Tensor& x, const Tensor& delta,
                      const std::vector<Tensor>& noises, const std::vector<double>& weights,
                      const Tensor& y_onehot);

// PGD on the noise-averaged objective. `once` fixes the sample set for the
// whole run; `per_step` redraws every step, chained from spec.noise_seed.
// kind=none reproduces pgd_baseline bit for bit.
Tensor noise_pgd(const MlpModel& model, const Tensor& x, const Tensor& y_onehot,
                 const AttackConfig& cfg, const NoiseSpec& spec,
                 ResampleMode resample = ResampleMode::once);

} // namespace noiseavg
