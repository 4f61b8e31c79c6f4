#include "noiseavg/attack.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "noiseavg/error.hpp"

namespace noiseavg {

namespace {

inline double sign(double v) {
    if (v > 0.0) return 1.0;
    if (v < 0.0) return -1.0;
    return 0.0; // sign(0) = 0
}

Tensor clip_to_box(const Tensor& x, double lo, double hi) {
    Tensor out = x;
    for (double& v : out.data) v = std::clamp(v, lo, hi);
    return out;
}

} // namespace

void AttackConfig::validate() const {
    if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
    if (!(step_size > 0.0)) throw ValidationError("step_size must be > 0");
    if (num_steps < 0) throw ValidationError("num_steps must be >= 0");
    if (!(clip_min < clip_max)) throw ValidationError("clip_min must be < clip_max");
}

std::string noise_kind_name(NoiseKind k) {
    switch (k) {
        case NoiseKind::none: return "none";
        case NoiseKind::uniform: return "uniform";
        case NoiseKind::gaussian: return "gaussian";
    }
    return "none";
}

NoiseKind noise_kind_from_name(const std::string& name) {
    if (name == "none") return NoiseKind::none;
    if (name == "uniform") return NoiseKind::uniform;
    if (name == "gaussian") return NoiseKind::gaussian;
    throw ValidationError("unsupported noise kind: " + name);
}

std::vector<double> NoiseSpec::uniform_weights(std::size_t m) {
    if (m == 0) throw ValidationError("noise sample count must be positive");
    return std::vector<double>(m, 1.0 / double(m));
}

void NoiseSpec::validate() const {
    if (num_samples == 0) throw ValidationError("noise sample count must be positive");
    if (!(sigma >= 0.0)) throw ValidationError("noise sigma must be >= 0");
    if (kind == NoiseKind::none) {
        if (num_samples != 1) throw ValidationError("noise kind 'none' requires a single sample");
        if (sigma != 0.0) throw ValidationError("noise kind 'none' requires sigma = 0");
    }
    if (weights.size() != num_samples) {
        std::ostringstream ss;
        ss << "noise weights size " << weights.size() << " does not match sample count "
           << num_samples;
        throw ValidationError(ss.str());
    }
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw ValidationError("noise weights must be >= 0");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
        throw ValidationError("noise weights must sum to 1 within 1e-12, got sum " +
                              std::to_string(sum));
}

Tensor project_linf(const Tensor& delta, double epsilon) {
    if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
    Tensor out = delta;
    for (double& v : out.data) v = std::clamp(v, -epsilon, epsilon);
    return out;
}

std::vector<Tensor> sample_noises(const NoiseSpec& spec, std::size_t dim, RandomEngine& rng) {
    spec.validate();
    std::vector<Tensor> noises;
    noises.reserve(spec.num_samples);
    for (std::size_t m = 0; m < spec.num_samples; ++m) {
        Tensor n = Tensor::zeros({dim});
        switch (spec.kind) {
            case NoiseKind::none:
                break;
            case NoiseKind::uniform:
                for (double& v : n.data) v = rng.uniform(-spec.sigma, spec.sigma);
                break;
            case NoiseKind::gaussian:
                for (double& v : n.data) v = rng.gaussian(0.0, spec.sigma);
                break;
        }
        noises.push_back(std::move(n));
    }
    return noises;
}

Tensor fgsm(const MlpModel& model, const Tensor& x, const Tensor& y_onehot, double epsilon,
            double clip_min, double clip_max) {
    if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
    const Tensor grad = loss_input_grad(model, x, y_onehot);
    Tensor adv = x;
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += epsilon * sign(grad[i]);
    return clip_to_box(adv, clip_min, clip_max);
}

Tensor pgd_baseline(const MlpModel& model, const Tensor& x, const Tensor& y_onehot,
                    const AttackConfig& cfg) {
    cfg.validate();
    Tensor delta = Tensor::zeros(x.shape);
    if (cfg.random_start) {
        RandomEngine rng(cfg.rs_seed);
        for (double& v : delta.data) v = rng.uniform(-cfg.epsilon, cfg.epsilon);
    }
    for (int step = 0; step < cfg.num_steps; ++step) {
        const Tensor grad = loss_input_grad(model, add(x, delta), y_onehot);
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += cfg.step_size * sign(grad[i]);
        delta = project_linf(delta, cfg.epsilon);
    }
    return clip_to_box(add(x, delta), cfg.clip_min, cfg.clip_max);
}

double noise_avg_loss(const MlpModel& model, const Tensor& x, const Tensor& delta,
                      const std::vector<Tensor>& noises, const std::vector<double>& weights,
                      const Tensor& y_onehot) {
    if (noises.empty() || noises.size() != weights.size())
        throw ValidationError("noise samples and weights must be non-empty and equal in length");
    const Tensor base = add(x, delta);
    double loss = 0.0;
    for (std::size_t m = 0; m < noises.size(); ++m)
        loss += weights[m] * model_loss(model, add(base, noises[m]), y_onehot);
    return loss;
}

Tensor noise_avg_grad(const MlpModel& model, const Tensor& x, const Tensor& delta,
                      const std::vector<Tensor>& noises, const std::vector<double>& weights,
                      const Tensor& y_onehot) {
    if (noises.empty() || noises.size() != weights.size())
        throw ValidationError("noise samples and weights must be non-empty and equal in length");
    const Tensor base = add(x, delta);
    Tensor grad = Tensor::zeros(x.shape);
    for (std::size_t m = 0; m < noises.size(); ++m) {
        const Tensor g = loss_input_grad(model, add(base, noises[m]), y_onehot);
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += weights[m] * g[i];
    }
    return grad;
}

Tensor noise_pgd(const MlpModel& model, const Tensor& x, const Tensor& y_onehot,
                 const AttackConfig& cfg, const NoiseSpec& spec, ResampleMode resample) {
    cfg.validate();
    spec.validate();
    RandomEngine noise_rng(spec.noise_seed);
    std::vector<Tensor> noises = sample_noises(spec, x.size(), noise_rng);

    Tensor delta = Tensor::zeros(x.shape);
    if (cfg.random_start) {
        RandomEngine rng(cfg.rs_seed);
        for (double& v : delta.data) v = rng.uniform(-cfg.epsilon, cfg.epsilon);
    }
    for (int step = 0; step < cfg.num_steps; ++step) {
        if (resample == ResampleMode::per_step && step > 0)
            noises = sample_noises(spec, x.size(), noise_rng); // chained draws
        const Tensor grad = noise_avg_grad(model, x, delta, noises, spec.weights, y_onehot);
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] += cfg.step_size * sign(grad[i]);
        delta = project_linf(delta, cfg.epsilon);
    }
    return clip_to_box(add(x, delta), cfg.clip_min, cfg.clip_max);
}

} // namespace noiseavg
