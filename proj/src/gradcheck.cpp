#include "noiseavg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "noiseavg/error.hpp"
#include "noiseavg/rng.hpp"

namespace noiseavg {

Tensor finite_difference_input_grad(const MlpModel& model, const Tensor& x,
                                    const Tensor& y_onehot, double h) {
    if (!(h > 0.0)) throw ValidationError("finite-difference step must be > 0");
    Tensor grad = Tensor::zeros(x.shape);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = model_loss(model, probe, y_onehot);
        probe[i] = x[i] - h;
        const double down = model_loss(model, probe, y_onehot);
        probe[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double input_grad_rel_err(const MlpModel& model, const Tensor& x, const Tensor& y_onehot,
                          double h) {
    const Tensor analytic = loss_input_grad(model, x, y_onehot);
    const Tensor fd = finite_difference_input_grad(model, x, y_onehot, h);
    const double denom = std::max({linf_norm(analytic), linf_norm(fd), 1e-8});
    return linf_distance(analytic, fd) / denom;
}

namespace {

// Smallest pre-activation magnitude across all hidden layers.
double min_preactivation(const MlpModel& model, const Tensor& x) {
    double best = std::numeric_limits<double>::infinity();
    Tensor a = x;
    for (std::size_t l = 0; l + 1 < model.num_layers(); ++l) {
        const Tensor z = affine_forward(a, model.weights[l], model.biases[l]);
        for (double v : z.data) best = std::min(best, std::abs(v));
        a = activation_forward(z, model.activation);
    }
    return best;
}

} // namespace

GradCheckResult run_gradcheck(const std::vector<std::size_t>& layer_dims, Activation activation,
                              std::size_t triples, std::uint64_t seed, double h,
                              double tolerance) {
    GradCheckResult result;
    result.layer_dims = layer_dims;
    result.activation = activation;
    result.triples = triples;

    RandomEngine rng(seed);
    const std::size_t dim = layer_dims.front();
    const std::size_t classes = layer_dims.back();

    for (std::size_t t = 0; t < triples; ++t) {
        const MlpModel model = init_model(layer_dims, activation, rng.next_u64());
        Tensor x = Tensor::zeros({dim});
        // relu kinks break central differences; resample x until every hidden
        // pre-activation is safely away from zero.
        for (int attempt = 0; attempt < 64; ++attempt) {
            for (double& v : x.data) v = rng.uniform(0.0, 1.0);
            if (activation != Activation::relu || min_preactivation(model, x) > 1e-4) break;
        }
        const int label = static_cast<int>(rng.index(classes));
        const Tensor y = one_hot(label, static_cast<int>(classes));
        result.max_rel_err = std::max(result.max_rel_err, input_grad_rel_err(model, x, y, h));
    }
    result.pass = result.max_rel_err < tolerance;
    return result;
}

} // namespace noiseavg
