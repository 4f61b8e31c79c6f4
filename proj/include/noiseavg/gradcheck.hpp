#pragma once

#include "noiseavg/model.hpp"

namespace noiseavg {

// Central finite differences of the loss; touches only the forward path.
Tensor finite_difference_input_grad(const MlpModel& model, const Tensor& x,
                                    const Tensor& y_onehot, double h = 1e-5);

// ||analytic - fd||_inf / max(||analytic||_inf, ||fd||_inf, 1e-8)
double input_grad_rel_err(const MlpModel& model, const Tensor& x, const Tensor& y_onehot,
                          double h = 1e-5);

struct GradCheckResult {
    std::vector<std::size_t> layer_dims;
    Activation activation = Activation::relu;
    std::size_t triples = 0;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Random (model, x, y) triples for one architecture. For relu nets, x is
// resampled until every pre-activation magnitude exceeds 1e-4 so the central
// difference never straddles the kink.
GradCheckResult run_gradcheck(const std::vector<std::size_t>& layer_dims, Activation activation,
                              std::size_t triples, std::uint64_t seed, double h = 1e-5,
                              double tolerance = 1e-5);

} // namespace noiseavg
