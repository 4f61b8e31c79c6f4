#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace noiseavg {

// Flat 64-bit float array plus shape. Carries inputs, perturbations, noise,
// one-hot labels, gradients and layer parameters. Row-major for 2-D.
struct Tensor {
    std::vector<double> data;
    std::vector<std::size_t> shape;

    Tensor() = default;
    Tensor(std::vector<double> values, std::vector<std::size_t> dims);

    static Tensor zeros(std::vector<std::size_t> dims);
    static Tensor vector(std::vector<double> values);

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool all_finite() const;
    std::string shape_str() const;
};

bool operator==(const Tensor& a, const Tensor& b);

enum class Activation { relu, tanh };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// output_j = sum_i weights[j,i] * input_i + bias_j
Tensor affine_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);

// Elementwise relu / tanh. relu'(0) = 0 by convention.
Tensor activation_forward(const Tensor& input, Activation kind);
Tensor activation_derivative(const Tensor& pre_activation, Activation kind);

Tensor softmax(const Tensor& logits);

// -log softmax(logits)[true class]; log-sum-exp stabilized. y must be one-hot.
double softmax_cross_entropy(const Tensor& logits, const Tensor& y_onehot);

// Index of the 1 in a one-hot tensor; ValidationError otherwise.
std::size_t onehot_index(const Tensor& y_onehot);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
double linf_norm(const Tensor& a);
double linf_distance(const Tensor& a, const Tensor& b);

} // namespace noiseavg
