#include "noiseavg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "noiseavg/error.hpp"

namespace noiseavg {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
}

} // namespace

Tensor::Tensor(std::vector<double> values, std::vector<std::size_t> dims)
    : data(std::move(values)), shape(std::move(dims)) {
    if (shape.empty()) throw ValidationError("tensor shape must be non-empty");
    for (std::size_t d : shape)
        if (d == 0) throw ValidationError("tensor dimensions must be positive, got " + shape_str());
    if (shape_product(shape) != data.size()) {
        std::ostringstream ss;
        ss << "tensor shape " << shape_str() << " does not match element count " << data.size();
        throw ValidationError(ss.str());
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> dims) {
    const std::size_t count = shape_product(dims); // before dims is moved from
    return Tensor(std::vector<double>(count, 0.0), std::move(dims));
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(std::move(values), {n});
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_str() const {
    std::ostringstream ss;
    ss << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) ss << "x";
        ss << shape[i];
    }
    ss << "]";
    return ss.str();
}

bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
}

std::string activation_name(Activation a) {
    return a == Activation::relu ? "relu" : "tanh";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw ValidationError("unsupported activation: " + name);
}

Tensor affine_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (weights.shape.size() != 2)
        throw ValidationError("affine weights must be 2-D, got " + weights.shape_str());
    const std::size_t d_out = weights.shape[0];
    const std::size_t d_in = weights.shape[1];
    if (input.size() != d_in || bias.size() != d_out) {
        std::ostringstream ss;
        ss << "affine shape mismatch: weights " << weights.shape_str() << ", input "
           << input.shape_str() << ", bias " << bias.shape_str();
        throw ValidationError(ss.str());
    }
    Tensor out = Tensor::zeros({d_out});
    for (std::size_t j = 0; j < d_out; ++j) {
        double acc = bias[j];
        const double* row = weights.data.data() + j * d_in;
        for (std::size_t i = 0; i < d_in; ++i) acc += row[i] * input[i];
        out[j] = acc;
    }
    return out;
}

Tensor activation_forward(const Tensor& input, Activation kind) {
    Tensor out = input;
    if (kind == Activation::relu) {
        for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    } else {
        for (double& v : out.data) v = std::tanh(v);
    }
    return out;
}

Tensor activation_derivative(const Tensor& pre_activation, Activation kind) {
    Tensor out = pre_activation;
    if (kind == Activation::relu) {
        // relu'(0) = 0
        for (double& v : out.data) v = v > 0.0 ? 1.0 : 0.0;
    } else {
        for (double& v : out.data) {
            const double t = std::tanh(v);
            v = 1.0 - t * t;
        }
    }
    return out;
}

Tensor softmax(const Tensor& logits) {
    Tensor out = logits;
    const double top = *std::max_element(logits.data.begin(), logits.data.end());
    double denom = 0.0;
    for (double& v : out.data) {
        v = std::exp(v - top);
        denom += v;
    }
    for (double& v : out.data) v /= denom;
    return out;
}

std::size_t onehot_index(const Tensor& y_onehot) {
    std::size_t hit = y_onehot.size();
    for (std::size_t i = 0; i < y_onehot.size(); ++i) {
        if (y_onehot[i] == 1.0) {
            if (hit != y_onehot.size()) throw ValidationError("label is not one-hot: multiple ones");
            hit = i;
        } else if (y_onehot[i] != 0.0) {
            throw ValidationError("label is not one-hot: entries must be 0 or 1");
        }
    }
    if (hit == y_onehot.size()) throw ValidationError("label is not one-hot: no one set");
    return hit;
}

double softmax_cross_entropy(const Tensor& logits, const Tensor& y_onehot) {
    if (logits.size() < 2)
        throw ValidationError("softmax cross entropy needs >= 2 classes, got " + logits.shape_str());
    if (logits.size() != y_onehot.size()) {
        std::ostringstream ss;
        ss << "logits " << logits.shape_str() << " vs label " << y_onehot.shape_str();
        throw ValidationError(ss.str());
    }
    const std::size_t c = onehot_index(y_onehot);
    const double top = *std::max_element(logits.data.begin(), logits.data.end());
    double sum_exp = 0.0;
    for (double v : logits.data) sum_exp += std::exp(v - top);
    // -log softmax_c = log(sum_j exp(z_j - top)) - (z_c - top)
    return std::log(sum_exp) - (logits[c] - top);
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
        throw ValidationError("add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
        throw ValidationError("sub shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

double linf_norm(const Tensor& a) {
    double m = 0.0;
    for (double v : a.data) m = std::max(m, std::abs(v));
    return m;
}

double linf_distance(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
        throw ValidationError("linf_distance shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace noiseavg
