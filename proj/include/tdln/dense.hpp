// Fully connected layers with SELU activation, inverted dropout, the softmax
// output head, and cross-entropy loss.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "tdln/activations.hpp"
#include "tdln/matrix.hpp"
#include "tdln/rng.hpp"

namespace tdln {

enum class DenseActivation { Selu, Softmax };

struct DenseParams {
    Matrix weights;  // out x in
    Vector bias;     // out
    DenseActivation activation = DenseActivation::Selu;

    std::size_t input_size() const { return weights.cols(); }
    std::size_t output_size() const { return weights.rows(); }
};

struct DenseGrads {
    Matrix weights;
    Vector bias;
};

struct DenseCache {
    Vector input;
    Vector pre;  // W x + b
    Vector post; // activation applied
};

struct DropoutMask {
    double keep_probability = 1.0;
    Vector mask;  // entries in {0, 1/keep_probability}
};

inline DenseParams init_dense_params(std::size_t input_size, std::size_t output_size,
                                     DenseActivation activation, SeededRng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(input_size + output_size));
    DenseParams p;
    p.weights = Matrix(output_size, input_size);
    for (double& v : p.weights.data()) v = rng.uniform(-bound, bound);
    p.bias.assign(output_size, 0.0);
    p.activation = activation;
    return p;
}

inline Vector dense_forward(const DenseParams& params, const Vector& x, DenseCache& cache) {
    if (x.size() != params.input_size())
        throw std::invalid_argument("dense_forward: input size " + std::to_string(x.size()) +
                                    " != " + std::to_string(params.input_size()));
    cache.input = x;
    cache.pre = matvec(params.weights, x);
    for (std::size_t i = 0; i < cache.pre.size(); ++i) cache.pre[i] += params.bias[i];
    if (params.activation == DenseActivation::Selu) {
        cache.post.resize(cache.pre.size());
        for (std::size_t i = 0; i < cache.pre.size(); ++i) cache.post[i] = selu(cache.pre[i]);
    } else {
        cache.post = softmax(cache.pre);
    }
    return cache.post;
}

inline Vector dense_forward(const DenseParams& params, const Vector& x) {
    DenseCache cache;
    return dense_forward(params, x, cache);
}

// Inverted dropout: each entry zeroed with probability rate during training,
// survivors scaled by 1/(1-rate); inference is the identity.
inline Vector apply_dropout(const Vector& x, double rate, SeededRng& rng, bool training,
                            DropoutMask& mask) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw std::invalid_argument("apply_dropout: rate must be in [0,1)");
    mask.keep_probability = 1.0 - rate;
    mask.mask.assign(x.size(), 1.0);
    Vector out = x;
    if (!training || rate == 0.0) return out;
    const double scale = 1.0 / mask.keep_probability;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (rng.uniform01() < rate) {
            mask.mask[i] = 0.0;
            out[i] = 0.0;
        } else {
            mask.mask[i] = scale;
            out[i] = x[i] * scale;
        }
    }
    return out;
}

inline Vector dropout_backward(const Vector& grad_out, const DropoutMask& mask) {
    Vector g(grad_out.size());
    for (std::size_t i = 0; i < grad_out.size(); ++i) g[i] = grad_out[i] * mask.mask[i];
    return g;
}

// -ln(p_true) with the probability clamped below at 1e-12.
inline double cross_entropy(const Vector& probabilities, const Vector& onehot) {
    if (probabilities.size() != onehot.size())
        throw std::invalid_argument("cross_entropy: length mismatch " +
                                    std::to_string(probabilities.size()) + " vs " +
                                    std::to_string(onehot.size()));
    double p_true = 0.0;
    for (std::size_t i = 0; i < onehot.size(); ++i) p_true += probabilities[i] * onehot[i];
    return -std::log(std::max(p_true, 1e-12));
}

// Gradient of softmax followed by cross-entropy, taken at the logits.
inline Vector softmax_cross_entropy_grad(const Vector& probabilities, const Vector& onehot) {
    Vector g(probabilities.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = probabilities[i] - onehot[i];
    return g;
}

// Backward through the linear part and, for SELU layers, the activation.
// For the softmax head pass the combined (p - onehot) gradient and set
// grad_is_at_pre = true.
inline DenseGrads dense_backward(const DenseParams& params, const DenseCache& cache,
                                 const Vector& grad_out, Vector& grad_input,
                                 bool grad_is_at_pre = false) {
    if (grad_out.size() != params.output_size())
        throw std::invalid_argument("dense_backward: gradient size mismatch");
    Vector dpre(grad_out.size());
    if (grad_is_at_pre || params.activation == DenseActivation::Softmax) {
        dpre = grad_out;
    } else {
        for (std::size_t i = 0; i < grad_out.size(); ++i)
            dpre[i] = grad_out[i] * selu_grad(cache.pre[i]);
    }
    DenseGrads grads;
    grads.weights = Matrix(params.output_size(), params.input_size());
    grads.bias.assign(params.output_size(), 0.0);
    for (std::size_t i = 0; i < params.output_size(); ++i) {
        double* row = grads.weights.row(i);
        for (std::size_t j = 0; j < params.input_size(); ++j) row[j] = dpre[i] * cache.input[j];
        grads.bias[i] = dpre[i];
    }
    grad_input = matvec_transposed(params.weights, dpre);
    return grads;
}

}  // namespace tdln
