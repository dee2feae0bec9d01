// The assembled deep feature extractor: BLSTM -> LSTM -> FCNN -> softmax.
//
// Layer sizes follow the published architecture (input w x d, BLSTM hidden
// per direction, LSTM hidden, two SELU layers with dropout after the first,
// softmax head over the class count). The post-activation output of the
// second SELU layer is the feature vector handed to the tree ensemble.
#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "tdln/blstm.hpp"
#include "tdln/dense.hpp"
#include "tdln/lstm.hpp"
#include "tdln/matrix.hpp"
#include "tdln/preprocess.hpp"
#include "tdln/rng.hpp"

namespace tdln {

struct NetArchitecture {
    std::size_t window_width = 30;
    std::size_t channels = 52;
    std::size_t blstm_hidden = 128;  // per direction
    std::size_t lstm_hidden = 128;
    std::size_t fc1_units = 500;
    std::size_t fc2_units = 180;  // feature layer
    int class_count = 18;
    double dropout_rate = 0.4;
    double forget_bias_init = 1.0;
};

struct DeepNetParams {
    NetArchitecture arch;
    BlstmParams blstm;
    LstmParams lstm;
    DenseParams fc1, fc2, head;
};

struct NetGrads {
    BlstmGrads blstm;
    LstmGrads lstm;
    DenseGrads fc1, fc2, head;
};

struct NetForwardCache {
    BlstmCache blstm;
    Matrix blstm_out;  // w x 2*blstm_hidden
    LstmSequenceCache lstm;
    Vector lstm_last;
    DenseCache fc1, fc2, head;
    DropoutMask dropout;
    Vector probs;
};

inline DeepNetParams init_deep_net(const NetArchitecture& arch, SeededRng& rng) {
    DeepNetParams p;
    p.arch = arch;
    p.blstm = init_blstm_params(arch.channels, arch.blstm_hidden, rng, arch.forget_bias_init);
    p.lstm = init_lstm_params(2 * arch.blstm_hidden, arch.lstm_hidden, rng,
                              arch.forget_bias_init);
    p.fc1 = init_dense_params(arch.lstm_hidden, arch.fc1_units, DenseActivation::Selu, rng);
    p.fc2 = init_dense_params(arch.fc1_units, arch.fc2_units, DenseActivation::Selu, rng);
    p.head = init_dense_params(arch.fc2_units, static_cast<std::size_t>(arch.class_count),
                               DenseActivation::Softmax, rng);
    return p;
}

// Full forward pass. Dropout draws from rng only when training is set;
// inference never touches the rng.
inline const Vector& net_forward(const DeepNetParams& params, const Matrix& window,
                                 bool training, SeededRng& rng, NetForwardCache& cache) {
    if (window.rows() != params.arch.window_width || window.cols() != params.arch.channels)
        throw std::invalid_argument("net_forward: window is " + shape_str(window) +
                                    ", expected " + std::to_string(params.arch.window_width) +
                                    "x" + std::to_string(params.arch.channels));
    cache.blstm_out = blstm_forward(params.blstm, window, cache.blstm);
    const Matrix lstm_out = lstm_forward(params.lstm, cache.blstm_out, cache.lstm);
    cache.lstm_last.assign(lstm_out.row(lstm_out.rows() - 1),
                           lstm_out.row(lstm_out.rows() - 1) + lstm_out.cols());
    const Vector fc1_out = dense_forward(params.fc1, cache.lstm_last, cache.fc1);
    const Vector dropped =
        apply_dropout(fc1_out, params.arch.dropout_rate, rng, training, cache.dropout);
    const Vector features = dense_forward(params.fc2, dropped, cache.fc2);
    cache.probs = dense_forward(params.head, features, cache.head);
    return cache.probs;
}

// 180-dimensional (fc2_units) deep feature vector with dropout disabled.
inline Vector extract_features(const DeepNetParams& params, const Matrix& window) {
    NetForwardCache cache;
    SeededRng unused(0);
    net_forward(params, window, /*training=*/false, unused, cache);
    return cache.fc2.post;
}

inline NetGrads net_backward(const DeepNetParams& params, const NetForwardCache& cache,
                             const Vector& onehot) {
    NetGrads grads;
    const Vector dlogits = softmax_cross_entropy_grad(cache.probs, onehot);
    Vector dfeatures;
    grads.head = dense_backward(params.head, cache.head, dlogits, dfeatures,
                                /*grad_is_at_pre=*/true);
    Vector ddropped;
    grads.fc2 = dense_backward(params.fc2, cache.fc2, dfeatures, ddropped);
    const Vector dfc1 = dropout_backward(ddropped, cache.dropout);
    Vector dlstm_last;
    grads.fc1 = dense_backward(params.fc1, cache.fc1, dfc1, dlstm_last);

    Matrix dlstm_out(cache.lstm.steps.size(), params.arch.lstm_hidden);
    for (std::size_t j = 0; j < dlstm_last.size(); ++j)
        dlstm_out(dlstm_out.rows() - 1, j) = dlstm_last[j];
    Matrix dblstm_out;
    grads.lstm = lstm_backward(params.lstm, cache.lstm, dlstm_out, dblstm_out);
    Matrix dinput;
    grads.blstm = blstm_backward(params.blstm, cache.blstm, dblstm_out, dinput);
    return grads;
}

inline NetGrads zero_net_grads(const DeepNetParams& p) {
    NetGrads g;
    g.blstm.forward_cell = zero_grads_like(p.blstm.forward_cell);
    g.blstm.reverse_cell = zero_grads_like(p.blstm.reverse_cell);
    g.lstm = zero_grads_like(p.lstm);
    auto zero_dense = [](const DenseParams& d) {
        DenseGrads z;
        z.weights = Matrix(d.output_size(), d.input_size());
        z.bias.assign(d.output_size(), 0.0);
        return z;
    };
    g.fc1 = zero_dense(p.fc1);
    g.fc2 = zero_dense(p.fc2);
    g.head = zero_dense(p.head);
    return g;
}

inline void accumulate_net_grads(NetGrads& into, const NetGrads& from) {
    accumulate_grads(into.blstm.forward_cell, from.blstm.forward_cell);
    accumulate_grads(into.blstm.reverse_cell, from.blstm.reverse_cell);
    accumulate_grads(into.lstm, from.lstm);
    auto add_dense = [](DenseGrads& a, const DenseGrads& b) {
        for (std::size_t i = 0; i < a.weights.size(); ++i)
            a.weights.data()[i] += b.weights.data()[i];
        for (std::size_t i = 0; i < a.bias.size(); ++i) a.bias[i] += b.bias[i];
    };
    add_dense(into.fc1, from.fc1);
    add_dense(into.fc2, from.fc2);
    add_dense(into.head, from.head);
}

// Named reference to one parameter tensor; rows == 0 marks a bias vector.
struct ParamRef {
    std::string name;
    Vector* values;
    std::size_t rows;
    std::size_t cols;
};

namespace detail {
template <typename LstmLike>
inline void collect_lstm(const std::string& prefix, LstmLike& p, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".w_forget", &p.w_forget.data(), p.w_forget.rows(), p.w_forget.cols()});
    out.push_back({prefix + ".w_input", &p.w_input.data(), p.w_input.rows(), p.w_input.cols()});
    out.push_back({prefix + ".w_candidate", &p.w_candidate.data(), p.w_candidate.rows(),
                   p.w_candidate.cols()});
    out.push_back({prefix + ".w_output", &p.w_output.data(), p.w_output.rows(), p.w_output.cols()});
    out.push_back({prefix + ".b_forget", &p.b_forget, 0, p.b_forget.size()});
    out.push_back({prefix + ".b_input", &p.b_input, 0, p.b_input.size()});
    out.push_back({prefix + ".b_candidate", &p.b_candidate, 0, p.b_candidate.size()});
    out.push_back({prefix + ".b_output", &p.b_output, 0, p.b_output.size()});
}

template <typename DenseLike>
inline void collect_dense(const std::string& prefix, DenseLike& p, std::vector<ParamRef>& out) {
    out.push_back({prefix + ".weights", &p.weights.data(), p.weights.rows(), p.weights.cols()});
    out.push_back({prefix + ".bias", &p.bias, 0, p.bias.size()});
}
}  // namespace detail

// Fixed traversal order shared by the optimizer, the serializer and the
// gradient checker. NetGrads mirrors DeepNetParams field for field, so the
// same order applies to both.
inline std::vector<ParamRef> collect_params(DeepNetParams& p) {
    std::vector<ParamRef> out;
    detail::collect_lstm("blstm.forward", p.blstm.forward_cell, out);
    detail::collect_lstm("blstm.reverse", p.blstm.reverse_cell, out);
    detail::collect_lstm("lstm", p.lstm, out);
    detail::collect_dense("fc1", p.fc1, out);
    detail::collect_dense("fc2", p.fc2, out);
    detail::collect_dense("head", p.head, out);
    return out;
}

inline std::vector<ParamRef> collect_params(NetGrads& g) {
    std::vector<ParamRef> out;
    detail::collect_lstm("blstm.forward", g.blstm.forward_cell, out);
    detail::collect_lstm("blstm.reverse", g.blstm.reverse_cell, out);
    detail::collect_lstm("lstm", g.lstm, out);
    detail::collect_dense("fc1", g.fc1, out);
    detail::collect_dense("fc2", g.fc2, out);
    detail::collect_dense("head", g.head, out);
    return out;
}

inline std::size_t total_param_count(DeepNetParams& p) {
    std::size_t n = 0;
    for (const ParamRef& ref : collect_params(p)) n += ref.values->size();
    return n;
}

}  // namespace tdln
