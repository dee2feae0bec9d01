// Bidirectional LSTM layer: a forward-time pass and a reverse-time pass over
// the same input, concatenated per time step with the forward half first.
#pragma once

#include <stdexcept>
#include <utility>

#include "tdln/lstm.hpp"

namespace tdln {

struct BlstmParams {
    LstmParams forward_cell;
    LstmParams reverse_cell;

    std::size_t hidden_size() const { return forward_cell.hidden_size(); }
    std::size_t input_size() const { return forward_cell.input_size(); }
};

struct BlstmGrads {
    LstmGrads forward_cell;
    LstmGrads reverse_cell;
};

struct BlstmCache {
    LstmSequenceCache forward_cache;
    LstmSequenceCache reverse_cache;  // computed over the time-reversed input
};

inline BlstmParams init_blstm_params(std::size_t input_size, std::size_t hidden_size,
                                     SeededRng& rng, double forget_bias_init = 1.0) {
    BlstmParams p;
    p.forward_cell = init_lstm_params(input_size, hidden_size, rng, forget_bias_init);
    p.reverse_cell = init_lstm_params(input_size, hidden_size, rng, forget_bias_init);
    return p;
}

inline Matrix reverse_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(m.rows() - 1 - r, c);
    return out;
}

// H_t = [h_t^F, h_t^R]; output is w x 2*hidden.
inline Matrix blstm_forward(const BlstmParams& params, const Matrix& seq, BlstmCache& cache) {
    if (params.forward_cell.hidden_size() != params.reverse_cell.hidden_size())
        throw std::invalid_argument("blstm_forward: direction hidden sizes differ");
    const std::size_t hidden = params.hidden_size();
    const Matrix fwd = lstm_forward(params.forward_cell, seq, cache.forward_cache);
    const Matrix rev = lstm_forward(params.reverse_cell, reverse_rows(seq), cache.reverse_cache);
    Matrix out(seq.rows(), 2 * hidden);
    for (std::size_t t = 0; t < seq.rows(); ++t) {
        for (std::size_t j = 0; j < hidden; ++j) {
            out(t, j) = fwd(t, j);
            out(t, hidden + j) = rev(seq.rows() - 1 - t, j);
        }
    }
    return out;
}

// Splits the concatenated upstream gradient into halves, runs BPTT per
// direction, and folds the reverse-direction input gradient back into
// original time order.
inline BlstmGrads blstm_backward(const BlstmParams& params, const BlstmCache& cache,
                                 const Matrix& grad_out, Matrix& grad_input) {
    const std::size_t hidden = params.hidden_size();
    const std::size_t w = cache.forward_cache.steps.size();
    if (grad_out.rows() != w || grad_out.cols() != 2 * hidden)
        throw std::invalid_argument("blstm_backward: upstream gradient is " +
                                    shape_str(grad_out) + ", expected " + std::to_string(w) +
                                    "x" + std::to_string(2 * hidden));

    Matrix grad_fwd(w, hidden);
    Matrix grad_rev(w, hidden);  // indexed in reversed time, matching reverse_cache
    for (std::size_t t = 0; t < w; ++t)
        for (std::size_t j = 0; j < hidden; ++j) {
            grad_fwd(t, j) = grad_out(t, j);
            grad_rev(w - 1 - t, j) = grad_out(t, hidden + j);
        }

    BlstmGrads grads;
    Matrix grad_input_rev;
    grads.forward_cell = lstm_backward(params.forward_cell, cache.forward_cache, grad_fwd,
                                       grad_input);
    grads.reverse_cell = lstm_backward(params.reverse_cell, cache.reverse_cache, grad_rev,
                                       grad_input_rev);
    for (std::size_t t = 0; t < w; ++t)
        for (std::size_t c = 0; c < grad_input.cols(); ++c)
            grad_input(t, c) += grad_input_rev(w - 1 - t, c);
    return grads;
}

}  // namespace tdln
