// LSTM cell and unidirectional layer: forward pass and exact
// backpropagation through time.
//
// Gate preactivations use the concatenation [x_t, h_{t-1}] in that order.
// Initial state is h_0 = C_0 = 0; the forget-gate bias initialization is a
// separate knob (default 1.0) so freshly initialized cells start with the
// forget gate biased open.
#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdln/activations.hpp"
#include "tdln/matrix.hpp"
#include "tdln/rng.hpp"

namespace tdln {

struct LstmParams {
    Matrix w_forget, w_input, w_candidate, w_output;  // hidden x (input + hidden)
    Vector b_forget, b_input, b_candidate, b_output;  // hidden

    std::size_t hidden_size() const { return w_forget.rows(); }
    std::size_t input_size() const { return w_forget.cols() - w_forget.rows(); }
};

struct LstmState {
    Vector h;
    Vector c;
};

// Per-step record of everything the backward pass needs.
struct LstmStepCache {
    Vector z;       // [x_t, h_{t-1}]
    Vector f, i, s, o;
    Vector c;       // C_t
    Vector tanh_c;  // tanh(C_t)
    Vector h;
};

struct LstmSequenceCache {
    std::vector<LstmStepCache> steps;
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
};

struct LstmGrads {
    Matrix w_forget, w_input, w_candidate, w_output;
    Vector b_forget, b_input, b_candidate, b_output;
};

inline LstmGrads zero_grads_like(const LstmParams& p) {
    LstmGrads g;
    g.w_forget = Matrix(p.w_forget.rows(), p.w_forget.cols());
    g.w_input = g.w_candidate = g.w_output = g.w_forget;
    g.b_forget.assign(p.hidden_size(), 0.0);
    g.b_input = g.b_candidate = g.b_output = g.b_forget;
    return g;
}

// Glorot-uniform weights; forget bias set to forget_bias_init, others zero.
inline LstmParams init_lstm_params(std::size_t input_size, std::size_t hidden_size,
                                   SeededRng& rng, double forget_bias_init = 1.0) {
    const std::size_t fan_in = input_size + hidden_size;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + hidden_size));
    auto weight = [&] {
        Matrix w(hidden_size, fan_in);
        for (double& v : w.data()) v = rng.uniform(-bound, bound);
        return w;
    };
    LstmParams p;
    p.w_forget = weight();
    p.w_input = weight();
    p.w_candidate = weight();
    p.w_output = weight();
    p.b_forget.assign(hidden_size, forget_bias_init);
    p.b_input.assign(hidden_size, 0.0);
    p.b_candidate.assign(hidden_size, 0.0);
    p.b_output.assign(hidden_size, 0.0);
    return p;
}

namespace detail {
inline Vector gate_preactivation(const Matrix& w, const Vector& z, const Vector& b) {
    Vector pre = matvec(w, z);
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += b[i];
    return pre;
}
}  // namespace detail

inline LstmStepCache lstm_cell_forward(const LstmParams& params, const Vector& x,
                                       const LstmState& prev) {
    const std::size_t hidden = params.hidden_size();
    if (x.size() != params.input_size())
        throw std::invalid_argument("lstm_cell_forward: input size " + std::to_string(x.size()) +
                                    " != " + std::to_string(params.input_size()));
    if (prev.h.size() != hidden || prev.c.size() != hidden)
        throw std::invalid_argument("lstm_cell_forward: state size mismatch");

    LstmStepCache step;
    step.z.reserve(x.size() + hidden);
    step.z.insert(step.z.end(), x.begin(), x.end());
    step.z.insert(step.z.end(), prev.h.begin(), prev.h.end());

    Vector pre_f = detail::gate_preactivation(params.w_forget, step.z, params.b_forget);
    Vector pre_i = detail::gate_preactivation(params.w_input, step.z, params.b_input);
    Vector pre_s = detail::gate_preactivation(params.w_candidate, step.z, params.b_candidate);
    Vector pre_o = detail::gate_preactivation(params.w_output, step.z, params.b_output);

    step.f.resize(hidden);
    step.i.resize(hidden);
    step.s.resize(hidden);
    step.o.resize(hidden);
    step.c.resize(hidden);
    step.tanh_c.resize(hidden);
    step.h.resize(hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
        step.f[j] = sigmoid(pre_f[j]);
        step.i[j] = sigmoid(pre_i[j]);
        step.s[j] = std::tanh(pre_s[j]);
        step.c[j] = step.f[j] * prev.c[j] + step.i[j] * step.s[j];
        step.o[j] = sigmoid(pre_o[j]);
        step.tanh_c[j] = std::tanh(step.c[j]);
        step.h[j] = step.o[j] * step.tanh_c[j];
    }
    return step;
}

// Runs the cell over seq (w x input) from zero state. Returns all hidden
// states as a w x hidden matrix; take the last row for a
// final-hidden-state-only layer.
inline Matrix lstm_forward(const LstmParams& params, const Matrix& seq,
                           LstmSequenceCache& cache) {
    if (seq.rows() == 0) throw std::invalid_argument("lstm_forward: empty sequence");
    const std::size_t hidden = params.hidden_size();
    cache.steps.clear();
    cache.steps.reserve(seq.rows());
    cache.input_size = params.input_size();
    cache.hidden_size = hidden;

    LstmState state{Vector(hidden, 0.0), Vector(hidden, 0.0)};
    Matrix outputs(seq.rows(), hidden);
    Vector x(seq.cols());
    for (std::size_t t = 0; t < seq.rows(); ++t) {
        for (std::size_t c = 0; c < seq.cols(); ++c) x[c] = seq(t, c);
        cache.steps.push_back(lstm_cell_forward(params, x, state));
        const LstmStepCache& step = cache.steps.back();
        state.h = step.h;
        state.c = step.c;
        for (std::size_t j = 0; j < hidden; ++j) outputs(t, j) = step.h[j];
    }
    return outputs;
}

// BPTT. grad_out is dL/dh_t for every step (w x hidden); pass zeros except
// the last row when only the final hidden state feeds the loss. Returns
// parameter gradients and dL/dx_t as a w x input matrix.
inline LstmGrads lstm_backward(const LstmParams& params, const LstmSequenceCache& cache,
                               const Matrix& grad_out, Matrix& grad_input) {
    const std::size_t hidden = cache.hidden_size;
    const std::size_t input = cache.input_size;
    const std::size_t w = cache.steps.size();
    if (params.hidden_size() != hidden || params.input_size() != input)
        throw std::invalid_argument("lstm_backward: cache/params mismatch");
    if (grad_out.rows() != w || grad_out.cols() != hidden)
        throw std::invalid_argument("lstm_backward: upstream gradient is " + shape_str(grad_out) +
                                    ", expected " + std::to_string(w) + "x" +
                                    std::to_string(hidden));

    LstmGrads grads = zero_grads_like(params);
    grad_input = Matrix(w, input);

    Vector dh_next(hidden, 0.0);
    Vector dc_next(hidden, 0.0);
    Vector dpre_f(hidden), dpre_i(hidden), dpre_s(hidden), dpre_o(hidden), dc(hidden);
    for (std::size_t ti = w; ti-- > 0;) {
        const LstmStepCache& step = cache.steps[ti];
        const Vector* c_prev = ti > 0 ? &cache.steps[ti - 1].c : nullptr;
        for (std::size_t j = 0; j < hidden; ++j) {
            const double dh = grad_out(ti, j) + dh_next[j];
            dpre_o[j] = dh * step.tanh_c[j] * sigmoid_grad_from_output(step.o[j]);
            dc[j] = dc_next[j] + dh * step.o[j] * tanh_grad_from_output(step.tanh_c[j]);
            const double cp = c_prev ? (*c_prev)[j] : 0.0;
            dpre_f[j] = dc[j] * cp * sigmoid_grad_from_output(step.f[j]);
            dpre_i[j] = dc[j] * step.s[j] * sigmoid_grad_from_output(step.i[j]);
            dpre_s[j] = dc[j] * step.i[j] * tanh_grad_from_output(step.s[j]);
            dc_next[j] = dc[j] * step.f[j];
        }

        auto accumulate = [&](Matrix& dw, Vector& db, const Vector& dpre) {
            for (std::size_t j = 0; j < hidden; ++j) {
                const double g = dpre[j];
                double* row = dw.row(j);
                for (std::size_t k = 0; k < step.z.size(); ++k) row[k] += g * step.z[k];
                db[j] += g;
            }
        };
        accumulate(grads.w_forget, grads.b_forget, dpre_f);
        accumulate(grads.w_input, grads.b_input, dpre_i);
        accumulate(grads.w_candidate, grads.b_candidate, dpre_s);
        accumulate(grads.w_output, grads.b_output, dpre_o);

        // dz = sum over gates of W_g^T dpre_g, gates in fixed f,i,S,o order.
        Vector dz(input + hidden, 0.0);
        auto add_wt = [&](const Matrix& wm, const Vector& dpre) {
            for (std::size_t j = 0; j < hidden; ++j) {
                const double g = dpre[j];
                const double* row = wm.row(j);
                for (std::size_t k = 0; k < dz.size(); ++k) dz[k] += g * row[k];
            }
        };
        add_wt(params.w_forget, dpre_f);
        add_wt(params.w_input, dpre_i);
        add_wt(params.w_candidate, dpre_s);
        add_wt(params.w_output, dpre_o);

        for (std::size_t k = 0; k < input; ++k) grad_input(ti, k) = dz[k];
        for (std::size_t j = 0; j < hidden; ++j) dh_next[j] = dz[input + j];
    }
    return grads;
}

inline void accumulate_grads(LstmGrads& into, const LstmGrads& from) {
    auto add_m = [](Matrix& a, const Matrix& b) {
        for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
    };
    auto add_v = [](Vector& a, const Vector& b) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    };
    add_m(into.w_forget, from.w_forget);
    add_m(into.w_input, from.w_input);
    add_m(into.w_candidate, from.w_candidate);
    add_m(into.w_output, from.w_output);
    add_v(into.b_forget, from.b_forget);
    add_v(into.b_input, from.b_input);
    add_v(into.b_candidate, from.b_candidate);
    add_v(into.b_output, from.b_output);
}

}  // namespace tdln
