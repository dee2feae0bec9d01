// Mini-batch Adam training of the deep network.
//
// Fully deterministic under a fixed seed: epoch shuffles come from the
// config seed, each sample's dropout generator is derived from
// (seed, epoch, position), and batch gradients are reduced in fixed sample
// order regardless of the thread count.
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tdln/network.hpp"
#include "tdln/parallel.hpp"
#include "tdln/preprocess.hpp"

namespace tdln {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 1024;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 1;
    bool keep_best_checkpoint = false;  // off: the final epoch's parameters are returned
    unsigned threads = 0;               // 0 = all available cores

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
        if (!(learning_rate > 0.0))
            throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    }
};

struct AdamState {
    Vector m, v;
    std::uint64_t step = 0;
};

inline AdamState init_adam_state(DeepNetParams& params) {
    AdamState s;
    s.m.assign(total_param_count(params), 0.0);
    s.v.assign(total_param_count(params), 0.0);
    return s;
}

struct TrainingCurve {
    std::vector<double> train_accuracy, train_loss;
    std::vector<double> val_accuracy, val_loss;
    std::vector<double> seconds;
};

// One bias-corrected Adam update over the shared parameter traversal order.
inline void adam_step(DeepNetParams& params, NetGrads& grads, AdamState& state,
                      const TrainConfig& config) {
    auto param_refs = collect_params(params);
    auto grad_refs = collect_params(grads);
    ++state.step;
    const double bc1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(state.step));
    std::size_t offset = 0;
    for (std::size_t r = 0; r < param_refs.size(); ++r) {
        Vector& theta = *param_refs[r].values;
        const Vector& g = *grad_refs[r].values;
        if (theta.size() != g.size())
            throw std::invalid_argument("adam_step: shape mismatch at " + param_refs[r].name);
        for (std::size_t i = 0; i < theta.size(); ++i, ++offset) {
            double& m = state.m[offset];
            double& v = state.v[offset];
            m = config.adam_beta1 * m + (1.0 - config.adam_beta1) * g[i];
            v = config.adam_beta2 * v + (1.0 - config.adam_beta2) * g[i] * g[i];
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            theta[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
        }
    }
}

struct EpochMetrics {
    double accuracy = 0.0;
    double mean_loss = 0.0;
};

// Accuracy (argmax of the softmax vs argmax of the one-hot, ties to the
// lower index) and mean cross-entropy, dropout disabled.
inline EpochMetrics evaluate_epoch(const DeepNetParams& params, const WindowedDataset& ds,
                                   unsigned threads = 0) {
    if (ds.window_count() == 0) throw std::invalid_argument("evaluate_epoch: empty dataset");
    struct Chunk {
        Vector losses;
        std::size_t correct = 0;
    };
    double loss_sum = 0.0;
    std::size_t correct = 0;
    ordered_chunked_reduce<Chunk>(
        ds.window_count(), 64, threads,
        [&](std::size_t begin, std::size_t end) {
            Chunk out;
            NetForwardCache cache;
            SeededRng unused(0);
            for (std::size_t i = begin; i < end; ++i) {
                const Vector& p = net_forward(params, ds.features[i], false, unused, cache);
                out.losses.push_back(cross_entropy(p, ds.labels_onehot[i]));
                std::size_t argmax = 0;
                for (std::size_t j = 1; j < p.size(); ++j)
                    if (p[j] > p[argmax]) argmax = j;
                if (static_cast<int>(argmax) == ds.labels[i]) ++out.correct;
            }
            return out;
        },
        [&](Chunk&& c) {
            for (double l : c.losses) loss_sum += l;
            correct += c.correct;
        });
    EpochMetrics m;
    m.accuracy = static_cast<double>(correct) / static_cast<double>(ds.window_count());
    m.mean_loss = loss_sum / static_cast<double>(ds.window_count());
    return m;
}

// Progress line format (tab-separated, one per epoch, to the given stream):
// epoch <TAB> train_acc <TAB> train_loss <TAB> val_acc <TAB> val_loss <TAB> seconds
inline TrainingCurve train_loop(DeepNetParams& params, const WindowedDataset& train_ds,
                                const WindowedDataset& val_ds, const TrainConfig& config,
                                std::ostream* progress = &std::cerr) {
    config.validate();
    if (train_ds.window_count() == 0 || val_ds.window_count() == 0)
        throw std::invalid_argument("train: empty dataset");
    for (const Matrix& f : train_ds.features)
        if (f.rows() != params.arch.window_width || f.cols() != params.arch.channels)
            throw std::invalid_argument("train: window shape " + shape_str(f) +
                                        " does not match architecture");

    AdamState adam = init_adam_state(params);
    SeededRng shuffle_rng(config.seed);
    TrainingCurve curve;
    DeepNetParams best = params;
    double best_val_acc = -1.0;

    std::vector<std::size_t> order(train_ds.window_count());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    struct Chunk {
        NetGrads grads;
        Vector losses;
    };

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);
        const std::uint64_t epoch_seed = mix_seed(config.seed, 0xE70C0000ULL + epoch);

        for (std::size_t batch_start = 0, batch_idx = 0; batch_start < order.size();
             batch_start += config.batch_size, ++batch_idx) {
            const std::size_t batch_end =
                std::min(batch_start + config.batch_size, order.size());
            const std::size_t batch_n = batch_end - batch_start;

            NetGrads total = zero_net_grads(params);
            double batch_loss = 0.0;
            ordered_chunked_reduce<Chunk>(
                batch_n, 16, config.threads,
                [&](std::size_t begin, std::size_t end) {
                    Chunk out;
                    out.grads = zero_net_grads(params);
                    NetForwardCache cache;
                    for (std::size_t k = begin; k < end; ++k) {
                        const std::size_t i = order[batch_start + k];
                        SeededRng dropout_rng(mix_seed(epoch_seed, batch_start + k));
                        const Vector& p =
                            net_forward(params, train_ds.features[i], true, dropout_rng, cache);
                        out.losses.push_back(cross_entropy(p, train_ds.labels_onehot[i]));
                        accumulate_net_grads(out.grads,
                                             net_backward(params, cache, train_ds.labels_onehot[i]));
                    }
                    return out;
                },
                [&](Chunk&& c) {
                    for (double l : c.losses) batch_loss += l;
                    accumulate_net_grads(total, c.grads);
                });

            batch_loss /= static_cast<double>(batch_n);
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + " batch " +
                                         std::to_string(batch_idx));
            const double scale = 1.0 / static_cast<double>(batch_n);
            for (ParamRef& ref : collect_params(total))
                for (double& g : *ref.values) g *= scale;
            adam_step(params, total, adam, config);
        }

        const EpochMetrics train_m = evaluate_epoch(params, train_ds, config.threads);
        const EpochMetrics val_m = evaluate_epoch(params, val_ds, config.threads);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        curve.train_accuracy.push_back(train_m.accuracy);
        curve.train_loss.push_back(train_m.mean_loss);
        curve.val_accuracy.push_back(val_m.accuracy);
        curve.val_loss.push_back(val_m.mean_loss);
        curve.seconds.push_back(secs);
        if (progress)
            *progress << epoch << '\t' << train_m.accuracy << '\t' << train_m.mean_loss << '\t'
                      << val_m.accuracy << '\t' << val_m.mean_loss << '\t' << secs << '\n';
        if (val_m.accuracy > best_val_acc) {
            best_val_acc = val_m.accuracy;
            if (config.keep_best_checkpoint) best = params;
        }
    }
    if (config.keep_best_checkpoint) params = best;
    return curve;
}

inline std::pair<DeepNetParams, TrainingCurve> train(const WindowedDataset& train_ds,
                                                     const WindowedDataset& val_ds,
                                                     const NetArchitecture& arch,
                                                     const TrainConfig& config,
                                                     std::ostream* progress = &std::cerr) {
    SeededRng init_rng(mix_seed(config.seed, 0x1217ULL));
    DeepNetParams params = init_deep_net(arch, init_rng);
    TrainingCurve curve = train_loop(params, train_ds, val_ds, config, progress);
    return {std::move(params), std::move(curve)};
}

}  // namespace tdln
