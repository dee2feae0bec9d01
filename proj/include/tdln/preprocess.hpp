// Sliding-window extraction, normal-state normalization, one-hot labels and
// the stratified train/validation split.
//
// Offline windowing first partitions the series into maximal runs of
// constant label so that no emitted window ever spans a label change; runs
// shorter than the window width are dropped and counted. Online buffers
// shorter than the window width instead yield a single provisional window
// padded by repeating the last observed row.
#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tdln/matrix.hpp"
#include "tdln/rng.hpp"

namespace tdln {

struct RawSeries {
    Matrix values;            // N time steps x d channels
    std::vector<int> labels;  // length N, each in [0, class_count)
    int class_count = 0;

    std::size_t steps() const { return values.rows(); }
    std::size_t channels() const { return values.cols(); }

    void validate() const {
        if (values.rows() == 0 || values.cols() == 0)
            throw std::invalid_argument("RawSeries: empty series");
        if (labels.size() != values.rows())
            throw std::invalid_argument("RawSeries: " + std::to_string(labels.size()) +
                                        " labels for " + std::to_string(values.rows()) + " rows");
        for (int l : labels)
            if (l < 0 || l >= class_count)
                throw std::invalid_argument("RawSeries: label " + std::to_string(l) +
                                            " outside [0, " + std::to_string(class_count) + ")");
    }
};

struct WindowSpec {
    std::size_t width = 30;
    std::size_t stride = 20;

    void validate() const {
        if (width == 0 || stride == 0)
            throw std::invalid_argument("WindowSpec: width and stride must be >= 1");
    }
};

struct NormStats {
    Vector mean;
    Vector stddev;  // population standard deviation over label-0 rows
    double epsilon = 1e-8;
};

struct WindowedDataset {
    std::vector<Matrix> features;                  // each width x d
    std::vector<Vector> labels_onehot;             // each length class_count
    std::vector<int> labels;                       // argmax of the one-hot, kept for convenience
    int class_count = 0;
    std::size_t short_runs_dropped = 0;            // offline runs shorter than the window width
    std::size_t rows_in_dropped_runs = 0;

    std::size_t window_count() const { return features.size(); }
};

inline Vector one_hot(int label, int class_count) {
    if (label < 0 || label >= class_count)
        throw std::invalid_argument("one_hot: label " + std::to_string(label) +
                                    " outside [0, " + std::to_string(class_count) + ")");
    Vector v(static_cast<std::size_t>(class_count), 0.0);
    v[static_cast<std::size_t>(label)] = 1.0;
    return v;
}

// Valid start offsets 0, s, 2s, ... for windows of width w inside a run of
// n rows; floor((n - w) / s) + 1 of them, none when n < w.
inline std::vector<std::size_t> window_starts(std::size_t n, const WindowSpec& spec) {
    std::vector<std::size_t> starts;
    if (n < spec.width) return starts;
    for (std::size_t off = 0; off + spec.width <= n; off += spec.stride) starts.push_back(off);
    return starts;
}

// Maximal runs of constant label, as [begin, end) row ranges.
inline std::vector<std::pair<std::size_t, std::size_t>> label_runs(const std::vector<int>& labels) {
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= labels.size(); ++i) {
        if (i == labels.size() || labels[i] != labels[begin]) {
            runs.emplace_back(begin, i);
            begin = i;
        }
    }
    return runs;
}

inline Matrix copy_rows(const Matrix& src, std::size_t begin, std::size_t count) {
    Matrix out(count, src.cols());
    for (std::size_t r = 0; r < count; ++r)
        for (std::size_t c = 0; c < src.cols(); ++c) out(r, c) = src(begin + r, c);
    return out;
}

inline WindowedDataset extract_windows(const RawSeries& series, const WindowSpec& spec) {
    series.validate();
    spec.validate();
    WindowedDataset ds;
    ds.class_count = series.class_count;
    for (const auto& [begin, end] : label_runs(series.labels)) {
        const std::size_t run_len = end - begin;
        if (run_len < spec.width) {
            ++ds.short_runs_dropped;
            ds.rows_in_dropped_runs += run_len;
            continue;
        }
        const int label = series.labels[begin];
        for (std::size_t off : window_starts(run_len, spec)) {
            ds.features.push_back(copy_rows(series.values, begin + off, spec.width));
            ds.labels_onehot.push_back(one_hot(label, series.class_count));
            ds.labels.push_back(label);
        }
    }
    return ds;
}

struct OnlineWindow {
    Matrix rows;        // width x d, possibly padded
    std::size_t start;  // first source row index
    bool provisional;   // true when the buffer was shorter than the window width
};

// Unlabeled windowing for detection. A buffer shorter than the window width
// yields one provisional window padded by repeating the last observed row.
inline std::vector<OnlineWindow> make_online_windows(const Matrix& buffer,
                                                     const WindowSpec& spec) {
    spec.validate();
    if (buffer.rows() == 0) throw std::invalid_argument("make_online_windows: empty buffer");
    std::vector<OnlineWindow> out;
    if (buffer.rows() < spec.width) {
        Matrix padded(spec.width, buffer.cols());
        for (std::size_t r = 0; r < spec.width; ++r) {
            const std::size_t src = r < buffer.rows() ? r : buffer.rows() - 1;
            for (std::size_t c = 0; c < buffer.cols(); ++c) padded(r, c) = buffer(src, c);
        }
        out.push_back({std::move(padded), 0, true});
        return out;
    }
    for (std::size_t off : window_starts(buffer.rows(), spec))
        out.push_back({copy_rows(buffer, off, spec.width), off, false});
    return out;
}

// Per-channel mean and population std over the label-0 rows only.
inline NormStats fit_norm_stats(const RawSeries& series, double epsilon = 1e-8) {
    series.validate();
    const std::size_t d = series.channels();
    std::size_t normal_rows = 0;
    NormStats stats;
    stats.epsilon = epsilon;
    stats.mean.assign(d, 0.0);
    stats.stddev.assign(d, 0.0);
    for (std::size_t r = 0; r < series.steps(); ++r) {
        if (series.labels[r] != 0) continue;
        ++normal_rows;
        for (std::size_t c = 0; c < d; ++c) stats.mean[c] += series.values(r, c);
    }
    if (normal_rows < 2)
        throw std::invalid_argument("fit_norm_stats: need >= 2 normal-state rows, have " +
                                    std::to_string(normal_rows));
    for (double& m : stats.mean) m /= static_cast<double>(normal_rows);
    for (std::size_t r = 0; r < series.steps(); ++r) {
        if (series.labels[r] != 0) continue;
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = series.values(r, c) - stats.mean[c];
            stats.stddev[c] += diff * diff;
        }
    }
    for (double& s : stats.stddev) s = std::sqrt(s / static_cast<double>(normal_rows));
    return stats;
}

inline Matrix apply_norm(const Matrix& window, const NormStats& stats) {
    if (window.cols() != stats.mean.size())
        throw std::invalid_argument("apply_norm: window has " + std::to_string(window.cols()) +
                                    " channels, stats have " + std::to_string(stats.mean.size()));
    Matrix out(window.rows(), window.cols());
    for (std::size_t r = 0; r < window.rows(); ++r)
        for (std::size_t c = 0; c < window.cols(); ++c)
            out(r, c) = (window(r, c) - stats.mean[c]) / (stats.stddev[c] + stats.epsilon);
    return out;
}

// Inverse of apply_norm; used by tests and by callers that need original units.
inline Matrix invert_norm(const Matrix& window, const NormStats& stats) {
    Matrix out(window.rows(), window.cols());
    for (std::size_t r = 0; r < window.rows(); ++r)
        for (std::size_t c = 0; c < window.cols(); ++c)
            out(r, c) = window(r, c) * (stats.stddev[c] + stats.epsilon) + stats.mean[c];
    return out;
}

// Stratified shuffle split. Every class keeps its proportion within one
// window; both parts receive at least one window per class.
inline std::pair<WindowedDataset, WindowedDataset> split_train_val(const WindowedDataset& ds,
                                                                   double val_fraction,
                                                                   SeededRng& rng) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("split_train_val: val_fraction must be in (0,1)");
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(ds.class_count));
    for (std::size_t i = 0; i < ds.window_count(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    for (int c = 0; c < ds.class_count; ++c)
        if (by_class[static_cast<std::size_t>(c)].size() < 2)
            throw std::invalid_argument("split_train_val: class " + std::to_string(c) +
                                        " has fewer than 2 windows");

    WindowedDataset train, val;
    train.class_count = val.class_count = ds.class_count;
    train.short_runs_dropped = ds.short_runs_dropped;
    train.rows_in_dropped_runs = ds.rows_in_dropped_runs;
    for (auto& indices : by_class) {
        rng.shuffle(indices);
        const double want = val_fraction * static_cast<double>(indices.size());
        std::size_t n_val = static_cast<std::size_t>(std::llround(want));
        n_val = std::clamp<std::size_t>(n_val, 1, indices.size() - 1);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            WindowedDataset& dst = i < n_val ? val : train;
            dst.features.push_back(ds.features[indices[i]]);
            dst.labels_onehot.push_back(ds.labels_onehot[indices[i]]);
            dst.labels.push_back(ds.labels[indices[i]]);
        }
    }
    return {std::move(train), std::move(val)};
}

}  // namespace tdln
