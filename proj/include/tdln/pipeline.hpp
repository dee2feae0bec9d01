// Offline fitting and online detection.
//
// Offline: window + normalize from the normal state, train the deep stack,
// freeze it, push the training windows back through to tap the feature layer
// and fit the forest on those features. Online routing per mode:
//   full     deep features -> forest
//   dl_only  softmax head argmax (no forest)
//   ml_only  forest on the flattened normalized window (no deep stack)
// A fitted model is immutable; detection may run concurrently on one model.
#pragma once

#include <cstdio>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdln/csv.hpp"
#include "tdln/extra_trees.hpp"
#include "tdln/matrix.hpp"
#include "tdln/metrics.hpp"
#include "tdln/network.hpp"
#include "tdln/parallel.hpp"
#include "tdln/preprocess.hpp"
#include "tdln/rng.hpp"
#include "tdln/training.hpp"

namespace tdln {

enum class Mode { Full, DlOnly, MlOnly };

inline const char* mode_name(Mode mode) {
    switch (mode) {
        case Mode::Full: return "full";
        case Mode::DlOnly: return "dl_only";
        case Mode::MlOnly: return "ml_only";
    }
    return "?";
}

inline Mode parse_mode(const std::string& name) {
    if (name == "full") return Mode::Full;
    if (name == "dl_only") return Mode::DlOnly;
    if (name == "ml_only") return Mode::MlOnly;
    throw std::invalid_argument("unknown mode '" + name +
                                "' (expected full, dl_only or ml_only)");
}

struct FitConfig {
    WindowSpec window;
    NetArchitecture arch;  // window_width/channels/class_count overwritten from the data
    TrainConfig train;
    ForestOptions forest;
    Mode mode = Mode::Full;
    int refine_rounds = 1;
    double val_fraction = 0.2;

    void validate() const {
        window.validate();
        train.validate();
        if (refine_rounds < 1)
            throw std::invalid_argument("FitConfig: refine_rounds must be >= 1");
        if (!(val_fraction > 0.0 && val_fraction < 1.0))
            throw std::invalid_argument("FitConfig: val_fraction must lie in (0,1)");
    }
};

struct TdlnModel {
    Mode mode = Mode::Full;
    WindowSpec window;
    NormStats norm;
    std::size_t channels = 0;
    int class_count = 0;
    std::optional<DeepNetParams> deep;    // full, dl_only
    std::optional<ForestModel> forest;    // full, ml_only
    std::vector<std::optional<double>> validation_detection_rate;  // per class
    TrainingCurve curve;

    void check_complete() const {
        const bool need_deep = mode != Mode::MlOnly;
        const bool need_forest = mode != Mode::DlOnly;
        if (need_deep != deep.has_value() || need_forest != forest.has_value())
            throw std::logic_error("TdlnModel: sections inconsistent with mode");
    }
};

struct Detection {
    std::size_t index = 0;  // position in the detection sequence
    std::size_t start = 0;  // first source row of the window
    int predicted = 0;
    Vector probabilities;
    bool provisional = false;
};

namespace detail {

inline Vector flatten_window(const Matrix& window) {
    Vector out(window.rows() * window.cols());
    for (std::size_t r = 0; r < window.rows(); ++r)
        for (std::size_t c = 0; c < window.cols(); ++c)
            out[r * window.cols() + c] = window(r, c);
    return out;
}

inline int argmax_label(const Vector& probs) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.size(); ++c)
        if (probs[c] > probs[best]) best = c;
    return static_cast<int>(best);
}

inline Matrix feature_matrix_deep(const DeepNetParams& deep, const std::vector<Matrix>& windows,
                                  unsigned threads) {
    Matrix out(windows.size(), deep.arch.fc2_units);
    ordered_chunked_reduce<int>(
        windows.size(), 64, threads,
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const Vector f = extract_features(deep, windows[i]);
                for (std::size_t j = 0; j < f.size(); ++j) out(i, j) = f[j];
            }
            return 0;
        },
        [](int&&) {});
    return out;
}

inline Matrix feature_matrix_flat(const std::vector<Matrix>& windows) {
    if (windows.empty()) throw std::invalid_argument("feature_matrix_flat: no windows");
    Matrix out(windows.size(), windows[0].rows() * windows[0].cols());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const Vector f = flatten_window(windows[i]);
        for (std::size_t j = 0; j < f.size(); ++j) out(i, j) = f[j];
    }
    return out;
}

}  // namespace detail

inline TdlnModel fit_offline(const RawSeries& raw, const FitConfig& config,
                             std::ostream* progress = nullptr) {
    config.validate();
    raw.validate();
    if (raw.class_count < 2)
        throw std::invalid_argument("fit_offline: need >= 2 classes including the normal state");
    bool has_normal = false;
    for (int l : raw.labels)
        if (l == 0) {
            has_normal = true;
            break;
        }
    if (!has_normal) throw std::invalid_argument("fit_offline: no normal-state (label 0) rows");

    TdlnModel model;
    model.mode = config.mode;
    model.window = config.window;
    model.channels = raw.channels();
    model.class_count = raw.class_count;
    model.norm = fit_norm_stats(raw);

    WindowedDataset all = extract_windows(raw, config.window);
    for (Matrix& w : all.features) w = apply_norm(w, model.norm);

    SeededRng split_rng(mix_seed(config.train.seed, 0x5917ULL));
    auto [train_ds, val_ds] = split_train_val(all, config.val_fraction, split_rng);

    std::vector<int> val_predictions;
    if (config.mode == Mode::MlOnly) {
        const Matrix train_features = detail::feature_matrix_flat(train_ds.features);
        ForestOptions forest_cfg = config.forest;
        forest_cfg.seed = mix_seed(config.train.seed, 0xF0BE57ULL);
        forest_cfg.threads = config.train.threads;
        model.forest = fit_forest(train_features, train_ds.labels, model.class_count, forest_cfg);
        for (const Matrix& w : val_ds.features)
            val_predictions.push_back(
                predict_forest(*model.forest, detail::flatten_window(w)).label);
    } else {
        NetArchitecture arch = config.arch;
        arch.window_width = config.window.width;
        arch.channels = raw.channels();
        arch.class_count = raw.class_count;

        auto [params, curve] = train(train_ds, val_ds, arch, config.train, progress);
        for (int round = 1; round < config.refine_rounds; ++round) {
            TrainConfig round_cfg = config.train;
            round_cfg.seed = mix_seed(config.train.seed, 0x2E7ULL + static_cast<std::uint64_t>(round));
            TrainingCurve more = train_loop(params, train_ds, val_ds, round_cfg, progress);
            curve.train_accuracy.insert(curve.train_accuracy.end(), more.train_accuracy.begin(),
                                        more.train_accuracy.end());
            curve.train_loss.insert(curve.train_loss.end(), more.train_loss.begin(),
                                    more.train_loss.end());
            curve.val_accuracy.insert(curve.val_accuracy.end(), more.val_accuracy.begin(),
                                      more.val_accuracy.end());
            curve.val_loss.insert(curve.val_loss.end(), more.val_loss.begin(), more.val_loss.end());
            curve.seconds.insert(curve.seconds.end(), more.seconds.begin(), more.seconds.end());
        }
        model.curve = std::move(curve);
        model.deep = std::move(params);

        if (config.mode == Mode::Full) {
            const Matrix train_features =
                detail::feature_matrix_deep(*model.deep, train_ds.features, config.train.threads);
            if (train_features.cols() != model.deep->arch.fc2_units)
                throw std::logic_error("fit_offline: feature width disagrees with forest input");
            ForestOptions forest_cfg = config.forest;
            forest_cfg.seed = mix_seed(config.train.seed, 0xF0BE57ULL);
            forest_cfg.threads = config.train.threads;
            model.forest =
                fit_forest(train_features, train_ds.labels, model.class_count, forest_cfg);
            const Matrix val_features =
                detail::feature_matrix_deep(*model.deep, val_ds.features, config.train.threads);
            for (std::size_t i = 0; i < val_features.rows(); ++i) {
                Vector row(val_features.row(i), val_features.row(i) + val_features.cols());
                val_predictions.push_back(predict_forest(*model.forest, row).label);
            }
        } else {
            NetForwardCache cache;
            SeededRng unused(0);
            for (const Matrix& w : val_ds.features)
                val_predictions.push_back(
                    detail::argmax_label(net_forward(*model.deep, w, false, unused, cache)));
        }
    }

    const ConfusionMatrix cm =
        build_confusion(val_predictions, val_ds.labels, model.class_count);
    model.validation_detection_rate = detection_rate_per_class(cm);
    model.check_complete();
    return model;
}

// Pure given (model, buffer); no state is carried across windows.
inline std::vector<Detection> detect_online(const TdlnModel& model, const Matrix& buffer) {
    model.check_complete();
    if (buffer.cols() != model.channels)
        throw std::invalid_argument("detect_online: buffer has " + std::to_string(buffer.cols()) +
                                    " channels, model expects " + std::to_string(model.channels));
    std::vector<Detection> out;
    NetForwardCache cache;
    SeededRng unused(0);
    for (const OnlineWindow& win : make_online_windows(buffer, model.window)) {
        const Matrix normalized = apply_norm(win.rows, model.norm);
        Detection det;
        det.index = out.size();
        det.start = win.start;
        det.provisional = win.provisional;
        switch (model.mode) {
            case Mode::Full: {
                const ForestPrediction pred =
                    predict_forest(*model.forest, extract_features(*model.deep, normalized));
                det.predicted = pred.label;
                det.probabilities = pred.probabilities;
                break;
            }
            case Mode::DlOnly: {
                det.probabilities = net_forward(*model.deep, normalized, false, unused, cache);
                det.predicted = detail::argmax_label(det.probabilities);
                break;
            }
            case Mode::MlOnly: {
                const ForestPrediction pred =
                    predict_forest(*model.forest, detail::flatten_window(normalized));
                det.predicted = pred.label;
                det.probabilities = pred.probabilities;
                break;
            }
        }
        out.push_back(std::move(det));
    }
    return out;
}

// Detection CSV: a `#` metadata line carrying the windowing the detections
// were made with, then `start,predicted,p0..p{K-1},provisional`.
inline void write_detections_csv(std::ostream& os, const TdlnModel& model,
                                 const std::vector<Detection>& detections) {
    os << "# tdln detections w=" << model.window.width << " s=" << model.window.stride
       << " classes=" << model.class_count << " channels=" << model.channels << "\n";
    std::string line = "start,predicted";
    for (int c = 0; c < model.class_count; ++c) line += ",p" + std::to_string(c);
    line += ",provisional\n";
    os << line;
    for (const Detection& d : detections) {
        line = std::to_string(d.start) + "," + std::to_string(d.predicted);
        for (double p : d.probabilities) {
            line += ',';
            detail::append_double(line, p);
        }
        line += d.provisional ? ",1\n" : ",0\n";
        os << line;
    }
}

struct DetectionFile {
    WindowSpec window;
    int class_count = 0;
    std::size_t channels = 0;
    std::vector<Detection> detections;
};

inline DetectionFile read_detections_csv(std::istream& is, const std::string& source) {
    std::string line;
    if (!std::getline(is, line)) detail::csv_fail(source, 1, "empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    DetectionFile out;
    unsigned long long w = 0, s = 0;
    int classes = 0;
    unsigned long long channels = 0;
    if (std::sscanf(line.c_str(), "# tdln detections w=%llu s=%llu classes=%d channels=%llu", &w,
                    &s, &classes, &channels) != 4)
        detail::csv_fail(source, 1, "missing detection metadata line");
    out.window.width = w;
    out.window.stride = s;
    out.class_count = classes;
    out.channels = channels;
    if (classes < 1) detail::csv_fail(source, 1, "bad class count");

    if (!std::getline(is, line)) detail::csv_fail(source, 2, "missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string expect = "start,predicted";
    for (int c = 0; c < classes; ++c) expect += ",p" + std::to_string(c);
    expect += ",provisional";
    if (line != expect) detail::csv_fail(source, 2, "unexpected header '" + line + "'");

    std::vector<std::string_view> fields;
    std::size_t line_no = 2;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        detail::split_fields(line, fields);
        if (fields.size() != static_cast<std::size_t>(classes) + 3)
            detail::csv_fail(source, line_no, "wrong field count");
        Detection d;
        d.index = out.detections.size();
        d.start = static_cast<std::size_t>(detail::parse_int_field(fields[0], source, line_no));
        d.predicted = static_cast<int>(detail::parse_int_field(fields[1], source, line_no));
        if (d.predicted < 0 || d.predicted >= classes)
            detail::csv_fail(source, line_no, "predicted class out of range");
        d.probabilities.resize(static_cast<std::size_t>(classes));
        for (int c = 0; c < classes; ++c)
            d.probabilities[static_cast<std::size_t>(c)] =
                detail::parse_double_field(fields[static_cast<std::size_t>(c) + 2], source,
                                           line_no);
        const long prov = detail::parse_int_field(fields.back(), source, line_no);
        if (prov != 0 && prov != 1) detail::csv_fail(source, line_no, "bad provisional flag");
        d.provisional = prov == 1;
        out.detections.push_back(std::move(d));
    }
    return out;
}

// Ground truth for a detection window: the run label when the window's source
// rows are label-homogeneous. Mixed windows and provisional (padded) windows
// are excluded from metrics, with counts reported.
struct AlignedTruth {
    std::vector<int> predicted;
    std::vector<int> actual;
    Matrix probabilities;  // rows align with predicted/actual
    std::size_t mixed_excluded = 0;
    std::size_t provisional_excluded = 0;
    std::size_t out_of_range_excluded = 0;
};

inline AlignedTruth align_detections(const DetectionFile& file, const RawSeries& truth) {
    AlignedTruth out;
    std::vector<std::size_t> kept;
    for (const Detection& d : file.detections) {
        if (d.provisional) {
            ++out.provisional_excluded;
            continue;
        }
        if (d.start + file.window.width > truth.steps()) {
            ++out.out_of_range_excluded;
            continue;
        }
        const int label = truth.labels[d.start];
        bool homogeneous = true;
        for (std::size_t r = d.start + 1; r < d.start + file.window.width; ++r)
            if (truth.labels[r] != label) {
                homogeneous = false;
                break;
            }
        if (!homogeneous) {
            ++out.mixed_excluded;
            continue;
        }
        out.predicted.push_back(d.predicted);
        out.actual.push_back(label);
        kept.push_back(d.index);
    }
    out.probabilities = Matrix(kept.size(), static_cast<std::size_t>(file.class_count));
    for (std::size_t i = 0; i < kept.size(); ++i) {
        const Vector& p = file.detections[kept[i]].probabilities;
        for (std::size_t c = 0; c < p.size(); ++c) out.probabilities(i, c) = p[c];
    }
    return out;
}

}  // namespace tdln
