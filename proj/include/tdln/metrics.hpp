// Detection quality metrics.
//
// Confusion matrices are indexed (predicted row, actual column). Per-class
// precision is TP/(TP+FP) and detection rate is TP/(TP+FN); a zero
// denominator yields an undefined marker rather than zero, and undefined
// entries are excluded from macro averages with the exclusion counted. ROC
// curves group tied scores into a single threshold step, so the trapezoidal
// AUC equals the tie-aware pair-counting statistic.
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdln/matrix.hpp"

namespace tdln {

struct ConfusionMatrix {
    std::size_t class_count = 0;
    std::vector<std::uint64_t> counts;  // row-major, rows = predicted

    explicit ConfusionMatrix(std::size_t classes = 0)
        : class_count(classes), counts(classes * classes, 0) {}

    std::uint64_t& at(std::size_t predicted, std::size_t actual) {
        return counts[predicted * class_count + actual];
    }
    std::uint64_t at(std::size_t predicted, std::size_t actual) const {
        return counts[predicted * class_count + actual];
    }
    std::uint64_t predicted_total(std::size_t cls) const {
        std::uint64_t sum = 0;
        for (std::size_t a = 0; a < class_count; ++a) sum += at(cls, a);
        return sum;
    }
    std::uint64_t actual_total(std::size_t cls) const {
        std::uint64_t sum = 0;
        for (std::size_t p = 0; p < class_count; ++p) sum += at(p, cls);
        return sum;
    }
    std::uint64_t total() const {
        std::uint64_t sum = 0;
        for (std::uint64_t c : counts) sum += c;
        return sum;
    }
};

inline ConfusionMatrix build_confusion(const std::vector<int>& predicted,
                                       const std::vector<int>& actual, int class_count) {
    if (predicted.size() != actual.size())
        throw std::invalid_argument("build_confusion: size mismatch");
    ConfusionMatrix cm(static_cast<std::size_t>(class_count));
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] < 0 || predicted[i] >= class_count || actual[i] < 0 ||
            actual[i] >= class_count)
            throw std::invalid_argument("build_confusion: label out of range at sample " +
                                        std::to_string(i));
        ++cm.at(static_cast<std::size_t>(predicted[i]), static_cast<std::size_t>(actual[i]));
    }
    return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw std::invalid_argument("accuracy: empty confusion matrix");
    std::uint64_t hit = 0;
    for (std::size_t c = 0; c < cm.class_count; ++c) hit += cm.at(c, c);
    return static_cast<double>(hit) / static_cast<double>(total);
}

// TP / (TP + FP); undefined when the class was never predicted.
inline std::vector<std::optional<double>> precision_per_class(const ConfusionMatrix& cm) {
    std::vector<std::optional<double>> out(cm.class_count);
    for (std::size_t c = 0; c < cm.class_count; ++c) {
        const std::uint64_t denom = cm.predicted_total(c);
        if (denom > 0)
            out[c] = static_cast<double>(cm.at(c, c)) / static_cast<double>(denom);
    }
    return out;
}

// Detection rate TP / (TP + FN); undefined when the class never occurs.
inline std::vector<std::optional<double>> detection_rate_per_class(const ConfusionMatrix& cm) {
    std::vector<std::optional<double>> out(cm.class_count);
    for (std::size_t c = 0; c < cm.class_count; ++c) {
        const std::uint64_t denom = cm.actual_total(c);
        if (denom > 0)
            out[c] = static_cast<double>(cm.at(c, c)) / static_cast<double>(denom);
    }
    return out;
}

struct MacroStat {
    std::optional<double> value;
    std::size_t included = 0;
    std::size_t excluded = 0;
};

inline MacroStat macro_average(const std::vector<std::optional<double>>& values,
                               std::size_t first_class = 0) {
    MacroStat stat;
    double sum = 0.0;
    for (std::size_t c = first_class; c < values.size(); ++c) {
        if (values[c]) {
            sum += *values[c];
            ++stat.included;
        } else {
            ++stat.excluded;
        }
    }
    if (stat.included > 0) stat.value = sum / static_cast<double>(stat.included);
    return stat;
}

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

// Threshold sweep from +inf down; tied scores advance as one step. Requires
// at least one positive and one negative sample.
inline std::optional<std::vector<RocPoint>> roc_curve(const Vector& scores,
                                                      const std::vector<int>& positive) {
    if (scores.size() != positive.size())
        throw std::invalid_argument("roc_curve: size mismatch");
    std::uint64_t pos = 0, neg = 0;
    for (int p : positive) (p ? pos : neg) += 1;
    if (pos == 0 || neg == 0) return std::nullopt;

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<RocPoint> points;
    points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::uint64_t tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double score = scores[order[i]];
        while (i < order.size() && scores[order[i]] == score) {
            (positive[order[i]] ? tp : fp) += 1;
            ++i;
        }
        points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos), score});
    }
    return points;
}

inline double auc_trapezoid(const std::vector<RocPoint>& points) {
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
        area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
    return area;
}

inline std::optional<double> roc_auc(const Vector& scores, const std::vector<int>& positive) {
    const auto curve = roc_curve(scores, positive);
    if (!curve) return std::nullopt;
    return auc_trapezoid(*curve);
}

// One-vs-rest AUC per class from an N x C probability matrix.
inline std::vector<std::optional<double>> auc_per_class(const Matrix& probabilities,
                                                        const std::vector<int>& actual) {
    if (probabilities.rows() != actual.size())
        throw std::invalid_argument("auc_per_class: size mismatch");
    std::vector<std::optional<double>> out(probabilities.cols());
    Vector scores(probabilities.rows());
    std::vector<int> positive(probabilities.rows());
    for (std::size_t c = 0; c < probabilities.cols(); ++c) {
        for (std::size_t n = 0; n < probabilities.rows(); ++n) {
            scores[n] = probabilities(n, c);
            positive[n] = actual[n] == static_cast<int>(c) ? 1 : 0;
        }
        out[c] = roc_auc(scores, positive);
    }
    return out;
}

// Pools every (sample, class) decision into one binary problem.
inline std::optional<double> micro_auc(const Matrix& probabilities,
                                       const std::vector<int>& actual) {
    if (probabilities.rows() != actual.size())
        throw std::invalid_argument("micro_auc: size mismatch");
    Vector scores;
    std::vector<int> positive;
    scores.reserve(probabilities.rows() * probabilities.cols());
    positive.reserve(scores.capacity());
    for (std::size_t n = 0; n < probabilities.rows(); ++n)
        for (std::size_t c = 0; c < probabilities.cols(); ++c) {
            scores.push_back(probabilities(n, c));
            positive.push_back(actual[n] == static_cast<int>(c) ? 1 : 0);
        }
    return roc_auc(scores, positive);
}

struct MetricsReport {
    ConfusionMatrix confusion;
    double accuracy = 0.0;
    std::vector<std::optional<double>> precision;
    std::vector<std::optional<double>> detection_rate;
    std::vector<std::optional<double>> auc;
    MacroStat macro_precision_all, macro_precision_fault;
    MacroStat macro_detection_all, macro_detection_fault;
    MacroStat macro_auc;
    std::optional<double> micro_auc_value;
};

// probabilities may be empty (rows 0) when only hard labels are available;
// AUC fields are then left undefined.
inline MetricsReport compute_metrics(const std::vector<int>& predicted,
                                     const std::vector<int>& actual, int class_count,
                                     const Matrix& probabilities = Matrix()) {
    MetricsReport report;
    report.confusion = build_confusion(predicted, actual, class_count);
    report.accuracy = accuracy(report.confusion);
    report.precision = precision_per_class(report.confusion);
    report.detection_rate = detection_rate_per_class(report.confusion);
    if (probabilities.rows() > 0) {
        if (probabilities.rows() != actual.size() ||
            probabilities.cols() != static_cast<std::size_t>(class_count))
            throw std::invalid_argument("compute_metrics: probability shape mismatch");
        report.auc = auc_per_class(probabilities, actual);
        report.micro_auc_value = micro_auc(probabilities, actual);
    } else {
        report.auc.assign(static_cast<std::size_t>(class_count), std::nullopt);
    }
    report.macro_precision_all = macro_average(report.precision, 0);
    report.macro_precision_fault = macro_average(report.precision, 1);
    report.macro_detection_all = macro_average(report.detection_rate, 0);
    report.macro_detection_fault = macro_average(report.detection_rate, 1);
    report.macro_auc = macro_average(report.auc, 0);
    return report;
}

namespace detail {

inline std::string fmt_opt(const std::optional<double>& v, const char* undefined = "n/a") {
    if (!v) return undefined;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", *v);
    return buf;
}

inline std::string fmt_macro(const MacroStat& stat) {
    std::string s = fmt_opt(stat.value);
    if (stat.excluded > 0) s += " (" + std::to_string(stat.excluded) + " class(es) undefined)";
    return s;
}

}  // namespace detail

// Human-readable table.
inline std::string format_report(const MetricsReport& report) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "accuracy: %.6f over %llu windows\n", report.accuracy,
                  static_cast<unsigned long long>(report.confusion.total()));
    out += buf;
    out += "class   actual  predicted  precision  detection  auc\n";
    for (std::size_t c = 0; c < report.confusion.class_count; ++c) {
        std::snprintf(buf, sizeof(buf), "%-7zu %-7llu %-10llu %-10s %-10s %s\n", c,
                      static_cast<unsigned long long>(report.confusion.actual_total(c)),
                      static_cast<unsigned long long>(report.confusion.predicted_total(c)),
                      detail::fmt_opt(report.precision[c]).c_str(),
                      detail::fmt_opt(report.detection_rate[c]).c_str(),
                      detail::fmt_opt(report.auc[c]).c_str());
        out += buf;
    }
    out += "macro precision (all classes):   " + detail::fmt_macro(report.macro_precision_all) +
           "\n";
    out += "macro precision (fault classes): " + detail::fmt_macro(report.macro_precision_fault) +
           "\n";
    out += "macro detection (all classes):   " + detail::fmt_macro(report.macro_detection_all) +
           "\n";
    out += "macro detection (fault classes): " + detail::fmt_macro(report.macro_detection_fault) +
           "\n";
    out += "macro auc: " + detail::fmt_macro(report.macro_auc) + "\n";
    out += "micro auc: " + detail::fmt_opt(report.micro_auc_value) + "\n";
    return out;
}

// Machine-readable key=value block; undefined values print as "undefined".
inline std::string format_report_kv(const MetricsReport& report) {
    std::string out;
    char buf[64];
    auto kv = [&out](const std::string& key, const std::string& value) {
        out += key + "=" + value + "\n";
    };
    std::snprintf(buf, sizeof(buf), "%.12f", report.accuracy);
    kv("accuracy", buf);
    kv("windows", std::to_string(report.confusion.total()));
    kv("classes", std::to_string(report.confusion.class_count));
    auto opt = [](const std::optional<double>& v) {
        if (!v) return std::string("undefined");
        char b[64];
        std::snprintf(b, sizeof(b), "%.12f", *v);
        return std::string(b);
    };
    for (std::size_t c = 0; c < report.confusion.class_count; ++c) {
        const std::string id = std::to_string(c);
        kv("precision_" + id, opt(report.precision[c]));
        kv("detection_rate_" + id, opt(report.detection_rate[c]));
        kv("auc_" + id, opt(report.auc[c]));
    }
    kv("macro_precision_all", opt(report.macro_precision_all.value));
    kv("macro_precision_all_undefined", std::to_string(report.macro_precision_all.excluded));
    kv("macro_precision_fault", opt(report.macro_precision_fault.value));
    kv("macro_precision_fault_undefined", std::to_string(report.macro_precision_fault.excluded));
    kv("macro_detection_all", opt(report.macro_detection_all.value));
    kv("macro_detection_all_undefined", std::to_string(report.macro_detection_all.excluded));
    kv("macro_detection_fault", opt(report.macro_detection_fault.value));
    kv("macro_detection_fault_undefined", std::to_string(report.macro_detection_fault.excluded));
    kv("macro_auc", opt(report.macro_auc.value));
    kv("macro_auc_undefined", std::to_string(report.macro_auc.excluded));
    kv("micro_auc", opt(report.micro_auc_value));
    for (std::size_t p = 0; p < report.confusion.class_count; ++p) {
        std::string row;
        for (std::size_t a = 0; a < report.confusion.class_count; ++a) {
            if (a) row += ",";
            row += std::to_string(report.confusion.at(p, a));
        }
        kv("confusion_row_" + std::to_string(p), row);
    }
    return out;
}

inline void write_roc_csv(std::ostream& os, std::size_t cls, const std::vector<RocPoint>& points) {
    os << "class,threshold,fpr,tpr\n";
    char buf[128];
    for (const RocPoint& p : points) {
        std::snprintf(buf, sizeof(buf), "%zu,%.12g,%.12f,%.12f\n", cls, p.threshold, p.fpr, p.tpr);
        os << buf;
    }
}

}  // namespace tdln
