// Ensemble of unpruned decision trees over per-tree random feature subsets.
//
// Split selection sorts each candidate feature's values and scans every
// midpoint between consecutive distinct values for the minimum weighted Gini
// index, with ties broken by lower feature index then lower threshold. Trees
// train on the full sample set by default; bootstrap resampling is available
// as an option. Per-tree generators are derived from the forest seed and the
// tree index, so trees can be built in parallel without affecting results.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdln/matrix.hpp"
#include "tdln/parallel.hpp"
#include "tdln/rng.hpp"

namespace tdln {

// 1 - sum_i (c_i / n)^2, class index ascending.
inline double gini_from_counts(const std::vector<std::uint64_t>& counts, std::uint64_t total) {
    double sum_sq = 0.0;
    for (std::uint64_t c : counts) {
        const double p = static_cast<double>(c) / static_cast<double>(total);
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

inline double gini_subset(const std::vector<int>& labels, int class_count) {
    if (labels.empty()) throw std::invalid_argument("gini_subset: empty subset");
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(class_count), 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    return gini_from_counts(counts, labels.size());
}

// Weighted Gini of a two-way split; an empty side contributes 0.
inline double gini_split(const std::vector<int>& left, const std::vector<int>& right,
                         int class_count) {
    if (left.empty() && right.empty())
        throw std::invalid_argument("gini_split: both sides empty");
    const double n = static_cast<double>(left.size() + right.size());
    double total = 0.0;
    if (!left.empty())
        total += static_cast<double>(left.size()) * gini_subset(left, class_count);
    if (!right.empty())
        total += static_cast<double>(right.size()) * gini_subset(right, class_count);
    return total / n;
}

struct GiniReport {
    Vector subset_gini;
    double weighted = 0.0;
};

struct SplitRecord {
    std::size_t feature = 0;
    double threshold = 0.0;
    double gini = 0.0;
};

// Exhaustive scan over candidate features and midpoint thresholds. samples
// index rows of features; returns nullopt when no candidate feature has two
// distinct values.
inline std::optional<SplitRecord> best_split(const Matrix& features,
                                             const std::vector<int>& labels,
                                             const std::vector<std::size_t>& samples,
                                             const std::vector<std::size_t>& candidate_features,
                                             int class_count) {
    if (samples.size() < 2) return std::nullopt;
    const std::size_t n = samples.size();
    std::optional<SplitRecord> best;
    std::vector<std::pair<double, int>> column(n);
    std::vector<std::uint64_t> left_counts(static_cast<std::size_t>(class_count));
    std::vector<std::uint64_t> right_counts(static_cast<std::size_t>(class_count));
    for (std::size_t f : candidate_features) {
        for (std::size_t i = 0; i < n; ++i)
            column[i] = {features(samples[i], f), labels[samples[i]]};
        std::sort(column.begin(), column.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        std::fill(left_counts.begin(), left_counts.end(), 0);
        std::fill(right_counts.begin(), right_counts.end(), 0);
        for (const auto& [value, label] : column) ++right_counts[static_cast<std::size_t>(label)];
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const auto label = static_cast<std::size_t>(column[i].second);
            ++left_counts[label];
            --right_counts[label];
            if (!(column[i + 1].first > column[i].first)) continue;
            const double threshold = (column[i].first + column[i + 1].first) / 2.0;
            const std::uint64_t nl = i + 1;
            const std::uint64_t nr = n - nl;
            const double weighted = (static_cast<double>(nl) * gini_from_counts(left_counts, nl) +
                                     static_cast<double>(nr) * gini_from_counts(right_counts, nr)) /
                                    static_cast<double>(n);
            if (!best || weighted < best->gini) best = SplitRecord{f, threshold, weighted};
        }
    }
    return best;
}

// Leaf iff feature < 0; split routes value <= threshold left, > right.
struct TreeNode {
    std::int32_t feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::vector<std::uint64_t> histogram;  // class counts, leaves only
};

struct Tree {
    std::vector<TreeNode> nodes;  // root at index 0

    std::size_t depth() const { return node_depth(0); }

private:
    std::size_t node_depth(std::int32_t idx) const {
        const TreeNode& nd = nodes[static_cast<std::size_t>(idx)];
        if (nd.feature < 0) return 0;
        return 1 + std::max(node_depth(nd.left), node_depth(nd.right));
    }
};

namespace detail {

inline std::int32_t grow_tree(Tree& tree, const Matrix& features, const std::vector<int>& labels,
                              std::vector<std::size_t>& samples,
                              const std::vector<std::size_t>& feature_subset,
                              std::size_t depth, std::size_t max_depth, int class_count) {
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(class_count), 0);
    for (std::size_t i : samples) ++counts[static_cast<std::size_t>(labels[i])];
    const bool pure =
        std::count_if(counts.begin(), counts.end(), [](std::uint64_t c) { return c > 0; }) <= 1;

    std::optional<SplitRecord> split;
    if (!pure && samples.size() > 1 && depth < max_depth)
        split = best_split(features, labels, samples, feature_subset, class_count);

    const auto idx = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (!split) {
        tree.nodes[static_cast<std::size_t>(idx)].histogram = std::move(counts);
        return idx;
    }

    std::vector<std::size_t> left, right;
    for (std::size_t i : samples)
        (features(i, split->feature) <= split->threshold ? left : right).push_back(i);
    samples.clear();
    samples.shrink_to_fit();

    const std::int32_t l =
        grow_tree(tree, features, labels, left, feature_subset, depth + 1, max_depth, class_count);
    const std::int32_t r =
        grow_tree(tree, features, labels, right, feature_subset, depth + 1, max_depth, class_count);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(idx)];
    node.feature = static_cast<std::int32_t>(split->feature);
    node.threshold = split->threshold;
    node.left = l;
    node.right = r;
    return idx;
}

}  // namespace detail

// Top-down unpruned tree restricted to the given feature subset. Growth
// stops at purity, max_depth, node size 1 or an unsplittable node.
inline Tree build_tree(const Matrix& features, const std::vector<int>& labels,
                       const std::vector<std::size_t>& feature_subset, std::size_t max_depth,
                       int class_count) {
    if (features.rows() == 0) throw std::invalid_argument("build_tree: no samples");
    Tree tree;
    std::vector<std::size_t> all(features.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    detail::grow_tree(tree, features, labels, all, feature_subset, 0, max_depth, class_count);
    return tree;
}

struct ForestOptions {
    std::size_t n_estimators = 112;
    std::size_t max_depth = 31;
    std::size_t subset_size = 0;  // 0 = ceil(sqrt(feature count))
    std::uint64_t seed = 1;
    bool bootstrap = false;
    unsigned threads = 0;
};

struct ForestModel {
    std::vector<Tree> trees;
    std::vector<std::vector<std::size_t>> feature_subsets;
    std::size_t n_estimators = 0;
    std::size_t max_depth = 0;
    std::size_t subset_size = 0;
    std::size_t feature_count = 0;
    int class_count = 0;
    std::uint64_t seed = 0;
    bool bootstrap = false;
};

inline ForestModel fit_forest(const Matrix& features, const std::vector<int>& labels,
                              int class_count, const ForestOptions& options) {
    if (features.rows() < 2) throw std::invalid_argument("fit_forest: need >= 2 samples");
    if (features.cols() < 1) throw std::invalid_argument("fit_forest: need >= 1 feature");
    if (labels.size() != features.rows())
        throw std::invalid_argument("fit_forest: label count mismatch");
    std::size_t subset_size = options.subset_size;
    if (subset_size == 0)
        subset_size = static_cast<std::size_t>(
            std::ceil(std::sqrt(static_cast<double>(features.cols()))));
    if (subset_size > features.cols())
        throw std::invalid_argument("fit_forest: subset_size " + std::to_string(subset_size) +
                                    " exceeds feature count " + std::to_string(features.cols()));

    ForestModel model;
    model.n_estimators = options.n_estimators;
    model.max_depth = options.max_depth;
    model.subset_size = subset_size;
    model.feature_count = features.cols();
    model.class_count = class_count;
    model.seed = options.seed;
    model.bootstrap = options.bootstrap;
    model.trees.resize(options.n_estimators);
    model.feature_subsets.resize(options.n_estimators);

    ordered_chunked_reduce<int>(
        options.n_estimators, 1, options.threads,
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t t = begin; t < end; ++t) {
                SeededRng tree_rng(mix_seed(options.seed, t));
                const auto subset =
                    tree_rng.sample_without_replacement(features.cols(), subset_size);
                if (!options.bootstrap) {
                    model.trees[t] = build_tree(features, labels, subset, options.max_depth,
                                                class_count);
                } else {
                    Matrix resampled(features.rows(), features.cols());
                    std::vector<int> relabels(labels.size());
                    for (std::size_t i = 0; i < features.rows(); ++i) {
                        const auto src = static_cast<std::size_t>(tree_rng.bounded(features.rows()));
                        for (std::size_t c = 0; c < features.cols(); ++c)
                            resampled(i, c) = features(src, c);
                        relabels[i] = labels[src];
                    }
                    model.trees[t] =
                        build_tree(resampled, relabels, subset, options.max_depth, class_count);
                }
                model.feature_subsets[t] = subset;
            }
            return 0;
        },
        [](int&&) {});
    return model;
}

struct ForestPrediction {
    int label = 0;
    Vector probabilities;
};

// Mean of per-tree normalized leaf histograms; argmax with ties going to the
// lower class id.
inline ForestPrediction predict_forest(const ForestModel& model, const Vector& x) {
    if (x.size() != model.feature_count)
        throw std::invalid_argument("predict_forest: input has " + std::to_string(x.size()) +
                                    " features, model expects " +
                                    std::to_string(model.feature_count));
    ForestPrediction pred;
    pred.probabilities.assign(static_cast<std::size_t>(model.class_count), 0.0);
    for (const Tree& tree : model.trees) {
        std::int32_t idx = 0;
        while (tree.nodes[static_cast<std::size_t>(idx)].feature >= 0) {
            const TreeNode& nd = tree.nodes[static_cast<std::size_t>(idx)];
            idx = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
        }
        const auto& hist = tree.nodes[static_cast<std::size_t>(idx)].histogram;
        std::uint64_t total = 0;
        for (std::uint64_t c : hist) total += c;
        for (std::size_t c = 0; c < hist.size(); ++c)
            pred.probabilities[c] +=
                static_cast<double>(hist[c]) / static_cast<double>(total);
    }
    for (double& p : pred.probabilities) p /= static_cast<double>(model.trees.size());
    std::size_t argmax = 0;
    for (std::size_t c = 1; c < pred.probabilities.size(); ++c)
        if (pred.probabilities[c] > pred.probabilities[argmax]) argmax = c;
    pred.label = static_cast<int>(argmax);
    return pred;
}

}  // namespace tdln
