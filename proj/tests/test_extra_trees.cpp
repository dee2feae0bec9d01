#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include "tdln/extra_trees.hpp"
#include "tdln/rng.hpp"

using namespace tdln;

namespace {

// Brute-force reference: for every candidate feature enumerate midpoints
// between consecutive distinct sorted values, partition by <=, and compute
// the weighted gini from scratch. Ties resolve to the first candidate found
// scanning features in the given order and thresholds ascending, matching
// the documented rule when candidates are sorted.
std::optional<SplitRecord> oracle_best_split(const Matrix& features,
                                             const std::vector<int>& labels,
                                             const std::vector<std::size_t>& samples,
                                             const std::vector<std::size_t>& candidates,
                                             int class_count) {
    std::optional<SplitRecord> best;
    for (std::size_t f : candidates) {
        std::vector<double> values;
        for (std::size_t i : samples) values.push_back(features(i, f));
        std::sort(values.begin(), values.end());
        values.erase(std::unique(values.begin(), values.end()), values.end());
        for (std::size_t v = 0; v + 1 < values.size(); ++v) {
            const double threshold = (values[v] + values[v + 1]) / 2.0;
            std::vector<int> left, right;
            for (std::size_t i : samples)
                (features(i, f) <= threshold ? left : right).push_back(labels[i]);
            const double weighted = gini_split(left, right, class_count);
            if (!best || weighted < best->gini) best = SplitRecord{f, threshold, weighted};
        }
    }
    return best;
}

int oracle_tree_predict(const Tree& tree, const Vector& x) {
    std::int32_t idx = 0;
    while (tree.nodes[static_cast<std::size_t>(idx)].feature >= 0) {
        const TreeNode& nd = tree.nodes[static_cast<std::size_t>(idx)];
        idx = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    const auto& hist = tree.nodes[static_cast<std::size_t>(idx)].histogram;
    return static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
}

}  // namespace

TEST_CASE("gini of pure and mixed subsets") {
    CHECK(gini_subset({1, 1, 1, 1}, 2) == 0.0);
    CHECK(gini_subset({0, 1}, 2) == 0.5);
    CHECK(gini_subset({0, 0, 1, 2}, 3) == 0.625);  // 1 - (1/2)^2 - (1/4)^2 - (1/4)^2
}

TEST_CASE("gini matches the hand formula on random subsets") {
    SeededRng rng(1);
    for (int it = 0; it < 200; ++it) {
        const int k = 2 + static_cast<int>(rng.bounded(4));
        std::vector<int> labels(1 + rng.bounded(12));
        for (int& l : labels) l = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(k)));
        std::map<int, int> counts;
        for (int l : labels) ++counts[l];
        double expected = 1.0;
        for (const auto& [cls, c] : counts) {
            const double p = static_cast<double>(c) / static_cast<double>(labels.size());
            expected -= p * p;
        }
        REQUIRE(gini_subset(labels, k) == Catch::Approx(expected).margin(1e-12));
    }
}

TEST_CASE("weighted split gini") {
    // Left {A,A} pure, right {A,B} half-mixed: 0.5*0 + 0.5*0.5 = 0.25.
    CHECK(gini_split({0, 0}, {0, 1}, 2) == 0.25);
    CHECK(gini_split({0, 0}, {1, 1}, 2) == 0.0);
    // Empty side degenerates to the gini of the other side.
    CHECK(gini_split({}, {0, 1}, 2) == 0.5);
}

TEST_CASE("best split on a separable feature") {
    Matrix features(4, 1);
    features(0, 0) = 1.0;
    features(1, 0) = 2.0;
    features(2, 0) = 3.0;
    features(3, 0) = 4.0;
    const std::vector<int> labels{0, 0, 1, 1};
    const auto split = best_split(features, labels, {0, 1, 2, 3}, {0}, 2);
    REQUIRE(split.has_value());
    CHECK(split->feature == 0);
    CHECK(split->threshold == 2.5);
    CHECK(split->gini == 0.0);
}

TEST_CASE("no split when every candidate feature is constant") {
    Matrix features(3, 2, 1.0);
    const std::vector<int> labels{0, 1, 0};
    CHECK_FALSE(best_split(features, labels, {0, 1, 2}, {0, 1}, 2).has_value());
}

TEST_CASE("tie breaking prefers the lower feature and threshold") {
    // Feature 1 duplicates feature 0; both admit the same perfect split.
    Matrix features(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        features(i, 0) = static_cast<double>(i);
        features(i, 1) = static_cast<double>(i);
    }
    const std::vector<int> labels{0, 0, 1, 1};
    const auto split = best_split(features, labels, {0, 1, 2, 3}, {0, 1}, 2);
    REQUIRE(split.has_value());
    CHECK(split->feature == 0);
    CHECK(split->threshold == 1.5);
}

TEST_CASE("best split matches brute force on random instances") {
    SeededRng rng(42);
    for (int it = 0; it < 500; ++it) {
        const std::size_t n = 2 + rng.bounded(7);   // up to 8 samples
        const std::size_t d = 1 + rng.bounded(4);   // up to 4 features
        const int k = 2 + static_cast<int>(rng.bounded(2));
        Matrix features(n, d);
        // Values from a small grid so duplicates and ties are common.
        for (double& v : features.data()) v = static_cast<double>(rng.bounded(5));
        std::vector<int> labels(n);
        for (int& l : labels) l = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(k)));
        std::vector<std::size_t> samples(n);
        for (std::size_t i = 0; i < n; ++i) samples[i] = i;
        std::vector<std::size_t> candidates(d);
        for (std::size_t i = 0; i < d; ++i) candidates[i] = i;

        const auto got = best_split(features, labels, samples, candidates, k);
        const auto expected = oracle_best_split(features, labels, samples, candidates, k);
        REQUIRE(got.has_value() == expected.has_value());
        if (got) {
            REQUIRE(got->feature == expected->feature);
            REQUIRE(got->threshold == expected->threshold);
            REQUIRE(got->gini == Catch::Approx(expected->gini).margin(1e-12));
        }
    }
}

TEST_CASE("pure input grows a single leaf") {
    Matrix features(5, 2);
    SeededRng rng(3);
    for (double& v : features.data()) v = rng.uniform01();
    const std::vector<int> labels(5, 1);
    const Tree tree = build_tree(features, labels, {0, 1}, 31, 3);
    REQUIRE(tree.nodes.size() == 1);
    CHECK(tree.nodes[0].feature == -1);
    CHECK(tree.nodes[0].histogram == std::vector<std::uint64_t>{0, 5, 0});
}

TEST_CASE("max_depth zero forces a histogram root") {
    Matrix features(4, 1);
    for (std::size_t i = 0; i < 4; ++i) features(i, 0) = static_cast<double>(i);
    const std::vector<int> labels{0, 0, 1, 1};
    const Tree tree = build_tree(features, labels, {0}, 0, 2);
    REQUIRE(tree.nodes.size() == 1);
    CHECK(tree.nodes[0].histogram == std::vector<std::uint64_t>{2, 2});
}

TEST_CASE("xor needs exactly depth two") {
    Matrix features(4, 2);
    features(0, 0) = 0;  features(0, 1) = 0;
    features(1, 0) = 0;  features(1, 1) = 1;
    features(2, 0) = 1;  features(2, 1) = 0;
    features(3, 0) = 1;  features(3, 1) = 1;
    const std::vector<int> labels{0, 1, 1, 0};
    const Tree tree = build_tree(features, labels, {0, 1}, 31, 2);
    CHECK(tree.depth() == 2);
    for (std::size_t i = 0; i < 4; ++i) {
        const Vector x{features(i, 0), features(i, 1)};
        CHECK(oracle_tree_predict(tree, x) == labels[i]);
    }
}

TEST_CASE("an unlimited tree memorizes consistent data") {
    SeededRng rng(7);
    const std::size_t n = 60, d = 3;
    Matrix features(n, d);
    for (double& v : features.data()) v = rng.uniform01();  // almost surely distinct rows
    std::vector<int> labels(n);
    for (int& l : labels) l = static_cast<int>(rng.bounded(4));
    const std::vector<std::size_t> all_features{0, 1, 2};
    const Tree tree = build_tree(features, labels, all_features, 64, 4);
    for (std::size_t i = 0; i < n; ++i) {
        Vector x(d);
        for (std::size_t c = 0; c < d; ++c) x[c] = features(i, c);
        REQUIRE(oracle_tree_predict(tree, x) == labels[i]);
    }
}

TEST_CASE("depth never exceeds the limit") {
    SeededRng rng(8);
    Matrix features(128, 2);
    for (double& v : features.data()) v = rng.uniform01();
    std::vector<int> labels(128);
    for (int& l : labels) l = static_cast<int>(rng.bounded(2));
    for (std::size_t limit : {1u, 2u, 3u, 5u}) {
        const Tree tree = build_tree(features, labels, {0, 1}, limit, 2);
        CHECK(tree.depth() <= limit);
    }
}

TEST_CASE("forest defaults and metadata") {
    SeededRng rng(9);
    Matrix features(40, 9);
    for (double& v : features.data()) v = rng.uniform01();
    std::vector<int> labels(40);
    for (int& l : labels) l = static_cast<int>(rng.bounded(3));
    ForestOptions options;
    options.n_estimators = 12;  // keep the test quick; structure is identical
    const ForestModel model = fit_forest(features, labels, 3, options);
    CHECK(model.trees.size() == 12);
    CHECK(model.max_depth == 31);
    CHECK(model.subset_size == 3);  // ceil(sqrt(9))
    CHECK(model.feature_count == 9);
    for (const auto& subset : model.feature_subsets) {
        REQUIRE(subset.size() == 3);
        for (std::size_t i = 1; i < subset.size(); ++i) REQUIRE(subset[i] > subset[i - 1]);
    }
    for (const Tree& tree : model.trees) CHECK(tree.depth() <= 31);
}

TEST_CASE("single tree with the full feature set equals build_tree") {
    SeededRng rng(10);
    Matrix features(30, 4);
    for (double& v : features.data()) v = rng.uniform01();
    std::vector<int> labels(30);
    for (int& l : labels) l = static_cast<int>(rng.bounded(2));
    ForestOptions options;
    options.n_estimators = 1;
    options.subset_size = 4;
    options.seed = 123;
    const ForestModel model = fit_forest(features, labels, 2, options);
    const Tree reference = build_tree(features, labels, {0, 1, 2, 3}, 31, 2);
    REQUIRE(model.trees[0].nodes.size() == reference.nodes.size());
    for (std::size_t i = 0; i < reference.nodes.size(); ++i) {
        CHECK(model.trees[0].nodes[i].feature == reference.nodes[i].feature);
        CHECK(model.trees[0].nodes[i].threshold == reference.nodes[i].threshold);
        CHECK(model.trees[0].nodes[i].histogram == reference.nodes[i].histogram);
    }
}

TEST_CASE("same seed reproduces the forest, different seed does not") {
    SeededRng rng(11);
    Matrix features(50, 6);
    for (double& v : features.data()) v = rng.uniform01();
    std::vector<int> labels(50);
    for (int& l : labels) l = static_cast<int>(rng.bounded(3));
    ForestOptions options;
    options.n_estimators = 8;
    options.seed = 77;
    const ForestModel a = fit_forest(features, labels, 3, options);
    const ForestModel b = fit_forest(features, labels, 3, options);
    REQUIRE(a.feature_subsets == b.feature_subsets);
    for (std::size_t t = 0; t < a.trees.size(); ++t) {
        REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
        for (std::size_t i = 0; i < a.trees[t].nodes.size(); ++i) {
            REQUIRE(a.trees[t].nodes[i].feature == b.trees[t].nodes[i].feature);
            REQUIRE(a.trees[t].nodes[i].threshold == b.trees[t].nodes[i].threshold);
        }
    }
    options.seed = 78;
    const ForestModel c = fit_forest(features, labels, 3, options);
    CHECK_FALSE(a.feature_subsets == c.feature_subsets);
}

TEST_CASE("threads do not change the forest") {
    SeededRng rng(12);
    Matrix features(40, 5);
    for (double& v : features.data()) v = rng.uniform01();
    std::vector<int> labels(40);
    for (int& l : labels) l = static_cast<int>(rng.bounded(2));
    ForestOptions options;
    options.n_estimators = 6;
    options.threads = 1;
    const ForestModel a = fit_forest(features, labels, 2, options);
    options.threads = 4;
    const ForestModel b = fit_forest(features, labels, 2, options);
    REQUIRE(a.feature_subsets == b.feature_subsets);
    for (std::size_t t = 0; t < a.trees.size(); ++t)
        for (std::size_t i = 0; i < a.trees[t].nodes.size(); ++i)
            REQUIRE(a.trees[t].nodes[i].threshold == b.trees[t].nodes[i].threshold);
}

TEST_CASE("bootstrap resampling changes the trees") {
    SeededRng rng(13);
    Matrix features(60, 4);
    for (double& v : features.data()) v = rng.uniform01();
    std::vector<int> labels(60);
    for (int& l : labels) l = static_cast<int>(rng.bounded(2));
    ForestOptions options;
    options.n_estimators = 4;
    options.subset_size = 4;
    const ForestModel plain = fit_forest(features, labels, 2, options);
    options.bootstrap = true;
    const ForestModel boot = fit_forest(features, labels, 2, options);
    CHECK(boot.bootstrap);
    bool any_diff = false;
    for (std::size_t t = 0; t < plain.trees.size() && !any_diff; ++t) {
        if (plain.trees[t].nodes.size() != boot.trees[t].nodes.size()) {
            any_diff = true;
            break;
        }
        for (std::size_t i = 0; i < plain.trees[t].nodes.size(); ++i)
            if (plain.trees[t].nodes[i].threshold != boot.trees[t].nodes[i].threshold)
                any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("prediction on a memorizing forest") {
    SeededRng rng(14);
    Matrix features(20, 3);
    for (double& v : features.data()) v = rng.uniform01();
    std::vector<int> labels(20);
    for (int& l : labels) l = static_cast<int>(rng.bounded(3));
    ForestOptions options;
    options.n_estimators = 5;
    options.subset_size = 3;  // every tree sees every feature: pure memorization
    const ForestModel model = fit_forest(features, labels, 3, options);
    for (std::size_t i = 0; i < 20; ++i) {
        Vector x(3);
        for (std::size_t c = 0; c < 3; ++c) x[c] = features(i, c);
        const ForestPrediction pred = predict_forest(model, x);
        REQUIRE(pred.label == labels[i]);
        REQUIRE(pred.probabilities[static_cast<std::size_t>(labels[i])] == 1.0);
        double sum = 0.0;
        for (double p : pred.probabilities) sum += p;
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("prediction ties break toward the lower class") {
    // One tree, one leaf, perfectly balanced histogram.
    ForestModel model;
    model.class_count = 3;
    model.feature_count = 1;
    Tree tree;
    tree.nodes.emplace_back();
    tree.nodes[0].histogram = {5, 5, 5};
    model.trees.push_back(tree);
    const ForestPrediction pred = predict_forest(model, {0.0});
    CHECK(pred.label == 0);
    for (double p : pred.probabilities) CHECK(p == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("probabilities sum to one on random forests") {
    SeededRng rng(15);
    Matrix features(50, 4);
    for (double& v : features.data()) v = rng.uniform01();
    std::vector<int> labels(50);
    for (int& l : labels) l = static_cast<int>(rng.bounded(4));
    ForestOptions options;
    options.n_estimators = 16;
    const ForestModel model = fit_forest(features, labels, 4, options);
    for (int it = 0; it < 100; ++it) {
        Vector x(4);
        for (double& v : x) v = rng.uniform(-0.5, 1.5);
        const ForestPrediction pred = predict_forest(model, x);
        double sum = 0.0;
        for (double p : pred.probabilities) {
            REQUIRE(p >= 0.0);
            sum += p;
        }
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("oversized subset is rejected") {
    Matrix features(4, 2, 1.0);
    const std::vector<int> labels{0, 1, 0, 1};
    ForestOptions options;
    options.subset_size = 3;
    CHECK_THROWS_AS(fit_forest(features, labels, 2, options), std::invalid_argument);
}

TEST_CASE("prediction input width is checked") {
    SeededRng rng(16);
    Matrix features(10, 3);
    for (double& v : features.data()) v = rng.uniform01();
    std::vector<int> labels(10);
    for (int& l : labels) l = static_cast<int>(rng.bounded(2));
    ForestOptions options;
    options.n_estimators = 2;
    const ForestModel model = fit_forest(features, labels, 2, options);
    CHECK_THROWS_AS(predict_forest(model, {1.0, 2.0}), std::invalid_argument);
}
