#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "tdln/datagen.hpp"
#include "tdln/extra_trees.hpp"

using namespace tdln;

namespace {

double channel_mean(const RawSeries& s, std::size_t c, std::size_t begin, std::size_t end) {
    double sum = 0.0;
    for (std::size_t t = begin; t < end; ++t) sum += s.values(t, c);
    return sum / static_cast<double>(end - begin);
}

double channel_std(const RawSeries& s, std::size_t c, std::size_t begin, std::size_t end) {
    const double mean = channel_mean(s, c, begin, end);
    double sq = 0.0;
    for (std::size_t t = begin; t < end; ++t) {
        const double d = s.values(t, c) - mean;
        sq += d * d;
    }
    return std::sqrt(sq / static_cast<double>(end - begin));
}

FaultSpec make_fault(FaultFamily family, std::vector<std::size_t> channels, double magnitude,
                     std::size_t onset) {
    FaultSpec fault;
    fault.family = family;
    fault.channels = std::move(channels);
    fault.magnitude = magnitude;
    fault.onset = onset;
    fault.class_id = 1;
    return fault;
}

}  // namespace

TEST_CASE("normal runs are labeled zero throughout") {
    const ProcessSpec spec = default_process_spec(6, 3);
    const RawSeries run = generate(spec, nullptr, 400);
    REQUIRE(run.steps() == 400);
    REQUIRE(run.channels() == 6);
    for (int l : run.labels) REQUIRE(l == 0);
    CHECK(run.values.all_finite());
}

TEST_CASE("labels flip to the class id exactly at onset") {
    const ProcessSpec spec = default_process_spec(5, 4);
    FaultSpec fault = make_fault(FaultFamily::Step, {1}, 2.0, 150);
    fault.class_id = 3;
    const RawSeries run = generate(spec, &fault, 400);
    for (std::size_t t = 0; t < 150; ++t) REQUIRE(run.labels[t] == 0);
    for (std::size_t t = 150; t < 400; ++t) REQUIRE(run.labels[t] == 3);
    CHECK(run.class_count == 4);
}

TEST_CASE("pre-onset rows are bit-identical to the normal run") {
    const ProcessSpec spec = default_process_spec(8, 9);
    const RawSeries normal = generate(spec, nullptr, 500);
    for (FaultFamily family : {FaultFamily::Step, FaultFamily::RandomVariation,
                               FaultFamily::SlowDrift, FaultFamily::Sticking}) {
        const FaultSpec fault = make_fault(family, {2, 5}, 1.5, 200);
        const RawSeries faulted = generate(spec, &fault, 500);
        for (std::size_t t = 0; t < 200; ++t)
            for (std::size_t c = 0; c < 8; ++c)
                REQUIRE(faulted.values(t, c) == normal.values(t, c));
    }
}

TEST_CASE("step fault shifts the affected channel mean by the magnitude") {
    const double magnitude = 3.0;
    std::vector<double> estimates;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const ProcessSpec spec = default_process_spec(6, seed);
        const FaultSpec fault = make_fault(FaultFamily::Step, {0}, magnitude, 500);
        const RawSeries run = generate(spec, &fault, 2000);
        estimates.push_back(channel_mean(run, 0, 500, 2000) - channel_mean(run, 0, 0, 500));
    }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= static_cast<double>(estimates.size());
    double var = 0.0;
    for (double e : estimates) var += (e - mean) * (e - mean);
    var /= static_cast<double>(estimates.size() - 1);
    const double se = std::sqrt(var / static_cast<double>(estimates.size()));
    CHECK(std::abs(mean - magnitude) <= 3.0 * se);
}

TEST_CASE("step leaves unaffected channels alone") {
    const ProcessSpec spec = default_process_spec(6, 10);
    const RawSeries normal = generate(spec, nullptr, 800);
    const FaultSpec fault = make_fault(FaultFamily::Step, {0}, 5.0, 100);
    const RawSeries faulted = generate(spec, &fault, 800);
    for (std::size_t t = 0; t < 800; ++t)
        for (std::size_t c = 1; c < 6; ++c)
            REQUIRE(faulted.values(t, c) == normal.values(t, c));
}

TEST_CASE("random variation inflates the affected channel spread") {
    const ProcessSpec spec = default_process_spec(6, 12);
    const FaultSpec fault = make_fault(FaultFamily::RandomVariation, {3}, 1.5, 300);
    const RawSeries run = generate(spec, &fault, 2400);
    const double before = channel_std(run, 3, 0, 300);
    const double after = channel_std(run, 3, 300, 2400);
    CHECK(after / before > 1.5);
}

TEST_CASE("slow drift ramps linearly with time") {
    const double magnitude = 4.0;
    std::vector<double> estimates;
    const std::size_t length = 1800, onset = 300, tail = 1600;
    // Expected shift over the measured tail window.
    double expected = 0.0;
    for (std::size_t t = tail; t < length; ++t)
        expected += magnitude * static_cast<double>(t - onset) / static_cast<double>(length);
    expected /= static_cast<double>(length - tail);
    for (std::uint64_t seed = 21; seed <= 30; ++seed) {
        const ProcessSpec spec = default_process_spec(6, seed);
        const FaultSpec fault = make_fault(FaultFamily::SlowDrift, {2}, magnitude, onset);
        const RawSeries run = generate(spec, &fault, length);
        estimates.push_back(channel_mean(run, 2, tail, length) - channel_mean(run, 2, 0, onset));
    }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= static_cast<double>(estimates.size());
    double var = 0.0;
    for (double e : estimates) var += (e - mean) * (e - mean);
    var /= static_cast<double>(estimates.size() - 1);
    const double se = std::sqrt(var / static_cast<double>(estimates.size()));
    CHECK(std::abs(mean - expected) <= 3.0 * se);
    // And the first post-onset step is still near the normal level: the ramp
    // starts at zero rather than jumping.
    const ProcessSpec spec = default_process_spec(6, 21);
    const FaultSpec fault = make_fault(FaultFamily::SlowDrift, {2}, magnitude, onset);
    const RawSeries run = generate(spec, &fault, length);
    const RawSeries normal = generate(spec, nullptr, length);
    CHECK(run.values(onset, 2) == normal.values(onset, 2));  // ramp term is exactly 0 at onset
}

TEST_CASE("sticking freezes most first differences") {
    // Deterministic at a pinned seed; fraction measured over ~2900 steps.
    const ProcessSpec spec = default_process_spec(6, 20);
    const FaultSpec fault = make_fault(FaultFamily::Sticking, {2}, 1.0, 100);
    const RawSeries run = generate(spec, &fault, 3000);
    std::size_t frozen = 0, total = 0;
    for (std::size_t t = 101; t < 3000; ++t) {
        ++total;
        if (run.values(t, 2) == run.values(t - 1, 2)) ++frozen;
    }
    const double fraction = static_cast<double>(frozen) / static_cast<double>(total);
    CHECK(fraction > 0.8);

    // Pre-onset the channel is live: no long frozen stretches.
    std::size_t frozen_pre = 0;
    for (std::size_t t = 1; t < 100; ++t)
        if (run.values(t, 2) == run.values(t - 1, 2)) ++frozen_pre;
    CHECK(frozen_pre == 0);
}

TEST_CASE("fault spec validation") {
    const ProcessSpec spec = default_process_spec(4, 1);
    FaultSpec fault = make_fault(FaultFamily::Step, {0}, 1.0, 10);
    CHECK_NOTHROW(fault.validate(4, 100));
    fault.onset = 100;
    CHECK_THROWS_AS(fault.validate(4, 100), std::invalid_argument);
    fault.onset = 10;
    fault.magnitude = 0.0;
    CHECK_THROWS_AS(fault.validate(4, 100), std::invalid_argument);
    fault.magnitude = 1.0;
    fault.channels = {7};
    CHECK_THROWS_AS(fault.validate(4, 100), std::invalid_argument);
    fault.channels = {};
    CHECK_THROWS_AS(fault.validate(4, 100), std::invalid_argument);
}

TEST_CASE("test onset scales as one sixth of the run, floored at two") {
    CHECK(test_onset_for_length(960) == 160);
    CHECK(test_onset_for_length(240) == 40);
    CHECK(test_onset_for_length(12) == 2);
    CHECK(test_onset_for_length(13) == 2);
    CHECK(test_onset_for_length(600) == 100);
}

TEST_CASE("benchmark layout and label accounting") {
    BenchmarkSpec spec;
    spec.process = default_process_spec(6, 5);
    spec.class_count = 5;
    spec.train_runs = 4;
    spec.test_runs = 2;
    spec.train_length = 120;
    spec.test_length = 120;
    spec.train_onset = 20;
    const BenchmarkData data = generate_benchmark(spec);

    // Train split: class-major, run-ascending concatenation.
    REQUIRE(data.train.steps() == 5 * 4 * 120);
    REQUIRE(data.test.steps() == 5 * 2 * 120);
    REQUIRE(data.train.class_count == 5);

    // Per-run label pattern in the train split.
    std::size_t offset = 0;
    for (int cls = 0; cls < 5; ++cls) {
        for (std::size_t run = 0; run < 4; ++run) {
            for (std::size_t t = 0; t < 120; ++t) {
                const int expected = (cls == 0 || t < 20) ? 0 : cls;
                REQUIRE(data.train.labels[offset + t] == expected);
            }
            offset += 120;
        }
    }

    // Test split onset is length/6 = 20 here.
    const std::size_t test_onset = test_onset_for_length(120);
    REQUIRE(test_onset == 20);
    offset = 2 * 120;  // class 0's two test runs precede the first fault run
    for (std::size_t t = 0; t < 120; ++t) {
        const int expected = t < test_onset ? 0 : 1;
        REQUIRE(data.test.labels[offset + t] == expected);
    }

    // Label histogram recount for the train split.
    std::vector<std::size_t> hist(5, 0);
    for (int l : data.train.labels) ++hist[static_cast<std::size_t>(l)];
    CHECK(hist[0] == 4 * 120 + 4 * 4 * 20);  // class-0 runs plus fault prefixes
    for (std::size_t c = 1; c < 5; ++c) CHECK(hist[c] == 4 * 100);
}

TEST_CASE("benchmark is reproducible and seed-sensitive") {
    BenchmarkSpec spec;
    spec.process = default_process_spec(5, 7);
    spec.class_count = 3;
    spec.train_runs = 2;
    spec.test_runs = 1;
    spec.train_length = 80;
    spec.test_length = 80;
    const BenchmarkData a = generate_benchmark(spec);
    const BenchmarkData b = generate_benchmark(spec);
    REQUIRE(a.train.values == b.train.values);
    REQUIRE(a.test.values == b.test.values);
    REQUIRE(a.train.labels == b.train.labels);

    spec.process = default_process_spec(5, 8);
    const BenchmarkData c = generate_benchmark(spec);
    CHECK_FALSE(a.train.values == c.train.values);
}

TEST_CASE("class assignments cycle families with distinct channels") {
    BenchmarkSpec spec;
    spec.process = default_process_spec(12, 3);
    spec.class_count = 9;  // two full family cycles
    const auto assignment = assign_classes(spec);
    REQUIRE(assignment.size() == 8);
    CHECK(assignment[0].family == FaultFamily::Step);
    CHECK(assignment[1].family == FaultFamily::RandomVariation);
    CHECK(assignment[2].family == FaultFamily::SlowDrift);
    CHECK(assignment[3].family == FaultFamily::Sticking);
    CHECK(assignment[4].family == FaultFamily::Step);
    // Second cycle magnitudes grow by 25%.
    CHECK(assignment[4].magnitude == Catch::Approx(assignment[0].magnitude * 1.25).margin(1e-12));
    for (const auto& a : assignment) {
        REQUIRE(a.channels.size() == spec.affected_channel_count);
        std::set<std::size_t> unique(a.channels.begin(), a.channels.end());
        REQUIRE(unique.size() == a.channels.size());
        for (std::size_t c : a.channels) REQUIRE(c < 12);
    }
    const std::string table = format_assignment(assignment);
    CHECK(table.find("step") != std::string::npos);
    CHECK(table.find("slow_drift") != std::string::npos);
    CHECK(table.find("sticking") != std::string::npos);
    CHECK(table.find("random_variation") != std::string::npos);
}

TEST_CASE("each family is separable by a depth-two tree on summary stats") {
    // Floor check: per-run per-channel mean and std must already separate
    // faulted from normal runs at default magnitudes. The deep pipeline gets
    // far more signal; this guards against silently unlearnable defaults.
    const std::size_t d = 6, length = 600, onset = 100, runs = 30;
    const ProcessSpec base = default_process_spec(d, 99);
    for (FaultFamily family : {FaultFamily::Step, FaultFamily::RandomVariation,
                               FaultFamily::SlowDrift, FaultFamily::Sticking}) {
        Matrix features(2 * runs, 2 * d);
        std::vector<int> labels(2 * runs);
        for (std::size_t r = 0; r < 2 * runs; ++r) {
            const bool faulted = r >= runs;
            ProcessSpec spec = base;  // shared personality, per-run seed
            spec.seed = 1000 + r % runs;
            RawSeries run;
            if (faulted) {
                const FaultSpec fault =
                    make_fault(family, {1, 4}, default_magnitude(family), onset);
                run = generate(spec, &fault, length);
            } else {
                run = generate(spec, nullptr, length);
            }
            for (std::size_t c = 0; c < d; ++c) {
                features(r, 2 * c) = channel_mean(run, c, onset, length);
                features(r, 2 * c + 1) = channel_std(run, c, onset, length);
            }
            labels[r] = faulted ? 1 : 0;
        }
        std::vector<std::size_t> all_features(2 * d);
        for (std::size_t i = 0; i < all_features.size(); ++i) all_features[i] = i;
        const Tree tree = build_tree(features, labels, all_features, 2, 2);
        std::size_t correct = 0;
        for (std::size_t r = 0; r < 2 * runs; ++r) {
            Vector x(2 * d);
            for (std::size_t c = 0; c < 2 * d; ++c) x[c] = features(r, c);
            std::int32_t idx = 0;
            while (tree.nodes[static_cast<std::size_t>(idx)].feature >= 0) {
                const TreeNode& nd = tree.nodes[static_cast<std::size_t>(idx)];
                idx = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
            }
            const auto& hist = tree.nodes[static_cast<std::size_t>(idx)].histogram;
            const int pred =
                static_cast<int>(std::max_element(hist.begin(), hist.end()) - hist.begin());
            if (pred == labels[r]) ++correct;
        }
        INFO("family " << fault_family_name(family));
        CHECK(static_cast<double>(correct) / static_cast<double>(2 * runs) >= 0.9);
    }
}
