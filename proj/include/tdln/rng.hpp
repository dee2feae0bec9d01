// Deterministic seeded pseudo-randomness.
//
// The generator is xoshiro256++ (Blackman & Vigna), seeded through
// splitmix64, so the draw sequence for a given seed is identical on every
// platform and build. All floating-point draws are produced by fixed bit
// manipulation rather than std::uniform_real_distribution, whose output is
// implementation-defined.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace tdln {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Mixes a stream index into a base seed. Used to derive independent child
// generators (per tree, per run, per training sample) whose sequences do not
// depend on scheduling or thread count.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
    return splitmix64(s);
}

class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed = 0) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased-enough bounded integer via 128-bit multiply; n must be > 0.
    std::uint64_t bounded(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Box-Muller; the paired value is cached, so draws come in deterministic
    // call order.
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_cached_) {
            have_cached_ = false;
            return mean + stddev * cached_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return mean + stddev * r * std::cos(theta);
    }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // First k of a seeded permutation of {0, ..., n-1}, returned sorted.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    SeededRng derive(std::uint64_t stream) const { return SeededRng(mix_seed(seed_, stream)); }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t seed_;
    std::array<std::uint64_t, 4> state_{};
    double cached_ = 0.0;
    bool have_cached_ = false;
};

inline std::vector<std::size_t> SeededRng::sample_without_replacement(std::size_t n,
                                                                      std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(bounded(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace tdln
