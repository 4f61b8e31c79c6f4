#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace noiseavg {

// Deterministic random source. std::mt19937_64 has a standard-mandated output
// sequence, but the std distributions do not, so the transforms live here.
// Every consumer seeds its own engine; there is no global random state.
class RandomEngine {
public:
    explicit RandomEngine(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53 bits of resolution.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Box-Muller; consumes exactly two draws per call.
    double gaussian(double mean, double sigma) {
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; // (0, 1]
        const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + sigma * r * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    }

    // Unbiased integer in [0, n), rejection sampled.
    std::uint64_t index(std::uint64_t n) {
        const std::uint64_t bound = n * ((~std::uint64_t{0}) / n);
        std::uint64_t r = engine_();
        while (r >= bound) r = engine_();
        return r % n;
    }

private:
    std::mt19937_64 engine_;
};

// Fisher-Yates over an index vector; used everywhere a shuffle must replay.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, RandomEngine& rng) {
    if (items.size() < 2) return;
    for (std::size_t i = items.size() - 1; i > 0; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.index(i + 1));
        std::swap(items[i], items[j]);
    }
}

} // namespace noiseavg
