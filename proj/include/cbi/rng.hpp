#pragma once

// Per-path random streams. A path's generator depends only on the master seed
// and the path index, so ensembles do not depend on how paths are scheduled.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace cbi {

/// SplitMix64 finalizer (Steele, Lea & Flood).
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// seed(path) = splitmix64(splitmix64(master) ^ path)
constexpr std::uint64_t derive_path_seed(std::uint64_t master, std::uint64_t path_index) noexcept {
    return splitmix64(splitmix64(master) ^ path_index);
}

/// FNV-1a; used to give each named check its own stream family.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

constexpr std::uint64_t derive_stream_seed(std::uint64_t master, std::string_view name) noexcept {
    return splitmix64(master ^ fnv1a(name));
}

/// Samplers over a 64-bit Mersenne Twister.
class PathRng {
public:
    explicit PathRng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() { return normal_(engine_); }

    /// Poisson(mean); sequential inversion for small means.
    std::uint64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        if (mean < 30.0) {
            const double u = uniform();
            // e^{-m} >= 1 - m, so this exits before the exponential for most small means.
            if (u < 1.0 - mean) return 0;
            double p = std::exp(-mean);
            double cdf = p;
            std::uint64_t k = 0;
            while (u >= cdf && k < 1000) {
                ++k;
                p *= mean / static_cast<double>(k);
                cdf += p;
            }
            return k;
        }
        std::poisson_distribution<std::uint64_t> dist(mean);
        return dist(engine_);
    }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

}  // namespace cbi
