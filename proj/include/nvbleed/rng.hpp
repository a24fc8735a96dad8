#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace nvbleed {

// Counter-based generator: output k is splitmix64(key + k * gamma). Every
// distribution below is computed here rather than through <random> so that
// streams are identical across standard libraries.
class Rng {
public:
    static constexpr std::string_view kName = "splitmix64-ctr/v1";

    explicit Rng(std::uint64_t key = 0) : key_(mix(key ^ 0x6a09e667f3bcc909ULL)) {}

    /// Independent stream for a (seed, path...) tuple.
    static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
        std::uint64_t k = mix(seed);
        for (std::uint64_t p : path) k = mix(k ^ mix(p + 0x9e3779b97f4a7c15ULL));
        return Rng(k);
    }

    std::uint64_t next_u64() { return mix(key_ + (counter_++) * kGamma); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do { x = next_u64(); } while (x >= limit);
        return x % n;
    }

    long long range(long long lo, long long hi) {  // inclusive
        return lo + static_cast<long long>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    /// Standard normal via Box-Muller (one value per call, no cached state).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }
    double normal(double mean, double sd) { return mean + sd * normal(); }

    std::uint64_t counter() const { return counter_; }

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

/// FNV-1a, used for config hashes and schedule checksums.
inline std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace nvbleed
