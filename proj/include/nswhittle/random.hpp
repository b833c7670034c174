#pragma once

// Seeded random streams. Every consumer draws from its own stream derived from a
// master seed and a (purpose, index) name, so adding a consumer never shifts the
// draws seen by another.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace nsw {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Seed of the stream named (purpose, index, sub) under `master`.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                                           std::uint64_t index = 0, std::uint64_t sub = 0) {
    std::uint64_t h = splitmix64(master ^ fnv1a(purpose));
    h = splitmix64(h ^ splitmix64(index + 0x1234567ULL));
    return splitmix64(h ^ splitmix64(sub + 0x7654321ULL));
}

/**
 * mt19937_64 with platform-independent conversions (the std distributions are
 * implementation-defined, which would break byte-identical outputs).
 */
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) {
        const auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return k < n ? k : n - 1;
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Inverse-CDF draw from a distribution; never returns a zero-probability index.
    std::size_t categorical(std::span<const double> probs) {
        const double u = uniform();
        double cumulative = 0.0;
        std::size_t last_positive = 0;
        for (std::size_t k = 0; k < probs.size(); ++k) {
            if (probs[k] <= 0.0) continue;
            last_positive = k;
            cumulative += probs[k];
            if (u < cumulative) return k;
        }
        return last_positive;
    }

    /// Symmetric Dirichlet(1), i.e. uniform on the simplex.
    std::vector<double> dirichlet_ones(std::size_t n) {
        std::vector<double> x(n);
        double sum = 0.0;
        for (auto& v : x) {
            v = -std::log1p(-uniform());
            sum += v;
        }
        if (sum <= 0.0) return std::vector<double>(n, 1.0 / static_cast<double>(n));
        for (auto& v : x) v /= sum;
        return x;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace nsw
