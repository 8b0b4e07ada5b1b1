#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace hmatch {

// Deterministic splitmix64 generator. Every random quantity in the project
// derives from a single top-level seed through named child streams:
//
//   child_seed = splitmix64(parent_seed ^ fnv1a(tag) ^ index)
//
// so two runs with the same seed produce identical streams regardless of
// platform or standard-library implementation.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0xa5a5a5a5a5a5a5a5ULL)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
    }

    // Box-Muller; one fresh pair per call keeps the stream position predictable.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Named child stream; `index` distinguishes siblings with the same tag.
    Rng split(std::string_view tag, std::uint64_t index = 0) const {
        return Rng(splitmix64(state_ ^ fnv1a(tag)) ^ splitmix64(index ^ 0x6a09e667f3bcc908ULL));
    }

private:
    std::uint64_t state_;
};

}  // namespace hmatch
