#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace graphonomy::rng {

// Counter-based generator. Every stochastic choice in the project draws from
// a stream keyed by (global_seed, purpose_tag, index), so any sample, any
// weight matrix, and any schedule entry is reproducible in isolation.
//
// The state derivation is a splitmix64 chain over the three key parts; the
// output sequence is splitmix64, which passes standard statistical tests and
// is platform-independent (pure 64-bit integer arithmetic).

inline constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 1099511628211ull;
    }
    return h;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Stream {
public:
    Stream(std::uint64_t global_seed, std::string_view purpose_tag, std::uint64_t index = 0) {
        std::uint64_t s = global_seed;
        splitmix64(s);
        s ^= fnv1a(purpose_tag);
        splitmix64(s);
        s ^= index * 0x9e3779b97f4a7c15ull;
        state_ = s;
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n), n > 0. Multiply-shift rejection-free map;
    // bias is < 2^-64 * n, irrelevant at our scales.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    int uniform_int(int lo, int hi_inclusive) {
        return lo + static_cast<int>(next_below(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
    }

    bool bernoulli(double p) { return next_double() < p; }

    // Box-Muller; deterministic for a fixed binary.
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

private:
    std::uint64_t state_;
};

} // namespace graphonomy::rng
