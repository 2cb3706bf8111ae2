#pragma once

#include <cmath>
#include <cstdint>

namespace mmaml {

// Counter-based deterministic RNG stream. Same seed gives the same
// sequence on every platform; distributions are hand-rolled on top of
// the raw 64-bit output so no implementation-defined behavior leaks in.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed + 0x9E3779B97F4A7C15ULL) {}

    // splitmix64 step
    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    bool coin() { return (next_u64() & 1u) != 0; }

    // standard normal via Box-Muller; one value per call, no caching so the
    // stream position stays a pure function of call count
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // standard normal truncated to |z| <= 2, by resampling
    double truncated_normal() {
        for (;;) {
            double z = normal();
            if (z >= -2.0 && z <= 2.0) return z;
        }
    }

    // integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

private:
    std::uint64_t state_;
};

}  // namespace mmaml
