#pragma once

// Counter-based random streams.  A stream is a SplitMix64 sequence whose
// initial state is derived from (master seed, lane a, lane b) through the
// 64-bit finalizer, so streams for distinct (N, draw) pairs are independent
// and results do not depend on scheduling order or worker count.

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>

namespace qelab {

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    // Independent stream for work item (a, b) under a master seed.
    static RngStream derive(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
        std::uint64_t h = mix(master ^ 0x8f2d5f3a9c1b0e47ull);
        h = mix(h ^ (a * 0x9e3779b97f4a7c15ull));
        h = mix(h ^ (b * 0xd1b54a32d192ed03ull));
        return RngStream(h);
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // Uniform in [0, 1).
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    double uniform_angle() { return 2.0 * std::numbers::pi * uniform01(); }

    // +1 or -1 with equal probability.
    double sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

    // Standard normal via Box-Muller; the second deviate of each pair is cached.
    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log1p(-u1));   // log(1-u1), u1 < 1
        double t = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(t);
        have_cached_ = true;
        return r * std::cos(t);
    }

    // n1 + i*n2 with independent standard normal components, E|g|^2 = 2.
    std::complex<double> complex_gaussian_pair() {
        double re = gaussian();
        double im = gaussian();
        return {re, im};
    }

private:
    static std::uint64_t mix(std::uint64_t x) {
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ull;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebull;
        x ^= x >> 31;
        return x;
    }

    std::uint64_t state_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace qelab
