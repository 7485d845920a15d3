#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace omsd {

// Seeded generator with explicit uniform/normal algorithms so that streams
// are identical across standard libraries, not just across runs.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller without caching; two engine draws per variate keeps the
    // stream layout easy to reason about.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n).
    uint64_t index(uint64_t n) {
        // Rejection-free modulo bias is negligible for n << 2^64 but we
        // reject anyway to keep index streams exactly uniform.
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    // Derive an independent child stream; used to give each model/layer its
    // own generator from a single root seed.
    Rng child(uint64_t salt) {
        return Rng(engine_() ^ (salt * 0x9e3779b97f4a7c15ULL + 0x2545F4914F6CDD1DULL));
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace omsd
