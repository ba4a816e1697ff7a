#pragma once

#include <cmath>
#include <cstdint>

namespace tvase {

// Counter-based splittable generator. A draw is a pure function of
// (seed, stream, counter), all 64-bit integer arithmetic, so sequences are
// bit-identical across platforms and independent of construction order.
// Layers, clips and workers each get their own stream id.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0) : seed_(seed), stream_(stream) {}

    // Independent generator for a sub-task; does not disturb this one.
    Rng fork(uint64_t stream) const { return Rng(seed_, mix(stream_ * 0x9e3779b97f4a7c15ULL + stream + 1)); }

    uint64_t next_u64() {
        uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (counter_++ + 1);
        z ^= mix(stream_ + 0xbf58476d1ce4e5b9ULL);
        return mix(z);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

    // Standard normal via Box-Muller (one value per call, deterministic).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    static uint64_t mix(uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

private:
    uint64_t seed_;
    uint64_t stream_;
    uint64_t counter_ = 0;
};

} // namespace tvase
