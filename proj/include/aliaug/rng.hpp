#pragma once

#include <cmath>
#include <cstdint>

namespace aliaug {

// SplitMix64 stream. Self-contained so random draws are reproducible across
// platforms and standard library versions.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    uint64_t below(uint64_t n) { return next_u64() % n; }

    bool bernoulli(double p) { return uniform() < p; }

    double normal(double mean = 0.0, double stddev = 1.0) {
        if (has_spare_) {
            has_spare_ = false;
            return mean + stddev * spare_;
        }
        double u, v, s;
        do {
            u = uniform(-1.0, 1.0);
            v = uniform(-1.0, 1.0);
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double k = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * k;
        has_spare_ = true;
        return mean + stddev * u * k;
    }

    // Derives a decorrelated child seed, used for per-record streams.
    static uint64_t derive(uint64_t seed, uint64_t index) {
        Rng r(seed ^ (0x632be59bd9b4e019ULL * (index + 1)));
        return r.next_u64();
    }

    uint64_t state() const { return state_; }
    void set_state(uint64_t s) {
        state_ = s;
        has_spare_ = false;
    }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace aliaug
