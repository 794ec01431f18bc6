#pragma once

#include <cmath>
#include <cstdint>
#include <string>

namespace fsa {

// Deterministic 64-bit generator (splitmix64). Every stochastic operation in
// the pipeline takes one of these explicitly so runs are reproducible from a
// single seed; substreams are derived with fork() rather than by sharing state.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [lo, hi) -- hi exclusive
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + static_cast<int64_t>(next_u64() % static_cast<uint64_t>(hi - lo));
    }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Independent substream; tag keeps sibling streams decorrelated.
    Rng fork(uint64_t tag) const {
        return Rng(mix(state_ ^ mix(tag + 0x632be59bd9b4e019ULL)));
    }

    static uint64_t mix(uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static uint64_t hash_str(const std::string& s) {
        uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

  private:
    uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Counter-based gaussian keyed by (seed, stream, counter). Used for common
// random numbers in the simulator: every policy sees the identical noise
// realization at (app, tick) regardless of evaluation order.
inline double keyed_gaussian(uint64_t seed, uint64_t stream, uint64_t counter) {
    uint64_t s = Rng::mix(seed ^ Rng::mix(stream + 1) ^ Rng::mix(counter * 0x9e3779b97f4a7c15ULL + 2));
    Rng r(s);
    return r.gaussian();
}

}  // namespace fsa
