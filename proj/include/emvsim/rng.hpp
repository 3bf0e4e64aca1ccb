#pragma once

#include <cmath>
#include <cstdint>

namespace emv {

// splitmix64: used both as a counter-based hash for deriving independent
// seeds and as the state advance for the simulation RNG.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Derive a stream seed from a root seed and a list of keys. Injective over
// the key sequence as long as collisions of splitmix64 chains are ignored.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t key) {
    return splitmix64(root ^ splitmix64(key + 0x517cc1b727220a95ULL));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(splitmix64(seed)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    // uniform in [lo, hi)
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller
    double next_gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_double() - 1.0;
            v = 2.0 * next_double() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace emv
