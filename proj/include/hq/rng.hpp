#pragma once

#include <cstdint>
#include <cmath>
#include <vector>

namespace hq {

// Counter-based generator (splitmix64 over a seed/counter pair). Every
// stochastic choice in a run draws from one instance, so a (seed, config)
// pair fully determines the run on any platform.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : seed_(seed), counter_(0) {}

    uint64_t next_u64() {
        uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * (++counter_);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller (both values consumed independently
    // to keep the draw count deterministic: exactly two u64 per call)
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0,1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // index in [0, n)
    size_t index(size_t n) { return static_cast<size_t>(next_u64() % n); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }
    void restore(uint64_t seed, uint64_t counter) { seed_ = seed; counter_ = counter; }

private:
    uint64_t seed_;
    uint64_t counter_;
};

} // namespace hq
