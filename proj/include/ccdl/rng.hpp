#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

namespace ccdl {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Seeded random source. Independent sub-streams are derived by mixing the
// parent seed with a purpose tag, so the draw order of one consumer never
// shifts another consumer's stream.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

    Rng fork(uint64_t tag) const { return Rng(splitmix64(seed_ ^ (0x517cc1b727220a95ull * (tag + 1)))); }

    uint64_t seed() const { return seed_; }
    std::mt19937_64& engine() { return engine_; }

    float normal() {
        std::normal_distribution<float> d(0.f, 1.f);
        return d(engine_);
    }
    float uniform(float lo, float hi) {
        std::uniform_real_distribution<float> d(lo, hi);
        return d(engine_);
    }
    // in [0, n)
    size_t index(size_t n) {
        std::uniform_int_distribution<size_t> d(0, n - 1);
        return d(engine_);
    }

    template <typename It>
    void shuffle(It first, It last) {
        std::shuffle(first, last, engine_);
    }

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace ccdl
