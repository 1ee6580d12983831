// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace tsd {

/// Deterministic random source. mt19937_64 is fully specified by the standard
/// and every distribution below is implemented by hand, so identical seeds
/// give identical streams on any platform or compiler.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), gen_(mix(seed)) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi], inclusive. Unbiased via rejection.
    int64_t uniform_int(int64_t lo, int64_t hi);

    /// Standard normal via Box-Muller (no cached spare, stream stays aligned).
    double normal();

    double gamma(double shape);
    double beta(double a, double b);

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Independent child stream; substream(i) never collides with the parent
    /// or with substream(j), i != j.
    Rng substream(uint64_t index) const { return Rng(mix(seed_ ^ mix(index + 0x9e3779b97f4a7c15ULL))); }

    uint64_t seed() const { return seed_; }

private:
    static uint64_t mix(uint64_t x);

    uint64_t seed_;
    std::mt19937_64 gen_;
};

} // namespace tsd
