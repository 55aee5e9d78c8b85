#pragma once

#include <cstdint>
#include <random>

namespace perfseg {

/// splitmix64 step; used to derive independent per-item seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Counter-based seed derivation: the seed for item k depends only on
/// (seed, k), so items can be generated in any order or in parallel.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// mt19937_64 with hand-rolled uniform/normal draws. std::*_distribution
/// output is implementation-defined; these are pinned so identical seeds
/// give identical streams everywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi], inclusive; unbiased via rejection.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    bool bernoulli(double p) { return uniform() < p; }

    /// Box-Muller without caching; draws two uniforms per call.
    double normal(double mean = 0.0, double stddev = 1.0);

private:
    std::mt19937_64 gen_;
};

}  // namespace perfseg
