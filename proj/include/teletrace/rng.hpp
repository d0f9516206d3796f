#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace teletrace {

/// SplitMix64 generator. Small, fast and fully portable, so identical seeds
/// produce identical streams on every platform we build for.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 bits of entropy.
    double uniform01();

    /// Uniform double in [a, b).
    double uniform(double a, double b);

    /// Exponential with the given mean; mean <= 0 yields 0.
    double exponential(double mean);

    /// Uniform integer in [0, n). n must be > 0.
    uint64_t bounded(uint64_t n);

private:
    uint64_t state_;
};

/// Derives an independent stream seed from a master seed, a stage tag and up
/// to two indices. All randomness in the toolkit flows through this so that
/// streams are reproducible and never alias across stages.
uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a = 0, uint64_t b = 0);

/// One-shot keyed uniform draw in [0, 1). Used where a decision must be a
/// pure function of its key (e.g. per-attempt packet drops) so tests can
/// replay it independently of event ordering.
double keyed_uniform01(uint64_t master, std::string_view tag, uint64_t a, uint64_t b);

/// Seeded Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.bounded(i));
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace teletrace
