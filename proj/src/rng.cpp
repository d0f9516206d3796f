#include "teletrace/rng.hpp"

#include <cmath>

namespace teletrace {

uint64_t Rng::next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double a, double b) {
    return a + (b - a) * uniform01();
}

double Rng::exponential(double mean) {
    if (mean <= 0.0) return 0.0;
    // 1 - u is in (0, 1], so the log is finite.
    return -mean * std::log(1.0 - uniform01());
}

uint64_t Rng::bounded(uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    uint64_t threshold = (0ULL - n) % n;
    for (;;) {
        uint64_t r = next_u64();
        if (r >= threshold) return r % n;
    }
}

namespace {

constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

uint64_t fnv1a(uint64_t h, const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a, uint64_t b) {
    uint64_t h = fnv1a(kFnvOffset, tag.data(), tag.size());
    h = fnv1a(h, &master, sizeof(master));
    h = fnv1a(h, &a, sizeof(a));
    h = fnv1a(h, &b, sizeof(b));
    return mix64(h);
}

double keyed_uniform01(uint64_t master, std::string_view tag, uint64_t a, uint64_t b) {
    Rng rng(derive_seed(master, tag, a, b));
    return rng.uniform01();
}

} // namespace teletrace
