#include <doctest.h>

#include <cmath>
#include <set>

#include "teletrace/rng.hpp"

using namespace teletrace;

TEST_CASE("rng determinism and range") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        double x = a.uniform01();
        CHECK(x == b.uniform01());
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
}

TEST_CASE("derive_seed separates streams") {
    std::set<uint64_t> seen;
    for (uint64_t a = 0; a < 16; ++a) {
        for (uint64_t b = 0; b < 16; ++b) {
            seen.insert(derive_seed(7, "x", a, b));
            seen.insert(derive_seed(7, "y", a, b));
        }
    }
    CHECK(seen.size() == 512);
    CHECK(derive_seed(7, "x", 1, 2) == derive_seed(7, "x", 1, 2));
    CHECK(derive_seed(7, "x", 1, 2) != derive_seed(8, "x", 1, 2));
}

TEST_CASE("exponential mean is roughly right") {
    Rng rng(9);
    double sum = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) sum += rng.exponential(0.5);
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.05));
    CHECK(rng.exponential(0.0) == 0.0);
}

TEST_CASE("bounded stays in range") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        CHECK(rng.bounded(7) < 7);
    }
}

TEST_CASE("keyed draw is a pure function of its key") {
    CHECK(keyed_uniform01(11, "drop", 3, 1) == keyed_uniform01(11, "drop", 3, 1));
    CHECK(keyed_uniform01(11, "drop", 3, 1) != keyed_uniform01(11, "drop", 3, 2));
}
