#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "airfl/rng.hpp"

using airfl::Rng;

TEST_CASE("identical seeds give identical sequences") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("derived streams are independent of draw order") {
    Rng a(7, {1, 2});
    Rng b(7, {1, 2});
    Rng c(7, {2, 1});
    CHECK(a.next_u64() == b.next_u64());
    CHECK(a.next_u64() != c.next_u64());
}

TEST_CASE("uniform01 stays in [0,1) and covers the range") {
    Rng rng(3);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("normal draws have the right first two moments") {
    Rng rng(11);
    const int n = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sum_sq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sum_sq / n - 1.0) < 0.02);
}

TEST_CASE("complex normal splits variance between parts") {
    Rng rng(13);
    const int n = 200000;
    double re_sq = 0.0, im_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto z = rng.cnormal(4.0);
        re_sq += z.real() * z.real();
        im_sq += z.imag() * z.imag();
    }
    CHECK(re_sq / n == doctest::Approx(2.0).epsilon(0.02));
    CHECK(im_sq / n == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("below is bounded and roughly uniform") {
    Rng rng(17);
    int counts[7] = {0};
    for (int i = 0; i < 70000; ++i) {
        const uint64_t x = rng.below(7);
        REQUIRE(x < 7);
        ++counts[x];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}
