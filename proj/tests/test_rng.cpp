#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sqdm/rng.hpp"

using sqdm::Rng;

TEST_CASE("same seed and stream reproduce the sequence", "[rng]") {
    Rng a(42, 7);
    Rng b(42, 7);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("distinct seeds and streams decorrelate", "[rng]") {
    Rng a(42, 0);
    Rng b(43, 0);
    Rng c(42, 1);
    int same_ab = 0, same_ac = 0;
    for (int i = 0; i < 256; ++i) {
        const std::uint64_t x = a.next_u64();
        same_ab += (x == b.next_u64());
        same_ac += (x == c.next_u64());
    }
    REQUIRE(same_ab == 0);
    REQUIRE(same_ac == 0);
}

TEST_CASE("position save and restore resumes the stream", "[rng]") {
    Rng a(9, 3);
    for (int i = 0; i < 37; ++i) a.next_u64();
    const std::uint64_t pos = a.position();
    std::vector<std::uint64_t> tail;
    for (int i = 0; i < 50; ++i) tail.push_back(a.next_u64());

    Rng b(9, 3);
    b.set_position(pos);
    for (int i = 0; i < 50; ++i) REQUIRE(b.next_u64() == tail[i]);
}

TEST_CASE("draw accounting is fixed per primitive", "[rng]") {
    Rng r(1, 0);
    REQUIRE(r.position() == 0);
    r.uniform();
    REQUIRE(r.position() == 1);
    r.normal();
    REQUIRE(r.position() == 3);  // a normal consumes exactly two outputs
    r.uniform_below(17);
    REQUIRE(r.position() == 4);
}

TEST_CASE("uniform stays in [0,1) and uniform_below in range", "[rng]") {
    Rng r(5, 0);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        REQUIRE(r.uniform_below(13) < 13);
    }
}

TEST_CASE("normal draws have unit moments", "[rng]") {
    Rng r(123, 0);
    const int n = 200000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z = r.normal();
        sum += z;
        sum_sq += z * z;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    REQUIRE(std::fabs(mean) < 0.01);
    REQUIRE(std::fabs(var - 1.0) < 0.02);
}
