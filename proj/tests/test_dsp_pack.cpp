#include <doctest.h>

#include "gemflow/dsp_pack.hpp"

using namespace gemflow;
using namespace gemflow::dsp;

TEST_CASE("pack places the high weight 18 bits up") {
    CHECK(pack(3, -5).p == 786427);  // 3*262144 - 5
    CHECK(pack(0, 0).p == 0);
    CHECK(pack(-128, -128).p == -33554560);
    CHECK(pack(127, 127).p == 127 * 262144 + 127);
}

TEST_CASE("packed_mac slices both products back out") {
    // raw = 786427*7 = 5504989; floor slice 20 with low residue 262109 >= 2^17
    // forces the +1 / -2^18 correction.
    auto [p1, p2] = packed_mac(pack(3, -5), 7);
    CHECK(p1 == 21);
    CHECK(p2 == -35);
    auto z = packed_mac(pack(77, -33), 0);
    CHECK(z.first == 0);
    CHECK(z.second == 0);
    auto extremes = packed_mac(pack(-128, 127), -128);
    CHECK(extremes.first == 16384);
    CHECK(extremes.second == -16256);
}

TEST_CASE("pack/unpack round-trips every weight pair") {
    for (int w1 = -128; w1 <= 127; ++w1) {
        for (int w2 = -128; w2 <= 127; ++w2) {
            auto [u1, u2] = unpack(pack(static_cast<int8_t>(w1), static_cast<int8_t>(w2)));
            CHECK(u1 == w1);
            CHECK(u2 == w2);
        }
    }
}

TEST_CASE("array multiplier estimate") {
    CHECK(estimate_array_dsps(16, false) == 256);
    CHECK(estimate_array_dsps(32, true) == 512);
    CHECK(estimate_array_dsps(2, true) == 2);
    CHECK_THROWS_AS(estimate_array_dsps(15, true), ValidationError);
    CHECK_THROWS_AS(estimate_array_dsps(0, false), ValidationError);
}

// The full 2^24 sweep lives in the acceptance suite; a sampled slice here
// keeps the unit run fast.
TEST_CASE("sampled exhaustive slice of the mac identity") {
    for (int a = -128; a <= 127; a += 3) {
        for (int w1 = -128; w1 <= 127; w1 += 5) {
            for (int w2 = -128; w2 <= 127; w2 += 7) {
                auto [p1, p2] = packed_mac(pack(static_cast<int8_t>(w1), static_cast<int8_t>(w2)),
                                           static_cast<int8_t>(a));
                REQUIRE(p1 == w1 * a);
                REQUIRE(p2 == w2 * a);
            }
        }
    }
}
