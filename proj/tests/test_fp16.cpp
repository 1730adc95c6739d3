#include <doctest.h>

#include <cmath>
#include <cstdint>

#include "gemflow/fixtures.hpp"
#include "gemflow/fp16.hpp"

using namespace gemflow;

TEST_CASE("known conversions (frozen against an independent binary16 oracle)") {
    struct Case {
        float in;
        uint16_t bits;
        float back;
    };
    const Case cases[] = {
        {0.1f, 0x2e66, 0.0999755859375f},
        {0.5f, 0x3800, 0.5f},
        {1.0000001f, 0x3c00, 1.0f},
        {1.0f, 0x3c00, 1.0f},
        {6.0f / 255.0f, 0x2606, 0.023529052734375f},
        {0.0125f, 0x2266, 0.0124969482421875f},
        {65504.0f, 0x7bff, 65504.0f},
        {5.96e-8f, 0x0001, 5.960464477539063e-08f},  // smallest subnormal
        {-0.3333f, 0xb555, -0.333251953125f},
        {3.14159265f, 0x4248, 3.140625f},
        {1e-7f, 0x0002, 1.1920928955078125e-07f},      // subnormal, rounded up
        {6.103515625e-05f, 0x0400, 6.103515625e-05f},  // smallest normal
    };
    for (const auto& c : cases) {
        CAPTURE(c.in);
        CHECK(f16_from_f32(c.in) == c.bits);
        CHECK(f16_round(c.in) == c.back);
    }
}

TEST_CASE("overflow and special values") {
    CHECK(f16_from_f32(65520.0f) == 0x7c00);  // rounds up past the max finite value
    CHECK(!f16_is_finite(0x7c00));
    CHECK(f16_is_finite(0x7bff));
    CHECK(f16_from_f32(1e9f) == 0x7c00);
    CHECK(f16_from_f32(-1e9f) == 0xfc00);
    CHECK(f16_from_f32(0.0f) == 0x0000);
    CHECK(f16_from_f32(-0.0f) == 0x8000);
    // Ties at the subnormal/zero boundary round to even (zero).
    CHECK(f16_from_f32(std::ldexp(1.0f, -25)) == 0x0000);
    CHECK(f16_from_f32(std::nextafterf(std::ldexp(1.0f, -25), 1.0f)) == 0x0001);
    const float nan_back = f16_to_f32(f16_from_f32(std::nanf("")));
    CHECK(std::isnan(nan_back));
}

TEST_CASE("every f16 value round-trips exactly through f32") {
    for (uint32_t h = 0; h < 0x10000; ++h) {
        const uint16_t bits = static_cast<uint16_t>(h);
        if (((bits >> 10) & 0x1f) == 0x1f && (bits & 0x3ff) != 0) continue;  // NaN payloads
        const float f = f16_to_f32(bits);
        CHECK(f16_from_f32(f) == bits);
    }
}

TEST_CASE("rounding is monotone") {
    fixtures::DetRand rng(42);
    for (int i = 0; i < 200000; ++i) {
        const float x = rng.uniform(-70000.0f, 70000.0f);
        const float y = std::nextafterf(x, 1e30f);
        CHECK(f16_round(x) <= f16_round(y));
    }
}

TEST_CASE("rounding error is at most half the local f16 gap") {
    fixtures::DetRand rng(7);
    for (int i = 0; i < 100000; ++i) {
        const float x = rng.uniform(-60000.0f, 60000.0f);
        const float r = f16_round(x);
        if (r == 0.0f) continue;
        // Nearest rounding keeps x within half the wider adjacent gap.
        const uint16_t bits = f16_from_f32(r);
        const uint16_t bl = static_cast<uint16_t>(bits - 1);
        const uint16_t bh = static_cast<uint16_t>(bits + 1);
        if (!f16_is_finite(bl) || !f16_is_finite(bh)) continue;
        const float gap =
            std::max(std::fabs(f16_to_f32(bh) - r), std::fabs(r - f16_to_f32(bl)));
        CHECK(std::fabs(x - r) <= gap * 0.5f * 1.0000002f);
    }
}
