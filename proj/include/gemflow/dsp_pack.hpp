#pragma once

#include <cstdint>
#include <utility>

#include "gemflow/errors.hpp"

namespace gemflow::dsp {

// Two i8 weights packed into one wide multiplier operand:
//   p = w1 * 2^18 + w2
// The 18-bit gap leaves room for the low product |w2*a| <= 16384 < 2^17 plus
// one borrow/carry bit, so both products can be sliced back out exactly.
inline constexpr int kGuardShift = 18;
inline constexpr int64_t kGuard = int64_t{1} << kGuardShift;

struct PackedPair {
    int32_t p = 0;
};

constexpr PackedPair pack(int8_t w1, int8_t w2) {
    return PackedPair{static_cast<int32_t>(w1) * static_cast<int32_t>(kGuard) +
                      static_cast<int32_t>(w2)};
}

// Recovers (w1*a, w2*a) from the single wide product p*a. The low slice is
// taken as a non-negative residue mod 2^18; when it lands in the upper half
// it represents a negative w2*a and the high slice borrowed one.
constexpr std::pair<int32_t, int32_t> packed_mac(PackedPair pp, int8_t a) {
    const int64_t raw = static_cast<int64_t>(pp.p) * static_cast<int64_t>(a);
    int64_t low = raw % kGuard;
    if (low < 0) low += kGuard;
    int64_t high = (raw - low) / kGuard;
    if (low >= (kGuard >> 1)) {
        low -= kGuard;
        high += 1;
    }
    return {static_cast<int32_t>(high), static_cast<int32_t>(low)};
}

constexpr std::pair<int8_t, int8_t> unpack(PackedPair pp) {
    auto [w1, w2] = packed_mac(pp, 1);
    return {static_cast<int8_t>(w1), static_cast<int8_t>(w2)};
}

// Multipliers needed for a dim x dim array; packing halves them.
inline int64_t estimate_array_dsps(int dim, bool packed) {
    if (dim <= 0) throw ValidationError("estimate_array_dsps: dim must be positive");
    if (packed && dim % 2 != 0)
        throw ValidationError("estimate_array_dsps: packing requires an even array dimension");
    const int64_t d = dim;
    return packed ? d * d / 2 : d * d;
}

}  // namespace gemflow::dsp
