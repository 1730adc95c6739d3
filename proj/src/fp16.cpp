#include "gemflow/fp16.hpp"

#include <bit>

namespace gemflow {

uint16_t f16_from_f32(float x) {
    const uint32_t bits = std::bit_cast<uint32_t>(x);
    const uint16_t sign = static_cast<uint16_t>((bits >> 16) & 0x8000u);
    const uint32_t abs = bits & 0x7fffffffu;

    if (abs >= 0x7f800000u) {
        // Inf stays inf, NaN keeps its quiet bit set.
        if (abs == 0x7f800000u) return sign | 0x7c00u;
        uint16_t payload = static_cast<uint16_t>((abs >> 13) & 0x3ffu);
        return sign | 0x7c00u | 0x0200u | payload;
    }

    int exp = static_cast<int>(abs >> 23) - 127 + 15;
    uint32_t mant = abs & 0x7fffffu;

    if (exp >= 31) return sign | 0x7c00u;  // overflow -> inf

    uint32_t shift;
    if (exp >= 1) {
        shift = 13;
        mant |= static_cast<uint32_t>(exp) << 23;  // keep exponent adjacent for carry propagation
    } else {
        // Subnormal range: value = 1.mant * 2^(exp-15), representable as
        // mant24 * 2^-24 after shifting the implicit bit in.
        if (exp < -10) return sign;  // underflows to zero even after rounding
        mant |= 0x800000u;
        shift = static_cast<uint32_t>(14 - exp);
    }

    const uint32_t lsb = (mant >> shift) & 1u;
    const uint32_t round = (mant >> (shift - 1)) & 1u;
    const uint32_t sticky = (mant & ((1u << (shift - 1)) - 1u)) != 0 ? 1u : 0u;
    uint32_t out = mant >> shift;
    if (round && (sticky || lsb)) out += 1;  // round to nearest, ties to even
    // A mantissa carry walks into the exponent field; overflow to inf encodes
    // itself (exp 31, mant 0).
    return static_cast<uint16_t>(sign | (out & 0x7fffu));
}

float f16_to_f32(uint16_t h) {
    const uint32_t sign = static_cast<uint32_t>(h & 0x8000u) << 16;
    uint32_t exp = (h >> 10) & 0x1fu;
    uint32_t mant = h & 0x3ffu;

    uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            // Normalize the subnormal: shift until the implicit bit appears.
            int e = 113;  // f32 biased exponent of 2^-14
            while (!(mant & 0x400u)) {
                mant <<= 1;
                --e;
            }
            mant &= 0x3ffu;
            bits = sign | (static_cast<uint32_t>(e) << 23) | (mant << 13);
        }
    } else if (exp == 31) {
        bits = sign | 0x7f800000u | (mant << 13);
    } else {
        bits = sign | ((exp + 112) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

float f16_round(float x) { return f16_to_f32(f16_from_f32(x)); }

bool f16_is_finite(uint16_t h) { return ((h >> 10) & 0x1fu) != 0x1fu; }

}  // namespace gemflow
