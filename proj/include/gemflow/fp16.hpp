#pragma once

#include <cstdint>

namespace gemflow {

// Software IEEE 754 binary16 conversion. The requantization path stores its
// multiplier as an f16 value, so the rounding here must be bit-deterministic
// across hosts (round-to-nearest-even, subnormals kept).
uint16_t f16_from_f32(float x);
float f16_to_f32(uint16_t h);

// f32 -> nearest f16 -> f32. Identity on values already representable in f16.
float f16_round(float x);

bool f16_is_finite(uint16_t h);

}  // namespace gemflow
