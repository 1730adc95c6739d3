#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "gemflow/fp16.hpp"

namespace gemflow {

enum class DType : uint8_t { I8, I32, F16, F32 };

const char* dtype_name(DType t);
DType dtype_from_name(const std::string& name);
int dtype_bytes(DType t);

// Per-tensor affine quantization. `scale` is the f32 master value; `scale_f16`
// is its deterministic binary16 rounding (what the accelerator's output path
// actually multiplies by).
struct QuantParams {
    float scale = 1.0f;
    float scale_f16 = 1.0f;
    int32_t zero_point = 0;

    static QuantParams make(float scale, int32_t zero_point);
    bool operator==(const QuantParams&) const = default;
};

// i32 accumulator -> i8 rescale applied on the accelerator's store path.
// multiplier is kept as an f16-rounded f32 value; clamp bounds are in the
// quantized output domain (already include the zero point).
struct RequantSpec {
    float multiplier = 1.0f;  // guaranteed representable in f16
    int32_t zero_point = 0;
    std::optional<std::pair<int32_t, int32_t>> clamp;  // (lo, hi), inclusive

    static RequantSpec make(float multiplier_f32, int32_t zero_point,
                            std::optional<std::pair<int32_t, int32_t>> clamp = std::nullopt);
    uint16_t multiplier_bits() const { return f16_from_f32(multiplier); }
    bool operator==(const RequantSpec&) const = default;
};

// Saturating rescale of an i32 accumulator to i8:
//   sat_i8(clamp(round_half_even(f32(acc) * multiplier) + zero_point))
// The multiply happens in f32 with the f16-rounded multiplier.
int8_t requantize(int32_t acc, const RequantSpec& spec);

// NHWC shape, batch pinned to 1.
struct Shape4 {
    std::array<int64_t, 4> d{1, 1, 1, 1};

    int64_t n() const { return d[0]; }
    int64_t h() const { return d[1]; }
    int64_t w() const { return d[2]; }
    int64_t c() const { return d[3]; }
    int64_t elements() const { return d[0] * d[1] * d[2] * d[3]; }
    bool operator==(const Shape4&) const = default;
};

struct TensorSpec {
    Shape4 shape;
    DType dtype = DType::F32;
    std::optional<QuantParams> qparams;  // present iff dtype == I8

    int64_t bytes() const { return shape.elements() * dtype_bytes(dtype); }
    bool operator==(const TensorSpec&) const = default;
};

}  // namespace gemflow
