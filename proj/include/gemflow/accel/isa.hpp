#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "gemflow/accel/config.hpp"
#include "gemflow/types.hpp"

namespace gemflow::accel {

enum class Space : uint8_t { Spad, Acc };

struct LocalAddr {
    Space space = Space::Spad;
    uint32_t row = 0;
    bool accumulate = false;  // accumulator writes: add instead of overwrite
    bool operator==(const LocalAddr&) const = default;
};

// Patch-gather addressing for convolution loads: the load controller walks
// output positions m0.. and reduction indices k0.., reading the input tensor
// in NHWC order and substituting pad_value outside the spatial bounds.
struct Im2colDesc {
    uint32_t in_h = 0, in_w = 0, channels = 0;
    uint16_t kh = 1, kw = 1;
    uint16_t stride = 1;
    int16_t pad_top = 0, pad_left = 0;
    uint32_t out_w = 0;
    int8_t pad_value = 0;
    uint32_t m0 = 0;  // first output position (row-major over the output plane)
    uint32_t k0 = 0;  // first reduction index ((kh*Kw + kw)*Cin + ci)
    bool operator==(const Im2colDesc&) const = default;
};

// Window-max addressing for pooled stores. Local rows hold flattened input
// spatial positions (starting at in_pos0); the store walks output positions
// m0.. and reduces each clipped window.
struct PoolDesc {
    uint16_t window = 2, stride = 2;
    int16_t pad_top = 0, pad_left = 0;
    uint32_t in_h = 0, in_w = 0;
    uint32_t out_w = 0;
    uint32_t in_pos0 = 0;
    uint32_t m0 = 0;
    bool operator==(const PoolDesc&) const = default;
};

struct ConfigEx {
    RequantSpec requant;
    uint8_t norm_mode = 0;  // nonzero requires the normalization feature
    bool operator==(const ConfigEx&) const = default;
};

struct ConfigLd {
    int64_t dram_stride = 0;  // bytes between successive rows
    uint8_t elem_bytes = 1;   // 1 (i8) or 4 (i32)
    std::optional<Im2colDesc> im2col;
    bool operator==(const ConfigLd&) const = default;
};

struct ConfigSt {
    int64_t dram_stride = 0;
    std::optional<PoolDesc> pool;
    bool operator==(const ConfigSt&) const = default;
};

struct Mvin {
    uint64_t dram_addr = 0;
    LocalAddr local;
    uint16_t rows = 0;
    uint16_t cols = 0;
    bool transpose = false;      // requires the transposition feature
    bool virtual_addr = false;   // requires virtual addressing
};

struct Mvout {
    LocalAddr local;
    uint64_t dram_addr = 0;
    uint16_t rows = 0;
    uint16_t cols = 0;
    bool full_precision = false;  // raw i32 accumulator spill
    bool virtual_addr = false;
};

struct Preload {
    LocalAddr weights;  // spad rows [row, row+dim): one k-row per local row
    LocalAddr dest;     // default accumulator destination
};

struct Compute {
    LocalAddr a;     // activation rows in the scratchpad
    LocalAddr dest;  // accumulator rows receiving the partial sums
    uint16_t rows = 0;
    bool accumulate = false;
};

struct Fence {};

using Instruction =
    std::variant<ConfigEx, ConfigLd, ConfigSt, Mvin, Mvout, Preload, Compute, Fence>;

using InstructionStream = std::vector<Instruction>;

// Line-oriented text trace, one instruction per line with a fixed field
// order; round-trips exactly.
std::string serialize_stream(const InstructionStream& stream);
InstructionStream parse_stream(const std::string& text);

// Rejects instruction attributes whose hardware feature is disabled.
void validate_stream_features(const AcceleratorConfig& cfg, const InstructionStream& stream);

}  // namespace gemflow::accel
