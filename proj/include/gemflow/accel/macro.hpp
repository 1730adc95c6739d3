#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "gemflow/accel/sim.hpp"
#include "gemflow/types.hpp"

namespace gemflow::accel {

// Coarse-grained operations expanded by the default heuristic schedule into
// RISC streams, mirroring the hardcoded state machines of the hardware.
struct TiledMatmul {
    int64_t m = 0, k = 0, n = 0;
    std::vector<int8_t> a;                   // m x k, row-major
    std::vector<int8_t> b;                   // k x n, row-major
    std::optional<std::vector<int32_t>> bias;  // n
    RequantSpec requant;
};

struct TiledConv {
    int64_t in_h = 0, in_w = 0, cin = 0, cout = 0;
    int kh = 1, kw = 1, stride = 1;
    bool same_padding = true;
    int8_t pad_value = 0;                    // input zero point
    std::vector<int8_t> input;               // NHWC codes
    std::vector<int8_t> filter;              // [Kh,Kw,Cin,Cout]
    std::optional<std::vector<int32_t>> bias;  // Cout, already zero-point folded
    RequantSpec requant;
};

using MacroOp = std::variant<TiledMatmul, TiledConv>;

struct MacroResult {
    std::vector<int8_t> out;  // row-major (matmul: m x n; conv: Hout x Wout x Cout)
    int64_t out_rows = 0, out_cols = 0;
    CycleReport cycles;
    InstructionStream stream;  // the expanded RISC stream, inspectable
};

MacroResult execute_macro(const AcceleratorConfig& cfg, const MacroOp& op);

}  // namespace gemflow::accel
