#pragma once

#include <array>
#include <optional>
#include <string>

#include "gemflow/accel/isa.hpp"
#include "gemflow/accel/sim.hpp"
#include "gemflow/graph.hpp"

namespace gemflow {

// Tiling schedule for one lowered layer. Tile sizes are in units of the array
// dimension: tile_i output rows, tile_j output columns/channels, tile_k
// reduction. loop_order indexes kLoopOrders (outer to inner).
struct Schedule {
    int tile_i = 1, tile_j = 1, tile_k = 1;
    uint8_t loop_order = 0;
    bool double_buffer = false;

    bool operator==(const Schedule&) const = default;
    // Deterministic tie-break order for the tuner.
    auto lex_key() const { return std::tie(tile_i, tile_j, tile_k, loop_order, double_buffer); }

    std::string to_json() const;
    static Schedule from_json(const std::string& text);
};

inline constexpr std::array<std::array<char, 3>, 6> kLoopOrders = {{
    {'i', 'j', 'k'},
    {'i', 'k', 'j'},
    {'j', 'i', 'k'},
    {'j', 'k', 'i'},
    {'k', 'i', 'j'},
    {'k', 'j', 'i'},
}};

std::string loop_order_name(uint8_t idx);
uint8_t loop_order_from_name(const std::string& name);

// Capacity legality:
//   i8  (tile_i*tile_k + tile_k*tile_j) * dim^2 <= spad  (halved when double buffering)
//   i32 tile_i*tile_j * dim^2 * 4 <= accumulator
bool schedule_legal(const Schedule& s, const accel::AcceleratorConfig& cfg);
// Throws with the failing capacity constraint spelled out.
void check_schedule(const Schedule& s, const accel::AcceleratorConfig& cfg);

// Patch-gather geometry when A is a convolution input in NHWC layout.
struct ConvGeom {
    int64_t in_h = 0, in_w = 0, cin = 0;
    int kh = 1, kw = 1, stride = 1;
    int64_t pad_top = 0, pad_left = 0;
    int64_t out_h = 0, out_w = 0;
    int8_t pad_value = 0;
};

// A tiled matmul problem bound to DRAM addresses: out[m,n] = requant(A.B + bias).
struct MatmulDesc {
    int64_t m = 0, k = 0, n = 0;
    std::optional<ConvGeom> im2col;  // A gathered from a conv input when set
    uint64_t a_addr = 0;
    uint64_t b_addr = 0;                  // k x n i8, row-major
    std::optional<uint64_t> bias_addr;    // n i32 values
    uint64_t out_addr = 0;                // m x n i8
    uint64_t psum_addr = 0;               // m x n i32 spill region (k-outer orders)
    RequantSpec requant;
};

// Expands the tiled loop nest into a RISC instruction stream. Functionally
// identical for every legal schedule; only the cycle count changes.
accel::InstructionStream lower_tiled(const MatmulDesc& desc, const accel::AcceleratorConfig& cfg,
                                     const Schedule& sched);

// Greedy heuristic: maximize tile_k, then tile_j, then tile_i under the
// legality rule; loop order (i,j,k); no double buffering. This is the
// CISC-equivalent default.
Schedule default_schedule(int64_t m, int64_t k, int64_t n, const accel::AcceleratorConfig& cfg);

// Lowered form of one graph node: the stream plus its DRAM image layout.
struct NodeLowering {
    accel::InstructionStream stream;
    uint64_t dram_size = 0;
    std::vector<std::pair<std::string, uint64_t>> input_offsets;  // tensor id -> DRAM offset
    uint64_t out_offset = 0;
    // Bytes the runtime must stage before execution (weights, bias, constants).
    std::vector<std::pair<uint64_t, std::vector<uint8_t>>> staged;
    // im2col matmul view of a conv (informational, for tuning fingerprints).
    int64_t m = 0, k = 0, n = 0;
};

// Lowers a quantized Conv2D via im2col matmul.
NodeLowering lower_conv(const Graph& g, const Node& n, const accel::AcceleratorConfig& cfg,
                        const std::optional<Schedule>& sched = std::nullopt);

// Lowers MaxPool2D / ResizeNearest / Concat / Add as data-movement streams.
NodeLowering lower_aux(const Graph& g, const Node& n, const accel::AcceleratorConfig& cfg);

// Either of the above, by node kind.
NodeLowering lower_node(const Graph& g, const Node& n, const accel::AcceleratorConfig& cfg,
                        const std::optional<Schedule>& sched = std::nullopt);

// im2col dimensions of a conv node: M = Hout*Wout, K = Kh*Kw*Cin, N = Cout.
void conv_matmul_dims(const Graph& g, const Node& n, int64_t& m, int64_t& k, int64_t& n_out);

}  // namespace gemflow
