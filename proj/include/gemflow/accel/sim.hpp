#pragma once

#include <cstdint>
#include <vector>

#include "gemflow/accel/isa.hpp"

namespace gemflow::accel {

struct CycleReport {
    uint64_t load_busy = 0;
    uint64_t exec_busy = 0;
    uint64_t store_busy = 0;
    uint64_t total = 0;  // makespan: cycle at which the last instruction retires
};

struct ExecOptions {
    bool timing_only = false;  // skip the functional array math (cycles are data-independent)
};

// Executes a stream against a DRAM byte image. The three controllers consume
// their instruction subsequences concurrently; a row-range scoreboard orders
// conflicting accesses, DRAM transfers overlap their latency up to
// max_inflight with serialized bus occupancy, and fences join all three
// controllers. Deterministic: identical inputs give identical outputs and
// identical cycle reports.
struct ExecResult {
    std::vector<uint8_t> dram;
    CycleReport cycles;
};

ExecResult execute_stream(const AcceleratorConfig& cfg, const InstructionStream& stream,
                          std::vector<uint8_t> dram, const ExecOptions& opts = {});

}  // namespace gemflow::accel
