#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gemflow/accel/config.hpp"
#include "gemflow/autotune.hpp"
#include "gemflow/reference.hpp"
#include "gemflow/schedule.hpp"

namespace gemflow {

// Dtype-based split of a quantized graph. Nodes with i8 outputs (including
// the input-side Quantize) run on the accelerator; f32 nodes (including
// Dequantize) run on the host.
struct Partition {
    Graph accel_part;
    Graph host_part;
    // Cut tensors produced on the accelerator and consumed by the host,
    // with their transfer sizes in bytes.
    std::vector<std::pair<std::string, int64_t>> boundary;
};

Partition partition(const Graph& g);

// Scalar-core latency proxy: documented per-op-class cycle costs at a fixed
// clock. Stands in for a measured CPU.
struct HostModel {
    double freq_ghz = 1.2;
    double cycles_conv_op = 1.0;
    double cycles_element_op = 4.0;
    double cycles_sigmoid_op = 24.0;
    double cycles_decode_op = 12.0;
    double cycles_nms_op = 48.0;
    double cycles_quant_op = 4.0;
};

// Proxy milliseconds for running `nodes` of the graph on a scalar core.
double host_proxy_ms(const Graph& g, const HostModel& hm);

struct RunReport {
    uint64_t accel_cycles = 0;
    double accel_ms = 0.0;
    double host_ms = 0.0;
    double transfer_ms = 0.0;
    double total_ms = 0.0;
    double gop = 0.0;
    double gop_per_s = 0.0;
    double energy_j = 0.0;
    double efficiency = 0.0;  // gop_per_s / power_w == gop / energy_j
    double power_w = 0.0;

    std::string to_json() const;
    std::string to_csv() const;
};

struct EndToEndOptions {
    double power_w = 3.68;
    HostModel host;
    double transfer_ms_per_mib = 0.0;  // shared-memory transfers cost nothing by default
};

struct EndToEndResult {
    std::vector<Detection> detections;
    RunReport report;
    TensorMap outputs;  // final graph outputs
};

// Executes the accelerator subgraph layer by layer through the simulator
// (inter-layer tensors round-trip through the modeled DRAM), dequantizes the
// boundary, runs the host subgraph, and assembles the report. Detections are
// bit-identical to a purely functional execution of the same graph.
EndToEndResult run_end_to_end(const Graph& quantized, const accel::AcceleratorConfig& cfg,
                              const std::map<std::string, BestChoice>& schedules,
                              const TensorMap& inputs, const EndToEndOptions& opts = {});

struct PlacementRow {
    std::string name;  // only-accel | only-host | mixed
    double accel_ms = 0.0;
    double host_ms = 0.0;
    double transfer_ms = 0.0;
    double total_ms = 0.0;
};

// Latency comparison of the three placements under the same models. With
// zero transfer cost the mixed row never loses.
std::vector<PlacementRow> compare_placements(const Graph& quantized,
                                             const accel::AcceleratorConfig& cfg,
                                             const std::map<std::string, BestChoice>& schedules,
                                             const TensorMap& inputs,
                                             const EndToEndOptions& opts = {});

std::string detections_to_jsonl(const std::vector<Detection>& dets);
std::string placements_to_csv(const std::vector<PlacementRow>& rows);

// Functional-only execution of a quantized graph (no simulator), used for
// recomposition checks. Shares the integer kernels with the simulator path.
TensorMap run_functional(const Graph& quantized, const TensorMap& inputs);

// Runs one accelerator node through the simulator: stages the DRAM image,
// executes the lowered stream and reads the output back. Adds the stream's
// makespan to `cycles`.
Tensor run_node_on_accel(const Graph& g, const Node& n, const accel::AcceleratorConfig& cfg,
                         const std::optional<Schedule>& sched, const TensorMap& inputs,
                         uint64_t& cycles);

}  // namespace gemflow
