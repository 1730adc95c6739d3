#pragma once

#include <cstdint>
#include <set>
#include <string>

namespace gemflow::accel {

enum class Feature : uint8_t {
    Normalization,
    Transposition,
    VirtualAddressing,
    KernelDilation,
};

const char* feature_name(Feature f);
Feature feature_from_name(const std::string& name);

// Weight-stationary systolic accelerator parameters. The two presets mirror
// the evaluated FPGA configurations; bus width and DRAM latency are modeling
// constants shared by both (documented in the README).
struct AcceleratorConfig {
    int dim = 32;                 // PE array dimension (weight stationary)
    int spad_kib = 512;           // i8 scratchpad capacity
    int acc_kib = 128;            // i32 accumulator capacity
    int spad_banks = 4;
    int acc_banks = 2;
    int spad_ports = 2;           // concurrent accessors per bank per cycle
    int spad_read_delay = 8;      // additive read latency, cycles
    int output_bits = 18;         // spatial-array output width
    bool saturate_output = false; // apply the output_bits saturation stage
    int max_inflight = 32;        // outstanding DRAM requests
    int bus_bytes = 16;           // DRAM bytes per cycle
    int dram_latency = 40;        // request latency, cycles
    int freq_mhz = 150;
    // Route the array MACs through the two-weights-per-multiplier packing.
    // Functionally invisible; halves the multiplier count (see dsp_pack).
    bool use_dsp_packing = true;
    std::set<Feature> disabled;   // disabled optional hardware features

    static AcceleratorConfig ours();
    static AcceleratorConfig baseline();
    static AcceleratorConfig preset(const std::string& name);  // "ours" | "baseline"

    int64_t spad_rows() const { return static_cast<int64_t>(spad_kib) * 1024 / dim; }
    int64_t acc_rows() const { return static_cast<int64_t>(acc_kib) * 1024 / (4 * dim); }
    int64_t spad_rows_per_bank() const { return spad_rows() / spad_banks; }
    int64_t acc_rows_per_bank() const { return acc_rows() / acc_banks; }

    void validate() const;
    uint64_t hash() const;  // stable FNV-1a over the canonical field encoding
    std::string to_json() const;
    static AcceleratorConfig from_json(const std::string& text);
};

// Returns a copy with the given features disabled.
AcceleratorConfig feature_flags(const AcceleratorConfig& cfg, const std::set<Feature>& disable);

}  // namespace gemflow::accel
