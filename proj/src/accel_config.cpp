#include "gemflow/accel/config.hpp"

#include <json.hpp>

#include "gemflow/errors.hpp"

namespace gemflow::accel {

using nlohmann::json;

const char* feature_name(Feature f) {
    switch (f) {
        case Feature::Normalization: return "normalization";
        case Feature::Transposition: return "transposition";
        case Feature::VirtualAddressing: return "virtual_addressing";
        case Feature::KernelDilation: return "kernel_dilation";
    }
    return "?";
}

Feature feature_from_name(const std::string& name) {
    if (name == "normalization") return Feature::Normalization;
    if (name == "transposition") return Feature::Transposition;
    if (name == "virtual_addressing") return Feature::VirtualAddressing;
    if (name == "kernel_dilation") return Feature::KernelDilation;
    throw ValidationError("unknown accelerator feature: " + name);
}

AcceleratorConfig AcceleratorConfig::ours() { return AcceleratorConfig{}; }

AcceleratorConfig AcceleratorConfig::baseline() {
    AcceleratorConfig c;
    c.dim = 16;
    c.spad_kib = 256;
    c.acc_kib = 64;
    c.spad_ports = 1;
    c.spad_read_delay = 4;
    c.output_bits = 20;
    c.max_inflight = 16;
    c.freq_mhz = 100;
    c.use_dsp_packing = false;  // the unmodified design maps one MAC per DSP
    return c;
}

AcceleratorConfig AcceleratorConfig::preset(const std::string& name) {
    if (name == "ours") return ours();
    if (name == "baseline") return baseline();
    throw ValidationError("unknown accelerator preset: " + name);
}

void AcceleratorConfig::validate() const {
    if (dim < 1) throw ValidationError("config: dim must be positive");
    if (static_cast<int64_t>(spad_kib) * 1024 % (static_cast<int64_t>(dim) * spad_banks) != 0)
        throw ValidationError("config: scratchpad capacity must divide into rows and banks");
    if (static_cast<int64_t>(acc_kib) * 1024 % (static_cast<int64_t>(4 * dim) * acc_banks) != 0)
        throw ValidationError("config: accumulator capacity must divide into rows and banks");
    if (spad_ports < 1 || max_inflight < 1 || bus_bytes < 1 || freq_mhz < 1)
        throw ValidationError("config: ports, inflight, bus and frequency must be positive");
    if (spad_read_delay < 0 || dram_latency < 0)
        throw ValidationError("config: latencies must be non-negative");
    if (output_bits < 2 || output_bits > 32)
        throw ValidationError("config: output_bits out of range");
    if (use_dsp_packing && dim % 2 != 0)
        throw ValidationError("config: dsp packing requires an even array dimension");
}

std::string AcceleratorConfig::to_json() const {
    json j{{"dim", dim},
           {"dataflow", "weight_stationary"},
           {"spad_kib", spad_kib},
           {"acc_kib", acc_kib},
           {"spad_banks", spad_banks},
           {"acc_banks", acc_banks},
           {"spad_ports", spad_ports},
           {"spad_read_delay", spad_read_delay},
           {"output_bits", output_bits},
           {"saturate_output", saturate_output},
           {"max_inflight", max_inflight},
           {"bus_bytes", bus_bytes},
           {"dram_latency", dram_latency},
           {"freq_mhz", freq_mhz},
           {"use_dsp_packing", use_dsp_packing}};
    json dis = json::array();
    for (Feature f : disabled) dis.push_back(feature_name(f));
    j["disabled_features"] = dis;
    return j.dump(2) + "\n";
}

AcceleratorConfig AcceleratorConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    AcceleratorConfig c;
    c.dim = j.value("dim", c.dim);
    if (j.contains("dataflow") && j.at("dataflow").get<std::string>() != "weight_stationary")
        throw ValidationError("config: only weight_stationary dataflow is modeled");
    c.spad_kib = j.value("spad_kib", c.spad_kib);
    c.acc_kib = j.value("acc_kib", c.acc_kib);
    c.spad_banks = j.value("spad_banks", c.spad_banks);
    c.acc_banks = j.value("acc_banks", c.acc_banks);
    c.spad_ports = j.value("spad_ports", c.spad_ports);
    c.spad_read_delay = j.value("spad_read_delay", c.spad_read_delay);
    c.output_bits = j.value("output_bits", c.output_bits);
    c.saturate_output = j.value("saturate_output", c.saturate_output);
    c.max_inflight = j.value("max_inflight", c.max_inflight);
    c.bus_bytes = j.value("bus_bytes", c.bus_bytes);
    c.dram_latency = j.value("dram_latency", c.dram_latency);
    c.freq_mhz = j.value("freq_mhz", c.freq_mhz);
    c.use_dsp_packing = j.value("use_dsp_packing", c.use_dsp_packing);
    if (j.contains("disabled_features"))
        for (const auto& f : j.at("disabled_features"))
            c.disabled.insert(feature_from_name(f.get<std::string>()));
    c.validate();
    return c;
}

uint64_t AcceleratorConfig::hash() const {
    const std::string s = to_json();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

AcceleratorConfig feature_flags(const AcceleratorConfig& cfg, const std::set<Feature>& disable) {
    AcceleratorConfig out = cfg;
    for (Feature f : disable) out.disabled.insert(f);
    return out;
}

}  // namespace gemflow::accel
