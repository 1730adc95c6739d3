#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gemflow/accel/config.hpp"
#include "gemflow/prune.hpp"
#include "gemflow/runtime.hpp"

namespace gemflow {

// End-to-end deployment pipeline configuration. Flags override config-file
// values; the CLI maps both onto this struct.
struct PipelineConfig {
    std::string model_path;
    std::string out_dir = "out";
    std::string accel = "ours";  // preset name or a path to a config JSON
    int64_t rescale = 0;         // square input size; 0 keeps the model's size
    std::string plan_path;       // pruning plan JSON (optional)
    bool skip_prune = false;
    bool skip_tune = false;
    size_t budget = 24;
    uint64_t seed = 1;
    int calib_samples = 2;
    std::string calib_path;   // raw little-endian f32 samples (optional)
    std::string input_path;   // raw little-endian f32 input (optional)
    double power_w = 3.68;
    int jobs = 1;
    bool emit_json = true;
    bool emit_csv = true;

    accel::AcceleratorConfig resolve_accel() const;
    std::string to_json() const;
    static PipelineConfig from_json(const std::string& text);
    uint64_t hash() const;
};

struct PipelineResult {
    std::vector<std::string> stages_run;
    std::vector<std::string> artifacts;
    RunReport report;
    GraphTuneSummary tune_summary;
    std::vector<PruningStats> prune_stats;
    int detections = 0;
};

// replace_activations -> rescale -> prune -> calibrate -> quantize ->
// partition -> tune -> run, writing every stage's artifact under out_dir.
// Aborts carry the failing stage's name; artifacts written by a failing
// stage are renamed with a .partial suffix.
PipelineResult run_pipeline(const PipelineConfig& cfg);

// CSV rows (size, gop, note) for rescaled variants of a model.
std::string analyze_input_sizes(const Graph& g, const std::vector<int64_t>& sizes);

// Deterministic synthetic input samples for calibration and demo runs.
TensorMap synth_input(const Graph& g, uint64_t seed);

}  // namespace gemflow
