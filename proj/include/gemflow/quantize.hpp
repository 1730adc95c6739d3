#pragma once

#include <map>
#include <string>
#include <vector>

#include "gemflow/graph.hpp"
#include "gemflow/reference.hpp"

namespace gemflow {

// Observed (min, max) per tensor id, zero-included. Degenerate ranges are
// widened to (min, min + 1e-6) so a positive scale always exists.
struct CalibrationStats {
    std::map<std::string, std::pair<float, float>> ranges;

    std::string to_json() const;
    static CalibrationStats from_json(const std::string& text);
};

// Runs the f32 reference executor over every sample and records per-tensor
// ranges (graph inputs included).
CalibrationStats calibrate(const Graph& g, const std::vector<TensorMap>& samples);

// Asymmetric i8 params for an activation range; symmetric for weights.
QuantParams derive_activation_qparams(float mn, float mx);
QuantParams derive_weight_qparams(float max_abs);

// Returns a new graph where every Conv2D/MaxPool2D/Resize/Concat/Add runs in
// i8 (per-tensor params, weights symmetric, folded i32 bias, f16 requant
// multipliers) and Sigmoid/BoxDecode/NMS stay in f32, with Quantize /
// Dequantize nodes inserted exactly at the dtype frontier.
Graph quantize_graph(const Graph& g, const CalibrationStats& stats);

}  // namespace gemflow
