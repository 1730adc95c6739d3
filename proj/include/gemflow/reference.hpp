#pragma once

#include <map>
#include <string>
#include <vector>

#include "gemflow/graph.hpp"

namespace gemflow {

// Host-side tensor value. Exactly one of the two buffers is active,
// matching spec.dtype.
struct Tensor {
    TensorSpec spec;
    std::vector<float> f;
    std::vector<int8_t> q;

    static Tensor zeros(const TensorSpec& spec);
    int64_t elements() const { return spec.shape.elements(); }
};

using TensorMap = std::map<std::string, Tensor>;

// Executes every node with reference semantics: f32 nodes in float, i8 nodes
// with the exact integer kernels the accelerator model implements (i32
// accumulate, folded bias, f16-multiplier requantization). Returns all
// intermediate tensors keyed by tensor id.
TensorMap run_reference(const Graph& g, const TensorMap& inputs);

// Single-op integer kernels, shared with the simulator oracles.
Tensor reference_conv_i8(const Graph& g, const Node& n, const Tensor& input);
Tensor reference_conv_f32(const Graph& g, const Node& n, const Tensor& input);

// Detection row extraction from an NMS output tensor (rows of
// [x1,y1,x2,y2,score,class]; zero-score rows are padding).
struct Detection {
    float x1, y1, x2, y2;
    float score;
    int class_id;
};
std::vector<Detection> detections_from_tensor(const Tensor& t);

float sigmoid(float x);
float iou_xyxy(float ax1, float ay1, float ax2, float ay2, float bx1, float by1, float bx2,
               float by2);

// Quantize an f32 value with round-half-even (the same rounding the
// requantization path uses).
int8_t quantize_value(float x, const QuantParams& qp);
float dequantize_value(int8_t q, const QuantParams& qp);

}  // namespace gemflow
