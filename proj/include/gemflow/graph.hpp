#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gemflow/errors.hpp"
#include "gemflow/types.hpp"

namespace gemflow {

enum class OpKind : uint8_t {
    Conv2D,
    MaxPool2D,
    ResizeNearest,
    Concat,
    Add,
    Quantize,
    Dequantize,
    Sigmoid,
    BoxDecode,
    Nms,
};

const char* op_name(OpKind op);
OpKind op_from_name(const std::string& name);

enum class Activation : uint8_t { None, Relu6, LeakyRelu };
enum class Padding : uint8_t { Same, Valid };

struct ConvAttrs {
    int kh = 1, kw = 1;
    int stride = 1;
    int dilation = 1;  // accepted in the format; only 1 is lowerable
    Padding padding = Padding::Same;
    bool has_bias = true;
    Activation activation = Activation::None;
    float leaky_alpha = 0.1f;
    bool operator==(const ConvAttrs&) const = default;
};

struct PoolAttrs {
    int kernel = 2;
    int stride = 2;
    Padding padding = Padding::Valid;
    bool operator==(const PoolAttrs&) const = default;
};

struct ResizeAttrs {
    int factor = 2;
    bool operator==(const ResizeAttrs&) const = default;
};

struct ConcatAttrs {  // channel axis only
    bool operator==(const ConcatAttrs&) const = default;
};

struct AddAttrs {
    bool operator==(const AddAttrs&) const = default;
};

struct UnaryAttrs {  // Quantize / Dequantize / Sigmoid
    bool operator==(const UnaryAttrs&) const = default;
};

struct BoxDecodeAttrs {
    int stride = 8;  // feature-map stride in input pixels
    std::vector<std::array<float, 2>> anchors;
    bool operator==(const BoxDecodeAttrs&) const = default;
};

struct NmsAttrs {
    float iou_thresh = 0.45f;
    float conf_thresh = 0.25f;
    bool operator==(const NmsAttrs&) const = default;
};

using OpAttrs = std::variant<ConvAttrs, PoolAttrs, ResizeAttrs, ConcatAttrs, AddAttrs,
                             UnaryAttrs, BoxDecodeAttrs, NmsAttrs>;

// Byte extent into the graph's weights blob. For Conv2D the extent holds the
// filter tensor [Kh,Kw,Cin,Cout] followed by the bias [Cout] when present
// (f32 weights + f32 bias, or i8 weights + i32 bias once quantized).
struct WeightRef {
    uint64_t offset = 0;
    uint64_t length = 0;
    bool operator==(const WeightRef&) const = default;
};

struct Node {
    std::string id;  // doubles as the output tensor id
    OpKind op = OpKind::Conv2D;
    std::vector<std::string> inputs;
    TensorSpec output;
    std::optional<WeightRef> weight_ref;
    OpAttrs attrs;
    std::optional<RequantSpec> requant;  // set by the quantizer on Conv2D/Add

    const ConvAttrs& conv() const { return std::get<ConvAttrs>(attrs); }
    const PoolAttrs& pool() const { return std::get<PoolAttrs>(attrs); }
    const ResizeAttrs& resize() const { return std::get<ResizeAttrs>(attrs); }
    const BoxDecodeAttrs& box_decode() const { return std::get<BoxDecodeAttrs>(attrs); }
    const NmsAttrs& nms() const { return std::get<NmsAttrs>(attrs); }
};

struct GraphInput {
    std::string id;
    TensorSpec spec;
};

// Immutable after construction; transforms return new graphs.
struct Graph {
    std::vector<GraphInput> inputs;
    std::vector<std::string> outputs;
    std::vector<Node> nodes;  // kept in a valid topological order
    std::vector<uint8_t> weights;

    const Node& node(const std::string& id) const;
    Node& node(const std::string& id);
    bool has_node(const std::string& id) const;
    const TensorSpec& tensor(const std::string& id) const;  // node output or graph input
    bool is_graph_input(const std::string& id) const;

    // Consumers of a tensor id, in node order.
    std::vector<const Node*> consumers(const std::string& id) const;

    std::span<const uint8_t> weight_bytes(const Node& n) const;
    // Filter views / bias copies for Conv2D nodes. Bias is copied because the
    // blob does not guarantee 4-byte alignment of the bias region.
    std::vector<float> conv_filter_f32(const Node& n) const;
    std::vector<float> conv_bias_f32(const Node& n) const;
    std::span<const int8_t> conv_filter_i8(const Node& n) const;
    std::vector<int32_t> conv_bias_i32(const Node& n) const;

    // Full structural validation: topology, shape rules, dtype/qparams
    // pairing, weight extents tiling the blob exactly.
    void validate() const;
};

// Shape rule shared by validation and the transforms. Throws ValidationError
// with the node id on any rule violation.
Shape4 infer_output_shape(const Node& n, const std::vector<Shape4>& input_shapes);

// Conv/pool spatial arithmetic (same rules the accelerator lowering uses).
struct SpatialOut {
    int64_t out = 0;
    int64_t pad_begin = 0;
    int64_t pad_end = 0;
};
SpatialOut conv_spatial(int64_t in, int kernel, int stride, Padding padding);

int64_t conv_filter_elems(const Node& n, const Graph& g);

}  // namespace gemflow
