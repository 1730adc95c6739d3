#include "gemflow/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace gemflow {

const char* dtype_name(DType t) {
    switch (t) {
        case DType::I8: return "i8";
        case DType::I32: return "i32";
        case DType::F16: return "f16";
        case DType::F32: return "f32";
    }
    return "?";
}

DType dtype_from_name(const std::string& name) {
    if (name == "i8") return DType::I8;
    if (name == "i32") return DType::I32;
    if (name == "f16") return DType::F16;
    if (name == "f32") return DType::F32;
    throw ValidationError("unknown dtype: " + name);
}

int dtype_bytes(DType t) {
    switch (t) {
        case DType::I8: return 1;
        case DType::I32: return 4;
        case DType::F16: return 2;
        case DType::F32: return 4;
    }
    return 0;
}

QuantParams QuantParams::make(float scale, int32_t zero_point) {
    if (!(scale > 0.0f)) throw ValidationError("QuantParams: scale must be positive");
    if (zero_point < -128 || zero_point > 127)
        throw ValidationError("QuantParams: zero_point out of i8 range");
    QuantParams qp;
    qp.scale = scale;
    qp.scale_f16 = f16_round(scale);
    qp.zero_point = zero_point;
    return qp;
}

RequantSpec RequantSpec::make(float multiplier_f32, int32_t zero_point,
                              std::optional<std::pair<int32_t, int32_t>> clamp) {
    const uint16_t bits = f16_from_f32(multiplier_f32);
    if (!f16_is_finite(bits))
        throw ValidationError("RequantSpec: multiplier overflows f16");
    const float m = f16_to_f32(bits);
    if (!(m > 0.0f)) throw ValidationError("RequantSpec: multiplier must be positive");
    if (clamp) {
        if (clamp->first > clamp->second)
            throw ValidationError("RequantSpec: clamp lo > hi");
        if (clamp->first < -128 || clamp->second > 127)
            throw ValidationError("RequantSpec: clamp outside i8 range");
    }
    return RequantSpec{m, zero_point, clamp};
}

int8_t requantize(int32_t acc, const RequantSpec& spec) {
    const float product = static_cast<float>(acc) * spec.multiplier;
    // Round half to even on the f32 product. std::nearbyint honours the
    // default FE_TONEAREST mode, but an explicit implementation keeps the
    // kernel independent of ambient fenv state.
    const double p = static_cast<double>(product);
    double r = std::floor(p);
    const double frac = p - r;
    if (frac > 0.5) {
        r += 1.0;
    } else if (frac == 0.5) {
        if (std::fmod(r, 2.0) != 0.0) r += 1.0;
    }
    int64_t v = static_cast<int64_t>(r) + spec.zero_point;
    if (spec.clamp) {
        v = std::max<int64_t>(v, spec.clamp->first);
        v = std::min<int64_t>(v, spec.clamp->second);
    }
    v = std::max<int64_t>(-128, std::min<int64_t>(127, v));
    return static_cast<int8_t>(v);
}

const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::Conv2D: return "conv2d";
        case OpKind::MaxPool2D: return "maxpool2d";
        case OpKind::ResizeNearest: return "resize_nearest";
        case OpKind::Concat: return "concat";
        case OpKind::Add: return "add";
        case OpKind::Quantize: return "quantize";
        case OpKind::Dequantize: return "dequantize";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::BoxDecode: return "box_decode";
        case OpKind::Nms: return "nms";
    }
    return "?";
}

OpKind op_from_name(const std::string& name) {
    static const std::unordered_map<std::string, OpKind> table = {
        {"conv2d", OpKind::Conv2D},       {"maxpool2d", OpKind::MaxPool2D},
        {"resize_nearest", OpKind::ResizeNearest}, {"concat", OpKind::Concat},
        {"add", OpKind::Add},             {"quantize", OpKind::Quantize},
        {"dequantize", OpKind::Dequantize}, {"sigmoid", OpKind::Sigmoid},
        {"box_decode", OpKind::BoxDecode}, {"nms", OpKind::Nms},
    };
    auto it = table.find(name);
    if (it == table.end()) throw ValidationError("unknown op: " + name);
    return it->second;
}

SpatialOut conv_spatial(int64_t in, int kernel, int stride, Padding padding) {
    SpatialOut s;
    if (padding == Padding::Same) {
        s.out = (in + stride - 1) / stride;
        const int64_t needed = std::max<int64_t>((s.out - 1) * stride + kernel - in, 0);
        s.pad_begin = needed / 2;
        s.pad_end = needed - s.pad_begin;
    } else {
        if (in < kernel) throw ValidationError("valid padding: input smaller than kernel");
        s.out = (in - kernel) / stride + 1;
    }
    return s;
}

namespace {

int64_t checked_channels(const Shape4& s) { return s.c(); }

[[noreturn]] void shape_fail(const Node& n, const std::string& why) {
    throw ValidationError("node '" + n.id + "' (" + op_name(n.op) + "): " + why);
}

}  // namespace

Shape4 infer_output_shape(const Node& n, const std::vector<Shape4>& in) {
    switch (n.op) {
        case OpKind::Conv2D: {
            if (in.size() != 1) shape_fail(n, "expects one input");
            const auto& a = n.conv();
            if (a.dilation != 1) {
                // Accepted by the format, still shape-checked like dilation=1
                // with an expanded kernel.
            }
            const int ekh = (a.kh - 1) * a.dilation + 1;
            const int ekw = (a.kw - 1) * a.dilation + 1;
            const auto sh = conv_spatial(in[0].h(), ekh, a.stride, a.padding);
            const auto sw = conv_spatial(in[0].w(), ekw, a.stride, a.padding);
            return Shape4{{1, sh.out, sw.out, n.output.shape.c()}};
        }
        case OpKind::MaxPool2D: {
            if (in.size() != 1) shape_fail(n, "expects one input");
            const auto& a = n.pool();
            const auto sh = conv_spatial(in[0].h(), a.kernel, a.stride, a.padding);
            const auto sw = conv_spatial(in[0].w(), a.kernel, a.stride, a.padding);
            return Shape4{{1, sh.out, sw.out, in[0].c()}};
        }
        case OpKind::ResizeNearest: {
            if (in.size() != 1) shape_fail(n, "expects one input");
            const int f = n.resize().factor;
            if (f < 1) shape_fail(n, "resize factor must be >= 1");
            return Shape4{{1, in[0].h() * f, in[0].w() * f, in[0].c()}};
        }
        case OpKind::Concat: {
            if (in.size() < 2) shape_fail(n, "expects at least two inputs");
            int64_t c = 0;
            for (const auto& s : in) {
                if (s.h() != in[0].h() || s.w() != in[0].w())
                    shape_fail(n, "spatial dims of concat inputs differ");
                c += checked_channels(s);
            }
            return Shape4{{1, in[0].h(), in[0].w(), c}};
        }
        case OpKind::Add: {
            if (in.size() != 2) shape_fail(n, "expects two inputs");
            if (!(in[0] == in[1])) shape_fail(n, "add inputs must have equal shapes");
            return in[0];
        }
        case OpKind::Quantize:
        case OpKind::Dequantize:
        case OpKind::Sigmoid: {
            if (in.size() != 1) shape_fail(n, "expects one input");
            return in[0];
        }
        case OpKind::BoxDecode: {
            if (in.size() != 1) shape_fail(n, "expects one input");
            const auto& a = n.box_decode();
            const int64_t na = static_cast<int64_t>(a.anchors.size());
            if (na < 1) shape_fail(n, "needs at least one anchor");
            if (in[0].c() % na != 0) shape_fail(n, "channels not divisible by anchor count");
            const int64_t per = in[0].c() / na;
            if (per < 6) shape_fail(n, "needs at least 5+1 values per anchor");
            // Rows of [x1, y1, x2, y2, score, class].
            return Shape4{{1, in[0].h() * in[0].w() * na, 6, 1}};
        }
        case OpKind::Nms: {
            if (in.empty()) shape_fail(n, "expects at least one input");
            int64_t total = 0;
            for (const auto& s : in) {
                if (s.w() != 6) shape_fail(n, "expects decoded box rows of width 6");
                total += s.h();
            }
            return Shape4{{1, total, 6, 1}};
        }
    }
    shape_fail(n, "unhandled op");
}

const Node& Graph::node(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return n;
    throw ValidationError("no node with id '" + id + "'");
}

Node& Graph::node(const std::string& id) {
    for (auto& n : nodes)
        if (n.id == id) return n;
    throw ValidationError("no node with id '" + id + "'");
}

bool Graph::has_node(const std::string& id) const {
    for (const auto& n : nodes)
        if (n.id == id) return true;
    return false;
}

bool Graph::is_graph_input(const std::string& id) const {
    for (const auto& gi : inputs)
        if (gi.id == id) return true;
    return false;
}

const TensorSpec& Graph::tensor(const std::string& id) const {
    for (const auto& gi : inputs)
        if (gi.id == id) return gi.spec;
    return node(id).output;
}

std::vector<const Node*> Graph::consumers(const std::string& id) const {
    std::vector<const Node*> out;
    for (const auto& n : nodes)
        for (const auto& in : n.inputs)
            if (in == id) {
                out.push_back(&n);
                break;
            }
    return out;
}

std::span<const uint8_t> Graph::weight_bytes(const Node& n) const {
    if (!n.weight_ref) return {};
    const auto& r = *n.weight_ref;
    if (r.offset + r.length > weights.size())
        throw ValidationError("node '" + n.id + "': weight_ref extends past blob end");
    return {weights.data() + r.offset, r.length};
}

int64_t conv_filter_elems(const Node& n, const Graph& g) {
    const auto& a = n.conv();
    const int64_t cin = g.tensor(n.inputs.at(0)).shape.c();
    return static_cast<int64_t>(a.kh) * a.kw * cin * n.output.shape.c();
}

std::vector<float> Graph::conv_filter_f32(const Node& n) const {
    auto bytes = weight_bytes(n);
    const int64_t elems = conv_filter_elems(n, *this);
    std::vector<float> out(static_cast<size_t>(elems));
    std::memcpy(out.data(), bytes.data(), out.size() * 4);
    return out;
}

std::vector<float> Graph::conv_bias_f32(const Node& n) const {
    if (!n.conv().has_bias) return {};
    auto bytes = weight_bytes(n);
    const int64_t elems = conv_filter_elems(n, *this);
    std::vector<float> out(static_cast<size_t>(n.output.shape.c()));
    std::memcpy(out.data(), bytes.data() + elems * 4, out.size() * 4);
    return out;
}

std::span<const int8_t> Graph::conv_filter_i8(const Node& n) const {
    auto bytes = weight_bytes(n);
    const int64_t elems = conv_filter_elems(n, *this);
    return {reinterpret_cast<const int8_t*>(bytes.data()), static_cast<size_t>(elems)};
}

std::vector<int32_t> Graph::conv_bias_i32(const Node& n) const {
    if (!n.conv().has_bias) return {};
    auto bytes = weight_bytes(n);
    const int64_t elems = conv_filter_elems(n, *this);
    std::vector<int32_t> out(static_cast<size_t>(n.output.shape.c()));
    std::memcpy(out.data(), bytes.data() + elems, out.size() * 4);
    return out;
}

void Graph::validate() const {
    std::unordered_set<std::string> ids;
    for (const auto& gi : inputs) {
        if (!ids.insert(gi.id).second)
            throw ValidationError("duplicate tensor id '" + gi.id + "'");
        if (gi.spec.dtype == DType::I8 && !gi.spec.qparams)
            throw ValidationError("graph input '" + gi.id + "': i8 tensor missing qparams");
    }
    // Node order must already be topological (each input defined earlier).
    for (const auto& n : nodes) {
        for (const auto& in : n.inputs)
            if (!ids.count(in))
                throw ValidationError("node '" + n.id + "': dangling reference to '" + in + "'");
        if (!ids.insert(n.id).second)
            throw ValidationError("duplicate tensor id '" + n.id + "'");
    }
    for (const auto& out : outputs)
        if (!ids.count(out))
            throw ValidationError("graph output '" + out + "' does not resolve");

    // dtype / qparams pairing and shape rules.
    for (const auto& n : nodes) {
        if (n.output.dtype == DType::I8 && !n.output.qparams)
            throw ValidationError("node '" + n.id + "': i8 tensor missing qparams");
        if (n.output.dtype != DType::I8 && n.output.qparams)
            throw ValidationError("node '" + n.id + "': non-i8 tensor carries qparams");
        if (n.output.qparams) {
            const auto& qp = *n.output.qparams;
            if (!(qp.scale > 0)) throw ValidationError("node '" + n.id + "': scale must be > 0");
            if (qp.scale_f16 != f16_round(qp.scale))
                throw ValidationError("node '" + n.id + "': scale_f16 is not the f16 rounding of scale");
        }
        std::vector<Shape4> in_shapes;
        in_shapes.reserve(n.inputs.size());
        for (const auto& in : n.inputs) in_shapes.push_back(tensor(in).shape);
        const Shape4 want = infer_output_shape(n, in_shapes);
        if (!(want == n.output.shape))
            throw ValidationError("node '" + n.id + "': stored output shape violates the shape rule");
        for (int64_t d : n.output.shape.d)
            if (d < 1) throw ValidationError("node '" + n.id + "': non-positive dimension");
    }

    // Weight extents: in-bounds, non-overlapping, and exactly tiling the blob.
    struct Extent {
        uint64_t off, len;
        const Node* n;
    };
    std::vector<Extent> extents;
    uint64_t total = 0;
    for (const auto& n : nodes) {
        if (n.op == OpKind::Conv2D) {
            if (!n.weight_ref) throw ValidationError("node '" + n.id + "': conv2d requires weights");
            const auto& a = n.conv();
            const int64_t filt = conv_filter_elems(n, *this);
            const int wb = n.output.dtype == DType::I8 ? 1 : 4;
            const int bb = 4;  // i32 bias when quantized, f32 otherwise
            const uint64_t want =
                static_cast<uint64_t>(filt) * wb +
                (a.has_bias ? static_cast<uint64_t>(n.output.shape.c()) * bb : 0);
            if (n.weight_ref->length != want)
                throw ValidationError("node '" + n.id + "': blob size mismatch (weight_ref length " +
                                      std::to_string(n.weight_ref->length) + ", expected " +
                                      std::to_string(want) + ")");
        } else if (n.weight_ref) {
            throw ValidationError("node '" + n.id + "': only conv2d nodes carry weights");
        }
        if (n.weight_ref) {
            if (n.weight_ref->offset + n.weight_ref->length > weights.size())
                throw ValidationError("node '" + n.id + "': blob size mismatch (extent past blob end)");
            extents.push_back({n.weight_ref->offset, n.weight_ref->length, &n});
            total += n.weight_ref->length;
        }
    }
    if (total != weights.size())
        throw ValidationError("blob size mismatch: extents sum to " + std::to_string(total) +
                              ", blob is " + std::to_string(weights.size()) + " bytes");
    std::sort(extents.begin(), extents.end(),
              [](const Extent& a, const Extent& b) { return a.off < b.off; });
    uint64_t cursor = 0;
    for (const auto& e : extents) {
        if (e.off != cursor)
            throw ValidationError("node '" + e.n->id + "': weight extents overlap or leave gaps");
        cursor = e.off + e.len;
    }

    // i8 conv inputs must themselves be i8 only via explicit Quantize, i.e.
    // mixed-dtype edges are forbidden anywhere.
    for (const auto& n : nodes) {
        switch (n.op) {
            case OpKind::Quantize: {
                if (tensor(n.inputs[0]).dtype != DType::F32 || n.output.dtype != DType::I8)
                    throw ValidationError("node '" + n.id + "': quantize must be f32 -> i8");
                break;
            }
            case OpKind::Dequantize: {
                if (tensor(n.inputs[0]).dtype != DType::I8 || n.output.dtype != DType::F32)
                    throw ValidationError("node '" + n.id + "': dequantize must be i8 -> f32");
                break;
            }
            default: {
                for (const auto& in : n.inputs) {
                    if (tensor(in).dtype != n.output.dtype)
                        throw ValidationError("node '" + n.id +
                                              "': input/output dtypes differ without quantize/dequantize");
                }
            }
        }
    }
}

}  // namespace gemflow
