#include "gemflow/transforms.hpp"

#include <numeric>
#include <unordered_map>

namespace gemflow {

Graph replace_activations(const Graph& g) {
    Graph out = g;
    for (auto& n : out.nodes) {
        if (n.op != OpKind::Conv2D) continue;
        auto& a = std::get<ConvAttrs>(n.attrs);
        if (a.activation == Activation::LeakyRelu) {
            a.activation = Activation::Relu6;
            a.leaky_alpha = 0.1f;
        }
    }
    return out;
}

namespace {

int64_t lcm64(int64_t a, int64_t b) { return a / std::gcd(a, b) * b; }

// Required divisor of a tensor's spatial dim so that every downstream shape
// rule divides exactly. Computed backwards from the outputs.
struct DivisorContext {
    const Graph& g;
    std::unordered_map<std::string, int64_t> req_h, req_w;

    int64_t need_h(const std::string& id) {
        auto it = req_h.find(id);
        return it == req_h.end() ? 1 : it->second;
    }
    int64_t need_w(const std::string& id) {
        auto it = req_w.find(id);
        return it == req_w.end() ? 1 : it->second;
    }
    void require(const std::string& id, int64_t h, int64_t w) {
        req_h[id] = lcm64(need_h(id), h);
        req_w[id] = lcm64(need_w(id), w);
    }
};

void propagate_divisors(DivisorContext& ctx) {
    const Graph& g = ctx.g;
    for (auto it = g.nodes.rbegin(); it != g.nodes.rend(); ++it) {
        const Node& n = *it;
        const int64_t oh = ctx.need_h(n.id);
        const int64_t ow = ctx.need_w(n.id);
        switch (n.op) {
            case OpKind::Conv2D: {
                const auto& a = n.conv();
                // Same padding divides exactly iff input is a multiple of the
                // stride; valid padding additionally wants (in - k) % s == 0,
                // which stride-1 valid convs satisfy trivially.
                const int64_t s = a.stride;
                ctx.require(n.inputs[0], oh * s, ow * s);
                break;
            }
            case OpKind::MaxPool2D: {
                const auto& a = n.pool();
                const int64_t s = a.stride;
                ctx.require(n.inputs[0], oh * s, ow * s);
                break;
            }
            case OpKind::ResizeNearest: {
                const int64_t f = n.resize().factor;
                ctx.require(n.inputs[0], std::max<int64_t>(1, oh / std::gcd(oh, f)),
                            std::max<int64_t>(1, ow / std::gcd(ow, f)));
                break;
            }
            case OpKind::Concat:
            case OpKind::Add: {
                for (const auto& in : n.inputs) ctx.require(in, oh, ow);
                break;
            }
            case OpKind::Quantize:
            case OpKind::Dequantize:
            case OpKind::Sigmoid: {
                ctx.require(n.inputs[0], oh, ow);
                break;
            }
            case OpKind::BoxDecode:
            case OpKind::Nms:
                // Decoded-box tensors have no spatial structure to preserve.
                break;
        }
    }
}

}  // namespace

std::pair<int64_t, int64_t> input_size_multiple(const Graph& g) {
    DivisorContext ctx{g, {}, {}};
    propagate_divisors(ctx);
    int64_t h = 1, w = 1;
    for (const auto& gi : g.inputs) {
        h = lcm64(h, ctx.need_h(gi.id));
        w = lcm64(w, ctx.need_w(gi.id));
    }
    return {h, w};
}

Graph rescale_input(const Graph& g, int64_t new_h, int64_t new_w) {
    const auto [mh, mw] = input_size_multiple(g);
    if (new_h % mh != 0 || new_w % mw != 0)
        throw ValidationError("input size " + std::to_string(new_h) + "x" + std::to_string(new_w) +
                              " not divisible by the graph's required multiple " +
                              std::to_string(mh) + "x" + std::to_string(mw));
    if (new_h < mh || new_w < mw)
        throw ValidationError("input size too small");

    Graph out = g;
    for (auto& gi : out.inputs) {
        gi.spec.shape.d[1] = new_h;
        gi.spec.shape.d[2] = new_w;
    }
    // Channels are untouched; spatial dims re-derived by forward propagation.
    for (auto& n : out.nodes) {
        std::vector<Shape4> in_shapes;
        in_shapes.reserve(n.inputs.size());
        for (const auto& in : n.inputs) in_shapes.push_back(out.tensor(in).shape);
        n.output.shape = infer_output_shape(n, in_shapes);
    }
    out.validate();
    return out;
}

GopCount count_gop(const Graph& g) {
    GopCount total;
    for (const auto& n : g.nodes) {
        const Shape4& o = n.output.shape;
        int64_t ops = 0;
        GopBucket bucket = GopBucket::Main;
        switch (n.op) {
            case OpKind::Conv2D: {
                const auto& a = n.conv();
                const int64_t cin = g.tensor(n.inputs[0]).shape.c();
                ops = 2 * o.h() * o.w() * o.c() * a.kh * a.kw * cin;
                break;
            }
            case OpKind::MaxPool2D:
            case OpKind::ResizeNearest:
            case OpKind::Concat:
            case OpKind::Add:
            case OpKind::Quantize:
            case OpKind::Dequantize:
                ops = o.elements();
                break;
            case OpKind::Sigmoid:
                ops = o.elements();
                bucket = GopBucket::Post;
                break;
            case OpKind::BoxDecode:
                ops = o.elements();
                bucket = GopBucket::Post;
                break;
            case OpKind::Nms:
                // Linear in the candidate count: deterministic stand-in for a
                // data-dependent algorithm.
                ops = 8 * o.h();
                bucket = GopBucket::Post;
                break;
        }
        total.per_node.push_back({n.id, n.op, bucket, ops});
        (bucket == GopBucket::Main ? total.main_ops : total.post_ops) += ops;
    }
    return total;
}

}  // namespace gemflow
