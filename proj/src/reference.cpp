#include "gemflow/reference.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace gemflow {

namespace {

double round_half_even(double p) {
    double r = std::floor(p);
    const double frac = p - r;
    if (frac > 0.5) {
        r += 1.0;
    } else if (frac == 0.5) {
        if (std::fmod(r, 2.0) != 0.0) r += 1.0;
    }
    return r;
}

float apply_activation(float x, const ConvAttrs& a) {
    switch (a.activation) {
        case Activation::None: return x;
        case Activation::Relu6: return std::min(std::max(x, 0.0f), 6.0f);
        case Activation::LeakyRelu: return x < 0.0f ? a.leaky_alpha * x : x;
    }
    return x;
}

}  // namespace

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

int8_t quantize_value(float x, const QuantParams& qp) {
    const double q = round_half_even(static_cast<double>(x) / qp.scale) + qp.zero_point;
    return static_cast<int8_t>(std::max(-128.0, std::min(127.0, q)));
}

float dequantize_value(int8_t q, const QuantParams& qp) {
    return (static_cast<float>(q) - static_cast<float>(qp.zero_point)) * qp.scale;
}

Tensor Tensor::zeros(const TensorSpec& spec) {
    Tensor t;
    t.spec = spec;
    if (spec.dtype == DType::I8)
        t.q.assign(static_cast<size_t>(spec.shape.elements()), 0);
    else
        t.f.assign(static_cast<size_t>(spec.shape.elements()), 0.0f);
    return t;
}

Tensor reference_conv_f32(const Graph& g, const Node& n, const Tensor& input) {
    const auto& a = n.conv();
    const Shape4 is = input.spec.shape;
    const Shape4 os = n.output.shape;
    const auto w = g.conv_filter_f32(n);
    const auto bias = g.conv_bias_f32(n);

    const auto sh = conv_spatial(is.h(), (a.kh - 1) * a.dilation + 1, a.stride, a.padding);
    const auto sw = conv_spatial(is.w(), (a.kw - 1) * a.dilation + 1, a.stride, a.padding);

    Tensor out = Tensor::zeros(TensorSpec{os, DType::F32, std::nullopt});
    const int64_t cin = is.c(), cout = os.c();
    for (int64_t oy = 0; oy < os.h(); ++oy) {
        for (int64_t ox = 0; ox < os.w(); ++ox) {
            for (int64_t co = 0; co < cout; ++co) {
                float acc = a.has_bias ? bias[static_cast<size_t>(co)] : 0.0f;
                for (int kh = 0; kh < a.kh; ++kh) {
                    const int64_t iy = oy * a.stride - sh.pad_begin + kh * a.dilation;
                    if (iy < 0 || iy >= is.h()) continue;
                    for (int kw = 0; kw < a.kw; ++kw) {
                        const int64_t ix = ox * a.stride - sw.pad_begin + kw * a.dilation;
                        if (ix < 0 || ix >= is.w()) continue;
                        const float* in_px = input.f.data() + ((iy * is.w() + ix) * cin);
                        const float* w_px = w.data() + (((kh * a.kw) + kw) * cin) * cout + co;
                        for (int64_t ci = 0; ci < cin; ++ci)
                            acc += in_px[ci] * w_px[ci * cout];
                    }
                }
                out.f[static_cast<size_t>(((oy * os.w()) + ox) * cout + co)] =
                    apply_activation(acc, a);
            }
        }
    }
    return out;
}

Tensor reference_conv_i8(const Graph& g, const Node& n, const Tensor& input) {
    const auto& a = n.conv();
    if (a.activation == Activation::LeakyRelu)
        throw ValidationError("node '" + n.id + "': leaky_relu has no integer kernel");
    if (!n.requant)
        throw ValidationError("node '" + n.id + "': quantized conv without requant spec");
    const Shape4 is = input.spec.shape;
    const Shape4 os = n.output.shape;
    const auto w = g.conv_filter_i8(n);
    const auto bias = g.conv_bias_i32(n);
    const int32_t zp_in = input.spec.qparams->zero_point;

    const auto sh = conv_spatial(is.h(), a.kh, a.stride, a.padding);
    const auto sw = conv_spatial(is.w(), a.kw, a.stride, a.padding);

    Tensor out = Tensor::zeros(TensorSpec{os, DType::I8, n.output.qparams});
    const int64_t cin = is.c(), cout = os.c();
    for (int64_t oy = 0; oy < os.h(); ++oy) {
        for (int64_t ox = 0; ox < os.w(); ++ox) {
            for (int64_t co = 0; co < cout; ++co) {
                int32_t acc = a.has_bias ? bias[static_cast<size_t>(co)] : 0;
                for (int kh = 0; kh < a.kh; ++kh) {
                    const int64_t iy = oy * a.stride - sh.pad_begin + kh;
                    for (int kw = 0; kw < a.kw; ++kw) {
                        const int64_t ix = ox * a.stride - sw.pad_begin + kw;
                        const bool inside = iy >= 0 && iy < is.h() && ix >= 0 && ix < is.w();
                        const int8_t* w_px = w.data() + (((kh * a.kw) + kw) * cin) * cout + co;
                        if (inside) {
                            const int8_t* in_px = input.q.data() + ((iy * is.w() + ix) * cin);
                            for (int64_t ci = 0; ci < cin; ++ci)
                                acc += static_cast<int32_t>(in_px[ci]) *
                                       static_cast<int32_t>(w_px[ci * cout]);
                        } else {
                            // Spatial padding holds the input zero point.
                            for (int64_t ci = 0; ci < cin; ++ci)
                                acc += zp_in * static_cast<int32_t>(w_px[ci * cout]);
                        }
                    }
                }
                out.q[static_cast<size_t>(((oy * os.w()) + ox) * cout + co)] =
                    requantize(acc, *n.requant);
            }
        }
    }
    return out;
}

namespace {

template <typename T, typename Less>
Tensor pool_impl(const Node& n, const Tensor& input, const std::vector<T>& data,
                 std::vector<T> Tensor::*field, Less less) {
    const auto& a = n.pool();
    const Shape4 is = input.spec.shape;
    const Shape4 os = n.output.shape;
    const auto sh = conv_spatial(is.h(), a.kernel, a.stride, a.padding);
    const auto sw = conv_spatial(is.w(), a.kernel, a.stride, a.padding);

    Tensor out = Tensor::zeros(TensorSpec{os, input.spec.dtype, input.spec.qparams});
    const int64_t c = is.c();
    for (int64_t oy = 0; oy < os.h(); ++oy) {
        for (int64_t ox = 0; ox < os.w(); ++ox) {
            for (int64_t ci = 0; ci < c; ++ci) {
                bool seen = false;
                T best{};
                for (int kh = 0; kh < a.kernel; ++kh) {
                    const int64_t iy = oy * a.stride - sh.pad_begin + kh;
                    if (iy < 0 || iy >= is.h()) continue;  // clipped window
                    for (int kw = 0; kw < a.kernel; ++kw) {
                        const int64_t ix = ox * a.stride - sw.pad_begin + kw;
                        if (ix < 0 || ix >= is.w()) continue;
                        const T v = data[static_cast<size_t>((iy * is.w() + ix) * c + ci)];
                        if (!seen || less(best, v)) {
                            best = v;
                            seen = true;
                        }
                    }
                }
                (out.*field)[static_cast<size_t>((oy * os.w() + ox) * c + ci)] = best;
            }
        }
    }
    return out;
}

Tensor run_maxpool(const Node& n, const Tensor& input) {
    if (input.spec.dtype == DType::I8)
        return pool_impl<int8_t>(n, input, input.q, &Tensor::q, std::less<int8_t>());
    return pool_impl<float>(n, input, input.f, &Tensor::f, std::less<float>());
}

Tensor run_resize(const Node& n, const Tensor& input) {
    const int f = n.resize().factor;
    const Shape4 is = input.spec.shape;
    const Shape4 os = n.output.shape;
    Tensor out = Tensor::zeros(TensorSpec{os, input.spec.dtype, input.spec.qparams});
    const int64_t c = is.c();
    for (int64_t oy = 0; oy < os.h(); ++oy) {
        for (int64_t ox = 0; ox < os.w(); ++ox) {
            const int64_t iy = oy / f, ix = ox / f;
            const size_t src = static_cast<size_t>((iy * is.w() + ix) * c);
            const size_t dst = static_cast<size_t>((oy * os.w() + ox) * c);
            if (input.spec.dtype == DType::I8)
                std::memcpy(out.q.data() + dst, input.q.data() + src, static_cast<size_t>(c));
            else
                std::memcpy(out.f.data() + dst, input.f.data() + src,
                            static_cast<size_t>(c) * 4);
        }
    }
    return out;
}

Tensor run_concat(const Node& n, const std::vector<const Tensor*>& ins) {
    const Shape4 os = n.output.shape;
    Tensor out = Tensor::zeros(TensorSpec{os, ins[0]->spec.dtype, n.output.qparams});
    const int64_t spatial = os.h() * os.w();
    const int64_t ctotal = os.c();
    int64_t coff = 0;
    for (const Tensor* in : ins) {
        const int64_t c = in->spec.shape.c();
        for (int64_t p = 0; p < spatial; ++p) {
            if (out.spec.dtype == DType::I8)
                std::memcpy(out.q.data() + p * ctotal + coff, in->q.data() + p * c,
                            static_cast<size_t>(c));
            else
                std::memcpy(out.f.data() + p * ctotal + coff, in->f.data() + p * c,
                            static_cast<size_t>(c) * 4);
        }
        coff += c;
    }
    return out;
}

Tensor run_add(const Node& n, const Tensor& x, const Tensor& y) {
    Tensor out = Tensor::zeros(TensorSpec{n.output.shape, x.spec.dtype, n.output.qparams});
    const int64_t count = out.elements();
    if (x.spec.dtype == DType::I8) {
        if (!n.requant)
            throw ValidationError("node '" + n.id + "': quantized add without requant spec");
        // Both inputs share qparams (the quantizer unifies them); the double
        // zero point is folded here and on the accelerator via a constant.
        const int32_t zp2 = 2 * x.spec.qparams->zero_point;
        for (int64_t i = 0; i < count; ++i) {
            const int32_t acc =
                static_cast<int32_t>(x.q[i]) + static_cast<int32_t>(y.q[i]) - zp2;
            out.q[i] = requantize(acc, *n.requant);
        }
    } else {
        for (int64_t i = 0; i < count; ++i) out.f[i] = x.f[i] + y.f[i];
    }
    return out;
}

Tensor run_quantize(const Node& n, const Tensor& in) {
    Tensor out = Tensor::zeros(TensorSpec{n.output.shape, DType::I8, n.output.qparams});
    const QuantParams qp = *n.output.qparams;
    for (int64_t i = 0; i < out.elements(); ++i) out.q[i] = quantize_value(in.f[i], qp);
    return out;
}

Tensor run_dequantize(const Node& n, const Tensor& in) {
    Tensor out = Tensor::zeros(TensorSpec{n.output.shape, DType::F32, std::nullopt});
    const QuantParams qp = *in.spec.qparams;
    for (int64_t i = 0; i < out.elements(); ++i) out.f[i] = dequantize_value(in.q[i], qp);
    return out;
}

Tensor run_sigmoid(const Node& n, const Tensor& in) {
    Tensor out = Tensor::zeros(TensorSpec{n.output.shape, DType::F32, std::nullopt});
    for (int64_t i = 0; i < out.elements(); ++i) out.f[i] = sigmoid(in.f[i]);
    return out;
}

Tensor run_box_decode(const Node& n, const Tensor& in) {
    const auto& a = n.box_decode();
    const Shape4 is = in.spec.shape;
    const int64_t na = static_cast<int64_t>(a.anchors.size());
    const int64_t per = is.c() / na;
    const int64_t nc = per - 5;

    Tensor out = Tensor::zeros(TensorSpec{n.output.shape, DType::F32, std::nullopt});
    for (int64_t gy = 0; gy < is.h(); ++gy) {
        for (int64_t gx = 0; gx < is.w(); ++gx) {
            const float* cell = in.f.data() + (gy * is.w() + gx) * is.c();
            for (int64_t an = 0; an < na; ++an) {
                const float* v = cell + an * per;
                const float bx = (2.0f * v[0] - 0.5f + static_cast<float>(gx)) * a.stride;
                const float by = (2.0f * v[1] - 0.5f + static_cast<float>(gy)) * a.stride;
                const float bw = (2.0f * v[2]) * (2.0f * v[2]) * a.anchors[an][0];
                const float bh = (2.0f * v[3]) * (2.0f * v[3]) * a.anchors[an][1];
                float best = -1.0f;
                int64_t best_c = 0;
                for (int64_t c = 0; c < nc; ++c) {
                    if (v[5 + c] > best) {
                        best = v[5 + c];
                        best_c = c;
                    }
                }
                const float score = v[4] * best;
                const int64_t row = (gy * is.w() + gx) * na + an;
                float* o = out.f.data() + row * 6;
                o[0] = bx - bw * 0.5f;
                o[1] = by - bh * 0.5f;
                o[2] = bx + bw * 0.5f;
                o[3] = by + bh * 0.5f;
                o[4] = score;
                o[5] = static_cast<float>(best_c);
            }
        }
    }
    return out;
}

Tensor run_nms(const Node& n, const std::vector<const Tensor*>& ins) {
    const auto& a = n.nms();
    struct Row {
        float x1, y1, x2, y2, score, cls;
    };
    std::vector<Row> rows;
    for (const Tensor* t : ins) {
        const int64_t count = t->spec.shape.h();
        for (int64_t i = 0; i < count; ++i) {
            const float* r = t->f.data() + i * 6;
            if (r[4] < a.conf_thresh) continue;
            rows.push_back({r[0], r[1], r[2], r[3], r[4], r[5]});
        }
    }
    std::sort(rows.begin(), rows.end(), [](const Row& l, const Row& r) {
        if (l.score != r.score) return l.score > r.score;
        return std::tie(l.x1, l.y1, l.x2, l.y2, l.cls) < std::tie(r.x1, r.y1, r.x2, r.y2, r.cls);
    });
    std::vector<Row> kept;
    for (const Row& cand : rows) {
        bool suppressed = false;
        for (const Row& k : kept) {
            if (iou_xyxy(cand.x1, cand.y1, cand.x2, cand.y2, k.x1, k.y1, k.x2, k.y2) >
                a.iou_thresh) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(cand);
    }

    Tensor out = Tensor::zeros(TensorSpec{n.output.shape, DType::F32, std::nullopt});
    for (size_t i = 0; i < kept.size(); ++i) {
        float* o = out.f.data() + i * 6;
        o[0] = kept[i].x1;
        o[1] = kept[i].y1;
        o[2] = kept[i].x2;
        o[3] = kept[i].y2;
        o[4] = kept[i].score;
        o[5] = kept[i].cls;
    }
    return out;
}

}  // namespace

float iou_xyxy(float ax1, float ay1, float ax2, float ay2, float bx1, float by1, float bx2,
               float by2) {
    const float ix1 = std::max(ax1, bx1);
    const float iy1 = std::max(ay1, by1);
    const float ix2 = std::min(ax2, bx2);
    const float iy2 = std::min(ay2, by2);
    const float iw = std::max(0.0f, ix2 - ix1);
    const float ih = std::max(0.0f, iy2 - iy1);
    const float inter = iw * ih;
    const float area_a = std::max(0.0f, ax2 - ax1) * std::max(0.0f, ay2 - ay1);
    const float area_b = std::max(0.0f, bx2 - bx1) * std::max(0.0f, by2 - by1);
    const float uni = area_a + area_b - inter;
    return uni > 0.0f ? inter / uni : 0.0f;
}

std::vector<Detection> detections_from_tensor(const Tensor& t) {
    std::vector<Detection> dets;
    for (int64_t i = 0; i < t.spec.shape.h(); ++i) {
        const float* r = t.f.data() + i * 6;
        if (r[4] <= 0.0f) continue;
        dets.push_back({r[0], r[1], r[2], r[3], r[4], static_cast<int>(r[5])});
    }
    return dets;
}

TensorMap run_reference(const Graph& g, const TensorMap& inputs) {
    TensorMap vals;
    for (const auto& gi : g.inputs) {
        auto it = inputs.find(gi.id);
        if (it == inputs.end())
            throw ValidationError("missing input tensor '" + gi.id + "'");
        if (it->second.spec.shape != gi.spec.shape)
            throw ValidationError("input tensor '" + gi.id + "' has unexpected shape");
        vals.emplace(gi.id, it->second);
    }
    for (const auto& n : g.nodes) {
        std::vector<const Tensor*> in;
        in.reserve(n.inputs.size());
        for (const auto& i : n.inputs) in.push_back(&vals.at(i));
        Tensor out;
        switch (n.op) {
            case OpKind::Conv2D:
                out = n.output.dtype == DType::I8 ? reference_conv_i8(g, n, *in[0])
                                                  : reference_conv_f32(g, n, *in[0]);
                break;
            case OpKind::MaxPool2D: out = run_maxpool(n, *in[0]); break;
            case OpKind::ResizeNearest: out = run_resize(n, *in[0]); break;
            case OpKind::Concat: out = run_concat(n, in); break;
            case OpKind::Add: out = run_add(n, *in[0], *in[1]); break;
            case OpKind::Quantize: out = run_quantize(n, *in[0]); break;
            case OpKind::Dequantize: out = run_dequantize(n, *in[0]); break;
            case OpKind::Sigmoid: out = run_sigmoid(n, *in[0]); break;
            case OpKind::BoxDecode: out = run_box_decode(n, *in[0]); break;
            case OpKind::Nms: out = run_nms(n, in); break;
        }
        out.spec = n.output;
        vals.emplace(n.id, std::move(out));
    }
    return vals;
}

}  // namespace gemflow
