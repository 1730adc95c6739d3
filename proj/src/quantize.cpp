#include "gemflow/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_map>

#include <json.hpp>

#include "gemflow/model_io.hpp"

namespace gemflow {

using nlohmann::json;

std::string CalibrationStats::to_json() const {
    json j;
    j["format"] = "gemflow-calibration";
    json r = json::object();
    for (const auto& [id, mm] : ranges)
        r[id] = json::array({float_to_string(mm.first), float_to_string(mm.second)});
    j["ranges"] = r;
    return j.dump(2) + "\n";
}

CalibrationStats CalibrationStats::from_json(const std::string& text) {
    CalibrationStats s;
    json j = json::parse(text);
    for (const auto& [id, mm] : j.at("ranges").items())
        s.ranges[id] = {float_from_string(mm[0].get<std::string>()),
                        float_from_string(mm[1].get<std::string>())};
    return s;
}

namespace {

std::pair<float, float> widen(std::pair<float, float> mm) {
    mm.first = std::min(mm.first, 0.0f);
    mm.second = std::max(mm.second, 0.0f);
    if (mm.second - mm.first < 1e-6f) mm.second = mm.first + 1e-6f;
    return mm;
}

double round_half_even(double p) {
    double r = std::floor(p);
    const double frac = p - r;
    if (frac > 0.5) r += 1.0;
    else if (frac == 0.5 && std::fmod(r, 2.0) != 0.0) r += 1.0;
    return r;
}

}  // namespace

CalibrationStats calibrate(const Graph& g, const std::vector<TensorMap>& samples) {
    if (samples.empty()) throw ValidationError("calibrate: empty sample set");
    for (const auto& n : g.nodes)
        if (n.output.dtype != DType::F32)
            throw ValidationError("calibrate: graph must be f32 (node '" + n.id + "' is not)");

    CalibrationStats stats;
    for (const auto& sample : samples) {
        const TensorMap vals = run_reference(g, sample);
        for (const auto& [id, t] : vals) {
            if (t.spec.dtype != DType::F32) continue;
            float mn = std::numeric_limits<float>::infinity();
            float mx = -mn;
            for (float v : t.f) {
                mn = std::min(mn, v);
                mx = std::max(mx, v);
            }
            auto it = stats.ranges.find(id);
            if (it == stats.ranges.end())
                stats.ranges[id] = {mn, mx};
            else
                it->second = {std::min(it->second.first, mn), std::max(it->second.second, mx)};
        }
    }
    for (auto& [id, mm] : stats.ranges) mm = widen(mm);
    return stats;
}

QuantParams derive_activation_qparams(float mn, float mx) {
    auto [lo, hi] = widen({mn, mx});
    const float scale = (hi - lo) / 255.0f;
    if (!(scale > 0.0f) || !std::isfinite(scale))
        throw ValidationError("quantize: degenerate activation range");
    int64_t zp = static_cast<int64_t>(round_half_even(-128.0 - lo / scale));
    zp = std::clamp<int64_t>(zp, -128, 127);
    return QuantParams::make(scale, static_cast<int32_t>(zp));
}

QuantParams derive_weight_qparams(float max_abs) {
    float m = max_abs;
    if (m < 1e-6f) m = 1e-6f;
    return QuantParams::make(m / 127.0f, 0);
}

namespace {

bool accel_eligible(OpKind op) {
    switch (op) {
        case OpKind::Conv2D:
        case OpKind::MaxPool2D:
        case OpKind::ResizeNearest:
        case OpKind::Concat:
        case OpKind::Add:
            return true;
        default:
            return false;
    }
}

// Union-find over tensor ids for range unification.
struct Unifier {
    std::unordered_map<std::string, std::string> parent;

    const std::string& find(const std::string& id) {
        auto it = parent.find(id);
        if (it == parent.end()) {
            parent[id] = id;
            return parent.find(id)->first;
        }
        if (it->second == id) return it->second;
        const std::string root = find(it->second);
        parent[id] = root;
        return parent.find(id)->second;
    }
    void merge(const std::string& a, const std::string& b) {
        const std::string ra = find(a), rb = find(b);
        if (ra != rb) parent[ra] = rb;
    }
};

}  // namespace

Graph quantize_graph(const Graph& g, const CalibrationStats& stats) {
    g.validate();
    for (const auto& n : g.nodes) {
        if (n.output.dtype != DType::F32)
            throw ValidationError("quantize_graph: graph already quantized (node '" + n.id + "')");
        if (n.op == OpKind::Conv2D && n.conv().activation == Activation::LeakyRelu)
            throw ValidationError("quantize_graph: node '" + n.id +
                                  "' uses leaky_relu; run activation replacement first");
    }

    // Range unification: ops that move data without requantizing share params.
    Unifier uf;
    for (const auto& n : g.nodes) {
        if (!accel_eligible(n.op)) continue;
        switch (n.op) {
            case OpKind::MaxPool2D:
            case OpKind::ResizeNearest:
                uf.merge(n.id, n.inputs[0]);
                break;
            case OpKind::Concat:
                for (const auto& in : n.inputs) uf.merge(n.id, in);
                break;
            case OpKind::Add:
                uf.merge(n.inputs[0], n.inputs[1]);
                break;
            default:
                break;
        }
    }

    // Merged range per unification root, from all member tensors.
    std::unordered_map<std::string, std::pair<float, float>> root_range;
    auto require_range = [&](const std::string& id) {
        auto it = stats.ranges.find(id);
        if (it == stats.ranges.end())
            throw ValidationError("quantize_graph: missing calibration stats for tensor '" + id +
                                  "'");
        const std::string& root = uf.find(id);
        auto [mn, mx] = widen(it->second);
        auto rit = root_range.find(root);
        if (rit == root_range.end())
            root_range[root] = {mn, mx};
        else
            rit->second = {std::min(rit->second.first, mn), std::max(rit->second.second, mx)};
    };
    for (const auto& n : g.nodes) {
        if (!accel_eligible(n.op)) continue;
        for (const auto& in : n.inputs) require_range(in);
        require_range(n.id);
    }

    std::unordered_map<std::string, QuantParams> qparams_of;
    auto params_for = [&](const std::string& id) -> const QuantParams& {
        const std::string& root = uf.find(id);
        auto it = qparams_of.find(root);
        if (it == qparams_of.end()) {
            const auto mm = root_range.at(root);
            it = qparams_of.emplace(root, derive_activation_qparams(mm.first, mm.second)).first;
        }
        return it->second;
    };

    Graph out;
    out.inputs = g.inputs;

    // Maps an original tensor id to its name in each domain of the new graph.
    std::unordered_map<std::string, std::string> as_i8, as_f32;
    for (const auto& gi : g.inputs) as_f32[gi.id] = gi.id;

    auto get_i8 = [&](const std::string& id) -> std::string {
        auto it = as_i8.find(id);
        if (it != as_i8.end()) return it->second;
        // f32 tensor entering the i8 domain: insert a Quantize node.
        Node qn;
        qn.id = id + ".q8";
        qn.op = OpKind::Quantize;
        qn.inputs = {as_f32.at(id)};
        qn.attrs = UnaryAttrs{};
        qn.output =
            TensorSpec{g.tensor(id).shape, DType::I8, params_for(id)};
        out.nodes.push_back(qn);
        as_i8[id] = qn.id;
        return qn.id;
    };
    auto get_f32 = [&](const std::string& id) -> std::string {
        auto it = as_f32.find(id);
        if (it != as_f32.end()) return it->second;
        // i8 tensor leaving the accelerator domain: insert a Dequantize node.
        Node dn;
        dn.id = id + ".f32";
        dn.op = OpKind::Dequantize;
        dn.inputs = {as_i8.at(id)};
        dn.attrs = UnaryAttrs{};
        dn.output = TensorSpec{g.tensor(id).shape, DType::F32, std::nullopt};
        out.nodes.push_back(dn);
        as_f32[id] = dn.id;
        return dn.id;
    };

    for (const auto& n : g.nodes) {
        Node q = n;
        q.weight_ref.reset();
        if (accel_eligible(n.op)) {
            for (auto& in : q.inputs) in = get_i8(in);
            q.output.dtype = DType::I8;
            q.output.qparams = params_for(n.id);

            if (n.op == OpKind::Conv2D) {
                const auto& a = n.conv();
                const auto w = g.conv_filter_f32(n);
                const auto b = g.conv_bias_f32(n);
                float max_abs = 0.0f;
                for (float v : w) max_abs = std::max(max_abs, std::fabs(v));
                const QuantParams wq = derive_weight_qparams(max_abs);
                const QuantParams& inq = params_for(n.inputs[0]);
                const QuantParams& outq = *q.output.qparams;

                const int64_t cout = n.output.shape.c();
                const int64_t k = static_cast<int64_t>(w.size()) / cout;
                std::vector<int8_t> qw(w.size());
                for (size_t i = 0; i < w.size(); ++i) {
                    const double qv = round_half_even(static_cast<double>(w[i]) / wq.scale);
                    qw[i] = static_cast<int8_t>(std::clamp<double>(qv, -127.0, 127.0));
                }
                // i32 bias at scale in*w, with the asymmetric-input correction
                // folded in so the accelerator computes a plain dot product.
                const double bias_scale = static_cast<double>(inq.scale) * wq.scale;
                std::vector<int32_t> qb(static_cast<size_t>(cout), 0);
                for (int64_t co = 0; co < cout; ++co) {
                    double v = 0.0;
                    if (a.has_bias) v = round_half_even(b[static_cast<size_t>(co)] / bias_scale);
                    int64_t fold = 0;
                    for (int64_t ki = 0; ki < k; ++ki) fold += qw[ki * cout + co];
                    const int64_t total = static_cast<int64_t>(v) - inq.zero_point * fold;
                    if (total < std::numeric_limits<int32_t>::min() ||
                        total > std::numeric_limits<int32_t>::max())
                        throw ValidationError("quantize_graph: node '" + n.id +
                                              "': folded bias overflows i32");
                    qb[static_cast<size_t>(co)] = static_cast<int32_t>(total);
                }

                const uint64_t offset = out.weights.size();
                out.weights.resize(offset + qw.size() + qb.size() * 4);
                std::memcpy(out.weights.data() + offset, qw.data(), qw.size());
                std::memcpy(out.weights.data() + offset + qw.size(), qb.data(), qb.size() * 4);
                q.weight_ref = WeightRef{offset, qw.size() + qb.size() * 4};
                std::get<ConvAttrs>(q.attrs).has_bias = true;

                // Requant multiplier combines the three f32 master scales,
                // rounded once to f16.
                const float mult = static_cast<float>(
                    static_cast<double>(inq.scale) * wq.scale / outq.scale);
                std::optional<std::pair<int32_t, int32_t>> clamp;
                if (a.activation == Activation::Relu6) {
                    const int32_t lo = outq.zero_point;
                    const int64_t hi64 =
                        static_cast<int64_t>(round_half_even(6.0 / outq.scale)) + outq.zero_point;
                    clamp = {lo, static_cast<int32_t>(std::clamp<int64_t>(hi64, lo, 127))};
                }
                q.requant = RequantSpec::make(mult, outq.zero_point, clamp);
            } else if (n.op == OpKind::Add) {
                const QuantParams& inq = params_for(n.inputs[0]);
                const QuantParams& outq = *q.output.qparams;
                const float mult =
                    static_cast<float>(static_cast<double>(inq.scale) / outq.scale);
                q.requant = RequantSpec::make(mult, outq.zero_point);
            }
        } else {
            for (auto& in : q.inputs) in = get_f32(in);
        }
        out.nodes.push_back(q);
        (accel_eligible(n.op) ? as_i8 : as_f32)[n.id] = n.id;
    }

    // Graph outputs stay f32 for external consumers.
    for (const auto& o : g.outputs) out.outputs.push_back(get_f32(o));

    out.validate();
    return out;
}

}  // namespace gemflow
