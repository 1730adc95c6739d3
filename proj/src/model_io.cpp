#include "gemflow/model_io.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace gemflow {

namespace fs = std::filesystem;
using nlohmann::json;

std::string float_to_string(float v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

float float_from_string(const std::string& s) {
    float v = 0.0f;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ValidationError("bad decimal float string: '" + s + "'");
    return v;
}

namespace {

json qparams_to_json(const QuantParams& qp) {
    return json{{"scale", float_to_string(qp.scale)},
                {"scale_f16", float_to_string(qp.scale_f16)},
                {"zero_point", qp.zero_point}};
}

QuantParams qparams_from_json(const json& j, const std::string& ctx) {
    QuantParams qp;
    qp.scale = float_from_string(j.at("scale").get<std::string>());
    qp.scale_f16 = float_from_string(j.at("scale_f16").get<std::string>());
    qp.zero_point = j.at("zero_point").get<int32_t>();
    if (qp.scale_f16 != f16_round(qp.scale))
        throw ValidationError(ctx + ": scale_f16 does not match the f16 rounding of scale");
    return qp;
}

json spec_to_json(const TensorSpec& t) {
    json j{{"shape", t.shape.d}, {"dtype", dtype_name(t.dtype)}};
    if (t.qparams) j["qparams"] = qparams_to_json(*t.qparams);
    return j;
}

TensorSpec spec_from_json(const json& j, const std::string& ctx) {
    TensorSpec t;
    auto dims = j.at("shape").get<std::vector<int64_t>>();
    if (dims.size() != 4) throw ValidationError(ctx + ": shape must have 4 dims (NHWC)");
    std::copy(dims.begin(), dims.end(), t.shape.d.begin());
    t.dtype = dtype_from_name(j.at("dtype").get<std::string>());
    if (j.contains("qparams") && !j.at("qparams").is_null())
        t.qparams = qparams_from_json(j.at("qparams"), ctx);
    return t;
}

json requant_to_json(const RequantSpec& r) {
    json j{{"multiplier", float_to_string(r.multiplier)}, {"zero_point", r.zero_point}};
    if (r.clamp) j["clamp"] = json::array({r.clamp->first, r.clamp->second});
    return j;
}

RequantSpec requant_from_json(const json& j) {
    std::optional<std::pair<int32_t, int32_t>> clamp;
    if (j.contains("clamp") && !j.at("clamp").is_null())
        clamp = std::make_pair(j.at("clamp")[0].get<int32_t>(), j.at("clamp")[1].get<int32_t>());
    return RequantSpec::make(float_from_string(j.at("multiplier").get<std::string>()),
                             j.at("zero_point").get<int32_t>(), clamp);
}

const char* padding_name(Padding p) { return p == Padding::Same ? "same" : "valid"; }

Padding padding_from_name(const std::string& s, const std::string& ctx) {
    if (s == "same") return Padding::Same;
    if (s == "valid") return Padding::Valid;
    throw ValidationError(ctx + ": unknown padding '" + s + "'");
}

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::None: return "none";
        case Activation::Relu6: return "relu6";
        case Activation::LeakyRelu: return "leaky_relu";
    }
    return "?";
}

Activation activation_from_name(const std::string& s, const std::string& ctx) {
    if (s == "none") return Activation::None;
    if (s == "relu6") return Activation::Relu6;
    if (s == "leaky_relu") return Activation::LeakyRelu;
    throw ValidationError(ctx + ": unknown activation '" + s + "'");
}

json attrs_to_json(const Node& n) {
    json j = json::object();
    switch (n.op) {
        case OpKind::Conv2D: {
            const auto& a = n.conv();
            j["kh"] = a.kh;
            j["kw"] = a.kw;
            j["stride"] = a.stride;
            j["dilation"] = a.dilation;
            j["padding"] = padding_name(a.padding);
            j["has_bias"] = a.has_bias;
            j["activation"] = activation_name(a.activation);
            if (a.activation == Activation::LeakyRelu)
                j["leaky_alpha"] = float_to_string(a.leaky_alpha);
            break;
        }
        case OpKind::MaxPool2D: {
            const auto& a = n.pool();
            j["kernel"] = a.kernel;
            j["stride"] = a.stride;
            j["padding"] = padding_name(a.padding);
            break;
        }
        case OpKind::ResizeNearest:
            j["factor"] = n.resize().factor;
            break;
        case OpKind::BoxDecode: {
            const auto& a = n.box_decode();
            j["stride"] = a.stride;
            json anchors = json::array();
            for (const auto& an : a.anchors)
                anchors.push_back(json::array({float_to_string(an[0]), float_to_string(an[1])}));
            j["anchors"] = anchors;
            break;
        }
        case OpKind::Nms: {
            const auto& a = n.nms();
            j["iou_thresh"] = float_to_string(a.iou_thresh);
            j["conf_thresh"] = float_to_string(a.conf_thresh);
            break;
        }
        default:
            break;
    }
    return j;
}

OpAttrs attrs_from_json(OpKind op, const json& j, const std::string& ctx) {
    switch (op) {
        case OpKind::Conv2D: {
            ConvAttrs a;
            a.kh = j.at("kh").get<int>();
            a.kw = j.at("kw").get<int>();
            a.stride = j.at("stride").get<int>();
            a.dilation = j.value("dilation", 1);
            a.padding = padding_from_name(j.at("padding").get<std::string>(), ctx);
            a.has_bias = j.at("has_bias").get<bool>();
            a.activation = activation_from_name(j.at("activation").get<std::string>(), ctx);
            if (a.activation == Activation::LeakyRelu)
                a.leaky_alpha = float_from_string(j.at("leaky_alpha").get<std::string>());
            return a;
        }
        case OpKind::MaxPool2D: {
            PoolAttrs a;
            a.kernel = j.at("kernel").get<int>();
            a.stride = j.at("stride").get<int>();
            a.padding = padding_from_name(j.value("padding", "valid"), ctx);
            return a;
        }
        case OpKind::ResizeNearest: {
            ResizeAttrs a;
            a.factor = j.at("factor").get<int>();
            return a;
        }
        case OpKind::Concat:
            return ConcatAttrs{};
        case OpKind::Add:
            return AddAttrs{};
        case OpKind::Quantize:
        case OpKind::Dequantize:
        case OpKind::Sigmoid:
            return UnaryAttrs{};
        case OpKind::BoxDecode: {
            BoxDecodeAttrs a;
            a.stride = j.at("stride").get<int>();
            for (const auto& an : j.at("anchors"))
                a.anchors.push_back({float_from_string(an[0].get<std::string>()),
                                     float_from_string(an[1].get<std::string>())});
            return a;
        }
        case OpKind::Nms: {
            NmsAttrs a;
            a.iou_thresh = float_from_string(j.at("iou_thresh").get<std::string>());
            a.conf_thresh = float_from_string(j.at("conf_thresh").get<std::string>());
            return a;
        }
    }
    throw ValidationError(ctx + ": unhandled op attrs");
}

}  // namespace

void save_model(const Graph& g, const std::string& manifest_path,
                const std::string& blob_filename) {
    g.validate();
    const fs::path mpath(manifest_path);
    std::string blob_name = blob_filename;
    if (blob_name.empty()) blob_name = mpath.stem().string() + ".bin";

    json j;
    j["format"] = "gemflow-model";
    j["version"] = 1;
    j["weights"] = {{"file", blob_name}, {"size", g.weights.size()}};
    json jin = json::array();
    for (const auto& gi : g.inputs)
        jin.push_back(json{{"id", gi.id}, {"spec", spec_to_json(gi.spec)}});
    j["inputs"] = jin;
    j["outputs"] = g.outputs;
    json jnodes = json::array();
    for (const auto& n : g.nodes) {
        json jn{{"id", n.id},
                {"op", op_name(n.op)},
                {"inputs", n.inputs},
                {"attrs", attrs_to_json(n)},
                {"output", spec_to_json(n.output)}};
        if (n.weight_ref)
            jn["weight_ref"] = {{"offset", n.weight_ref->offset}, {"length", n.weight_ref->length}};
        if (n.requant) jn["requant"] = requant_to_json(*n.requant);
        jnodes.push_back(jn);
    }
    j["nodes"] = jnodes;

    std::ofstream mf(mpath);
    if (!mf) throw IoError("cannot write manifest: " + manifest_path);
    mf << j.dump(2) << "\n";
    mf.close();
    if (!mf) throw IoError("write failed: " + manifest_path);

    const fs::path bpath = mpath.parent_path() / blob_name;
    std::ofstream bf(bpath, std::ios::binary);
    if (!bf) throw IoError("cannot write weights blob: " + bpath.string());
    bf.write(reinterpret_cast<const char*>(g.weights.data()),
             static_cast<std::streamsize>(g.weights.size()));
    bf.close();
    if (!bf) throw IoError("write failed: " + bpath.string());
}

Graph load_model(const std::string& manifest_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw IoError("cannot open model manifest: " + manifest_path);
    json j;
    try {
        j = json::parse(mf);
    } catch (const json::parse_error& e) {
        throw ValidationError("manifest parse error in " + manifest_path + ": " + e.what());
    }

    Graph g;
    try {
        if (j.at("format").get<std::string>() != "gemflow-model")
            throw ValidationError("not a gemflow model manifest");
        for (const auto& ji : j.at("inputs")) {
            const std::string id = ji.at("id").get<std::string>();
            g.inputs.push_back({id, spec_from_json(ji.at("spec"), "input '" + id + "'")});
        }
        g.outputs = j.at("outputs").get<std::vector<std::string>>();
        for (const auto& jn : j.at("nodes")) {
            Node n;
            n.id = jn.at("id").get<std::string>();
            const std::string ctx = "node '" + n.id + "'";
            n.op = op_from_name(jn.at("op").get<std::string>());
            n.inputs = jn.at("inputs").get<std::vector<std::string>>();
            n.attrs = attrs_from_json(n.op, jn.at("attrs"), ctx);
            n.output = spec_from_json(jn.at("output"), ctx);
            if (jn.contains("weight_ref") && !jn.at("weight_ref").is_null())
                n.weight_ref = WeightRef{jn.at("weight_ref").at("offset").get<uint64_t>(),
                                         jn.at("weight_ref").at("length").get<uint64_t>()};
            if (jn.contains("requant") && !jn.at("requant").is_null())
                n.requant = requant_from_json(jn.at("requant"));
            g.nodes.push_back(std::move(n));
        }

        const fs::path bpath =
            fs::path(manifest_path).parent_path() / j.at("weights").at("file").get<std::string>();
        const uint64_t declared = j.at("weights").at("size").get<uint64_t>();
        std::ifstream bf(bpath, std::ios::binary);
        if (!bf) throw IoError("cannot open weights blob: " + bpath.string());
        g.weights.assign(std::istreambuf_iterator<char>(bf), std::istreambuf_iterator<char>());
        if (g.weights.size() != declared)
            throw ValidationError("blob size mismatch: manifest declares " +
                                  std::to_string(declared) + " bytes, file has " +
                                  std::to_string(g.weights.size()));
    } catch (const json::exception& e) {
        throw ValidationError("manifest field error in " + manifest_path + ": " + e.what());
    }

    g.validate();
    return g;
}

}  // namespace gemflow
