#include "gemflow/runtime.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "gemflow/accel/sim.hpp"
#include "gemflow/model_io.hpp"
#include "gemflow/transforms.hpp"

namespace gemflow {

using nlohmann::json;

namespace {

bool accel_side(const Node& n) { return n.output.dtype == DType::I8; }

// Copies the nodes listed in `keep` into a standalone graph, rebuilding the
// weights blob and treating any externally produced tensor as a graph input.
Graph extract_subgraph(const Graph& g, const std::vector<const Node*>& keep,
                       const std::vector<std::string>& outputs) {
    std::unordered_set<std::string> kept;
    for (const Node* n : keep) kept.insert(n->id);

    Graph out;
    std::unordered_set<std::string> declared;
    for (const Node* n : keep) {
        for (const auto& in : n->inputs) {
            if (kept.count(in) || declared.count(in)) continue;
            out.inputs.push_back({in, g.tensor(in)});
            declared.insert(in);
        }
    }
    for (const Node* n : keep) {
        Node nn = *n;
        if (n->weight_ref) {
            const auto bytes = g.weight_bytes(*n);
            const uint64_t off = out.weights.size();
            out.weights.insert(out.weights.end(), bytes.begin(), bytes.end());
            nn.weight_ref = WeightRef{off, bytes.size()};
        }
        out.nodes.push_back(std::move(nn));
    }
    out.outputs = outputs;
    out.validate();
    return out;
}

}  // namespace

Partition partition(const Graph& g) {
    g.validate();
    std::vector<const Node*> accel_nodes, host_nodes;
    std::unordered_set<std::string> accel_ids;
    for (const auto& n : g.nodes) {
        if (accel_side(n)) {
            accel_nodes.push_back(&n);
            accel_ids.insert(n.id);
        } else {
            host_nodes.push_back(&n);
        }
    }

    // Two-phase executability: accelerator nodes may consume graph inputs and
    // accelerator tensors only.
    for (const Node* n : accel_nodes) {
        for (const auto& in : n->inputs) {
            if (!accel_ids.count(in) && !g.is_graph_input(in))
                throw ValidationError("partition: dtype frontier is not a cut; node '" + n->id +
                                      "' (accelerator) consumes host tensor '" + in + "'");
        }
    }

    // Boundary: accelerator tensors read by host nodes, in producer order.
    std::vector<std::pair<std::string, int64_t>> boundary;
    std::unordered_set<std::string> seen;
    for (const Node* n : host_nodes) {
        for (const auto& in : n->inputs) {
            if (accel_ids.count(in) && !seen.count(in)) {
                boundary.emplace_back(in, g.tensor(in).bytes());
                seen.insert(in);
            }
        }
    }

    Partition p;
    std::vector<std::string> accel_outputs;
    for (const auto& [id, bytes] : boundary) accel_outputs.push_back(id);
    // Graph outputs that the accelerator itself produces stay visible.
    for (const auto& o : g.outputs)
        if (accel_ids.count(o) && !seen.count(o)) accel_outputs.push_back(o);

    std::vector<std::string> host_outputs;
    for (const auto& o : g.outputs)
        if (!accel_ids.count(o)) host_outputs.push_back(o);

    if (!accel_nodes.empty()) p.accel_part = extract_subgraph(g, accel_nodes, accel_outputs);
    if (!host_nodes.empty()) p.host_part = extract_subgraph(g, host_nodes, host_outputs);
    p.boundary = std::move(boundary);
    return p;
}

double host_proxy_ms(const Graph& g, const HostModel& hm) {
    const GopCount ops = count_gop(g);
    double cycles = 0.0;
    for (const auto& n : ops.per_node) {
        double per_op = hm.cycles_element_op;
        switch (n.op) {
            case OpKind::Conv2D: per_op = hm.cycles_conv_op; break;
            case OpKind::Sigmoid: per_op = hm.cycles_sigmoid_op; break;
            case OpKind::BoxDecode: per_op = hm.cycles_decode_op; break;
            case OpKind::Nms: per_op = hm.cycles_nms_op; break;
            case OpKind::Quantize:
            case OpKind::Dequantize: per_op = hm.cycles_quant_op; break;
            default: break;
        }
        cycles += per_op * static_cast<double>(n.ops);
    }
    return cycles / (hm.freq_ghz * 1e6);
}

TensorMap run_functional(const Graph& quantized, const TensorMap& inputs) {
    return run_reference(quantized, inputs);
}

Tensor run_node_on_accel(const Graph& g, const Node& n, const accel::AcceleratorConfig& cfg,
                         const std::optional<Schedule>& sched, const TensorMap& vals,
                         uint64_t& cycles) {
    const NodeLowering low = lower_node(g, n, cfg, sched);
    std::vector<uint8_t> dram(low.dram_size, 0);
    for (const auto& [off, bytes] : low.staged)
        std::memcpy(dram.data() + off, bytes.data(), bytes.size());
    for (const auto& [id, off] : low.input_offsets) {
        const Tensor& t = vals.at(id);
        std::memcpy(dram.data() + off, t.q.data(), t.q.size());
    }
    auto res = accel::execute_stream(cfg, low.stream, std::move(dram));
    cycles += res.cycles.total;

    Tensor out = Tensor::zeros(n.output);
    std::memcpy(out.q.data(), res.dram.data() + low.out_offset, out.q.size());
    return out;
}

namespace {

struct AccelRun {
    TensorMap tensors;  // every accelerator-side tensor value
    uint64_t cycles = 0;
    double quantize_ms = 0.0;  // input quantization runs on the host side
};

AccelRun run_accel_part(const Graph& accel_part, const accel::AcceleratorConfig& cfg,
                        const std::map<std::string, BestChoice>& schedules,
                        const TensorMap& inputs, const HostModel& hm) {
    AccelRun run;
    for (const auto& gi : accel_part.inputs) {
        auto it = inputs.find(gi.id);
        if (it == inputs.end())
            throw ValidationError("run_end_to_end: missing input '" + gi.id + "'");
        run.tensors.emplace(gi.id, it->second);
    }
    for (const auto& n : accel_part.nodes) {
        if (n.op == OpKind::Quantize) {
            // Input upload: the host driver quantizes while copying in.
            const Tensor& src = run.tensors.at(n.inputs[0]);
            Tensor q = Tensor::zeros(n.output);
            for (int64_t i = 0; i < q.elements(); ++i)
                q.q[i] = quantize_value(src.f[i], *n.output.qparams);
            run.quantize_ms += hm.cycles_quant_op * static_cast<double>(q.elements()) /
                               (hm.freq_ghz * 1e6);
            run.tensors.emplace(n.id, std::move(q));
            continue;
        }
        std::optional<Schedule> sched;
        if (auto it = schedules.find(n.id); it != schedules.end()) sched = it->second.schedule;
        run.tensors.emplace(
            n.id, run_node_on_accel(accel_part, n, cfg, sched, run.tensors, run.cycles));
    }
    return run;
}

}  // namespace

EndToEndResult run_end_to_end(const Graph& quantized, const accel::AcceleratorConfig& cfg,
                              const std::map<std::string, BestChoice>& schedules,
                              const TensorMap& inputs, const EndToEndOptions& opts) {
    const Partition p = partition(quantized);

    EndToEndResult result;
    TensorMap host_inputs;
    TensorMap accel_tensors;
    uint64_t accel_cycles = 0;
    double quantize_ms = 0.0;
    int64_t boundary_bytes = 0;

    if (!p.accel_part.nodes.empty()) {
        AccelRun run = run_accel_part(p.accel_part, cfg, schedules, inputs, opts.host);
        accel_cycles = run.cycles;
        quantize_ms = run.quantize_ms;
        accel_tensors = std::move(run.tensors);
        for (const auto& gi : p.host_part.inputs) {
            if (auto it = accel_tensors.find(gi.id); it != accel_tensors.end())
                host_inputs.emplace(gi.id, it->second);
        }
        for (const auto& [id, bytes] : p.boundary) boundary_bytes += bytes;
    }
    for (const auto& gi : p.host_part.inputs) {
        if (host_inputs.count(gi.id)) continue;
        auto it = inputs.find(gi.id);
        if (it == inputs.end())
            throw ValidationError("run_end_to_end: missing input '" + gi.id + "'");
        host_inputs.emplace(gi.id, it->second);
    }

    TensorMap host_vals;
    if (!p.host_part.nodes.empty()) host_vals = run_reference(p.host_part, host_inputs);

    for (const auto& o : quantized.outputs) {
        if (host_vals.count(o))
            result.outputs.emplace(o, host_vals.at(o));
        else if (accel_tensors.count(o))
            result.outputs.emplace(o, accel_tensors.at(o));
    }

    // Detections from the last NMS output if the graph has one.
    for (auto it = quantized.nodes.rbegin(); it != quantized.nodes.rend(); ++it) {
        if (it->op == OpKind::Nms && host_vals.count(it->id)) {
            result.detections = detections_from_tensor(host_vals.at(it->id));
            break;
        }
    }

    RunReport& r = result.report;
    r.accel_cycles = accel_cycles;
    r.accel_ms = static_cast<double>(accel_cycles) / (static_cast<double>(cfg.freq_mhz) * 1e3);
    r.host_ms = (p.host_part.nodes.empty() ? 0.0 : host_proxy_ms(p.host_part, opts.host)) +
                quantize_ms;
    r.transfer_ms =
        opts.transfer_ms_per_mib * (static_cast<double>(boundary_bytes) / (1024.0 * 1024.0));
    r.total_ms = r.accel_ms + r.host_ms + r.transfer_ms;
    r.gop = count_gop(quantized).total_gop();
    const double total_s = r.total_ms / 1e3;
    r.gop_per_s = total_s > 0 ? r.gop / total_s : 0.0;
    r.energy_j = opts.power_w * total_s;
    r.efficiency = opts.power_w > 0 ? r.gop_per_s / opts.power_w : 0.0;
    r.power_w = opts.power_w;
    return result;
}

std::vector<PlacementRow> compare_placements(const Graph& quantized,
                                             const accel::AcceleratorConfig& cfg,
                                             const std::map<std::string, BestChoice>& schedules,
                                             const TensorMap& inputs,
                                             const EndToEndOptions& opts) {
    std::vector<PlacementRow> rows;

    // only-accel: the accelerator subgraph on the array, everything else on a
    // scalar core clocked at the fabric frequency.
    {
        PlacementRow row;
        row.name = "only-accel";
        EndToEndOptions slow = opts;
        slow.host.freq_ghz = static_cast<double>(cfg.freq_mhz) / 1e3;
        const EndToEndResult res = run_end_to_end(quantized, cfg, schedules, inputs, slow);
        row.accel_ms = res.report.accel_ms;
        row.host_ms = res.report.host_ms;
        row.transfer_ms = res.report.transfer_ms;
        row.total_ms = res.report.total_ms;
        rows.push_back(row);
    }
    // only-host: the whole graph on the host proxy.
    {
        PlacementRow row;
        row.name = "only-host";
        row.host_ms = host_proxy_ms(quantized, opts.host);
        row.total_ms = row.host_ms;
        rows.push_back(row);
    }
    // mixed: accelerator plus host post-processing.
    {
        PlacementRow row;
        row.name = "mixed";
        const EndToEndResult res = run_end_to_end(quantized, cfg, schedules, inputs, opts);
        row.accel_ms = res.report.accel_ms;
        row.host_ms = res.report.host_ms;
        row.transfer_ms = res.report.transfer_ms;
        row.total_ms = res.report.total_ms;
        rows.push_back(row);
    }
    return rows;
}

std::string RunReport::to_json() const {
    json j{{"format", "gemflow-run-report"},
           {"version", 1},
           {"accel_cycles", accel_cycles},
           {"accel_ms", accel_ms},
           {"host_ms", host_ms},
           {"transfer_ms", transfer_ms},
           {"total_ms", total_ms},
           {"gop", gop},
           {"gop_per_s", gop_per_s},
           {"energy_j", energy_j},
           {"efficiency_gop_per_s_per_w", efficiency},
           {"power_w", power_w}};
    return j.dump(2) + "\n";
}

std::string RunReport::to_csv() const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "accel_cycles,accel_ms,host_ms,transfer_ms,total_ms,gop,gop_per_s,energy_j,"
                  "efficiency,power_w\n%llu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  static_cast<unsigned long long>(accel_cycles), accel_ms, host_ms, transfer_ms,
                  total_ms, gop, gop_per_s, energy_j, efficiency, power_w);
    return buf;
}

std::string detections_to_jsonl(const std::vector<Detection>& dets) {
    std::string out;
    for (const auto& d : dets) {
        json j{{"box", json::array({float_to_string(d.x1), float_to_string(d.y1),
                                    float_to_string(d.x2), float_to_string(d.y2)})},
               {"score", float_to_string(d.score)},
               {"class", d.class_id}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string placements_to_csv(const std::vector<PlacementRow>& rows) {
    std::string out = "placement,accel_ms,host_ms,transfer_ms,total_ms\n";
    for (const auto& r : rows) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n", r.name.c_str(), r.accel_ms,
                      r.host_ms, r.transfer_ms, r.total_ms);
        out += buf;
    }
    return out;
}

}  // namespace gemflow
