#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "gemflow/accel/macro.hpp"
#include "gemflow/autotune.hpp"
#include "gemflow/dsp_pack.hpp"
#include "gemflow/fixtures.hpp"
#include "gemflow/fp16.hpp"
#include "gemflow/model_io.hpp"
#include "gemflow/pipeline.hpp"
#include "gemflow/prune.hpp"
#include "gemflow/quantize.hpp"
#include "gemflow/runtime.hpp"
#include "gemflow/transforms.hpp"
#include "gemflow/version.hpp"

namespace py = pybind11;
using namespace gemflow;

namespace {

Tensor tensor_from_array(const TensorSpec& spec, const py::array& arr) {
    Tensor t = Tensor::zeros(spec);
    if (spec.dtype == DType::F32) {
        const auto a = py::array_t<float, py::array::c_style | py::array::forcecast>::ensure(arr);
        if (!a || a.size() != t.elements())
            throw ValidationError("input array has the wrong element count");
        std::memcpy(t.f.data(), a.data(), static_cast<size_t>(a.size()) * 4);
    } else {
        const auto a =
            py::array_t<int8_t, py::array::c_style | py::array::forcecast>::ensure(arr);
        if (!a || a.size() != t.elements())
            throw ValidationError("input array has the wrong element count");
        std::memcpy(t.q.data(), a.data(), static_cast<size_t>(a.size()));
    }
    return t;
}

py::array tensor_to_array(const Tensor& t) {
    const auto& s = t.spec.shape.d;
    const std::vector<py::ssize_t> shape(s.begin(), s.end());
    if (t.spec.dtype == DType::F32) {
        py::array_t<float> out(shape);
        std::memcpy(out.mutable_data(), t.f.data(), t.f.size() * 4);
        return out;
    }
    py::array_t<int8_t> out(shape);
    std::memcpy(out.mutable_data(), t.q.data(), t.q.size());
    return out;
}

TensorMap single_input(const Graph& g, const py::array& arr) {
    if (g.inputs.size() != 1)
        throw ValidationError("this entry point expects a single-input model");
    TensorMap m;
    m.emplace(g.inputs[0].id, tensor_from_array(g.inputs[0].spec, arr));
    return m;
}

py::dict report_to_dict(const RunReport& r) {
    py::dict d;
    d["accel_cycles"] = r.accel_cycles;
    d["accel_ms"] = r.accel_ms;
    d["host_ms"] = r.host_ms;
    d["transfer_ms"] = r.transfer_ms;
    d["total_ms"] = r.total_ms;
    d["gop"] = r.gop;
    d["gop_per_s"] = r.gop_per_s;
    d["energy_j"] = r.energy_j;
    d["efficiency"] = r.efficiency;
    d["power_w"] = r.power_w;
    return d;
}

py::list detections_to_list(const std::vector<Detection>& dets) {
    py::list out;
    for (const auto& d : dets) {
        py::dict item;
        item["box"] = py::make_tuple(d.x1, d.y1, d.x2, d.y2);
        item["score"] = d.score;
        item["class_id"] = d.class_id;
        out.append(item);
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Deployment toolchain and cycle-approximate simulator for a weight-stationary "
              "systolic accelerator";
    m.attr("__version__") = kVersion;

    py::register_exception<ValidationError>(m, "ValidationError");
    py::register_exception<SimulationError>(m, "SimulationError");
    py::register_exception<IoError>(m, "IoError");

    py::class_<Graph>(m, "Graph")
        .def_property_readonly("num_nodes", [](const Graph& g) { return g.nodes.size(); })
        .def_property_readonly("input_shape",
                               [](const Graph& g) {
                                   const auto& d = g.inputs.at(0).spec.shape.d;
                                   return py::make_tuple(d[0], d[1], d[2], d[3]);
                               })
        .def_property_readonly("outputs", [](const Graph& g) { return g.outputs; })
        .def("node_ids",
             [](const Graph& g) {
                 std::vector<std::string> ids;
                 for (const auto& n : g.nodes) ids.push_back(n.id);
                 return ids;
             })
        .def("validate", &Graph::validate);

    m.def("load_model", &load_model, py::arg("path"));
    m.def("save_model", &save_model, py::arg("graph"), py::arg("path"),
          py::arg("blob_filename") = "");
    m.def("make_toy_detector", &fixtures::make_toy_detector, py::arg("input") = 64,
          py::arg("seed") = 7);
    m.def("make_conv_only", &fixtures::make_conv_only, py::arg("input") = 640,
          py::arg("seed") = 11);
    m.def("make_tiny58", &fixtures::make_tiny58, py::arg("input") = 640,
          py::arg("num_classes") = 80, py::arg("seed") = 23);

    m.def("replace_activations", &replace_activations);
    m.def("rescale_input", &rescale_input, py::arg("graph"), py::arg("h"), py::arg("w"));
    m.def("count_gop", [](const Graph& g) {
        const GopCount c = count_gop(g);
        py::dict d;
        d["main_gop"] = c.main_gop();
        d["post_gop"] = c.post_gop();
        d["total_gop"] = c.total_gop();
        d["main_ops"] = c.main_ops;
        d["post_ops"] = c.post_ops;
        return d;
    });
    m.def("analyze_input_sizes", &analyze_input_sizes, py::arg("graph"), py::arg("sizes"));

    // Quantization kernels.
    m.def("f16_round", &f16_round);
    m.def("f16_bits", &f16_from_f32);
    m.def(
        "requantize",
        [](int32_t acc, float multiplier, int32_t zero_point,
           std::optional<std::pair<int32_t, int32_t>> clamp) {
            return requantize(acc, RequantSpec::make(multiplier, zero_point, clamp));
        },
        py::arg("acc"), py::arg("multiplier"), py::arg("zero_point") = 0,
        py::arg("clamp") = py::none());

    m.def(
        "calibrate",
        [](const Graph& g, const std::vector<py::array>& samples) {
            std::vector<TensorMap> maps;
            for (const auto& s : samples) maps.push_back(single_input(g, s));
            return calibrate(g, maps).to_json();
        },
        py::arg("graph"), py::arg("samples"));
    m.def(
        "quantize_graph",
        [](const Graph& g, const std::string& stats_json) {
            return quantize_graph(g, CalibrationStats::from_json(stats_json));
        },
        py::arg("graph"), py::arg("stats_json"));

    m.def(
        "run_reference",
        [](const Graph& g, const py::array& input) {
            const TensorMap vals = run_reference(g, single_input(g, input));
            py::dict out;
            for (const auto& id : g.outputs) out[py::str(id)] = tensor_to_array(vals.at(id));
            return out;
        },
        py::arg("graph"), py::arg("input"));

    // DSP packing.
    m.def("pack", [](int8_t w1, int8_t w2) { return dsp::pack(w1, w2).p; });
    m.def("packed_mac",
          [](int32_t p, int8_t a) { return dsp::packed_mac(dsp::PackedPair{p}, a); });
    m.def("unpack", [](int32_t p) { return dsp::unpack(dsp::PackedPair{p}); });
    m.def("estimate_array_dsps", &dsp::estimate_array_dsps, py::arg("dim"), py::arg("packed"));

    // Accelerator configuration.
    py::class_<accel::AcceleratorConfig>(m, "AcceleratorConfig")
        .def(py::init(&accel::AcceleratorConfig::preset), py::arg("preset") = "ours")
        .def_readwrite("dim", &accel::AcceleratorConfig::dim)
        .def_readwrite("spad_kib", &accel::AcceleratorConfig::spad_kib)
        .def_readwrite("acc_kib", &accel::AcceleratorConfig::acc_kib)
        .def_readwrite("spad_ports", &accel::AcceleratorConfig::spad_ports)
        .def_readwrite("spad_read_delay", &accel::AcceleratorConfig::spad_read_delay)
        .def_readwrite("output_bits", &accel::AcceleratorConfig::output_bits)
        .def_readwrite("saturate_output", &accel::AcceleratorConfig::saturate_output)
        .def_readwrite("max_inflight", &accel::AcceleratorConfig::max_inflight)
        .def_readwrite("bus_bytes", &accel::AcceleratorConfig::bus_bytes)
        .def_readwrite("dram_latency", &accel::AcceleratorConfig::dram_latency)
        .def_readwrite("freq_mhz", &accel::AcceleratorConfig::freq_mhz)
        .def_readwrite("use_dsp_packing", &accel::AcceleratorConfig::use_dsp_packing)
        .def("to_json", &accel::AcceleratorConfig::to_json)
        .def("validate", &accel::AcceleratorConfig::validate);

    py::class_<Schedule>(m, "Schedule")
        .def_readonly("tile_i", &Schedule::tile_i)
        .def_readonly("tile_j", &Schedule::tile_j)
        .def_readonly("tile_k", &Schedule::tile_k)
        .def_property_readonly("loop_order",
                               [](const Schedule& s) { return loop_order_name(s.loop_order); })
        .def_readonly("double_buffer", &Schedule::double_buffer)
        .def("to_json", &Schedule::to_json);

    m.def("default_schedule", &default_schedule, py::arg("m"), py::arg("k"), py::arg("n"),
          py::arg("config"));
    m.def("enumerate_space", &enumerate_space, py::arg("m"), py::arg("k"), py::arg("n"),
          py::arg("config"), py::arg("budget"), py::arg("seed"));

    // One i8 matmul through the full simulator (macro expansion).
    m.def(
        "matmul_i8",
        [](const py::array& a, const py::array& b, std::optional<py::array> bias,
           float multiplier, int32_t zero_point,
           std::optional<accel::AcceleratorConfig> config) {
            const auto aa =
                py::array_t<int8_t, py::array::c_style | py::array::forcecast>::ensure(a);
            const auto bb =
                py::array_t<int8_t, py::array::c_style | py::array::forcecast>::ensure(b);
            if (!aa || !bb || aa.ndim() != 2 || bb.ndim() != 2 || aa.shape(1) != bb.shape(0))
                throw ValidationError("matmul_i8 expects i8 matrices with matching inner dims");
            accel::TiledMatmul op;
            op.m = aa.shape(0);
            op.k = aa.shape(1);
            op.n = bb.shape(1);
            op.a.assign(aa.data(), aa.data() + aa.size());
            op.b.assign(bb.data(), bb.data() + bb.size());
            if (bias) {
                const auto bi =
                    py::array_t<int32_t, py::array::c_style | py::array::forcecast>::ensure(
                        *bias);
                if (!bi || bi.size() != op.n)
                    throw ValidationError("bias must hold n i32 values");
                op.bias = std::vector<int32_t>(bi.data(), bi.data() + bi.size());
            }
            op.requant = RequantSpec::make(multiplier, zero_point);
            const accel::AcceleratorConfig cfg =
                config ? *config : accel::AcceleratorConfig::ours();
            const accel::MacroResult res = execute_macro(cfg, op);
            py::array_t<int8_t> out({res.out_rows, res.out_cols});
            std::memcpy(out.mutable_data(), res.out.data(), res.out.size());
            py::dict cycles;
            cycles["total"] = res.cycles.total;
            cycles["load_busy"] = res.cycles.load_busy;
            cycles["exec_busy"] = res.cycles.exec_busy;
            cycles["store_busy"] = res.cycles.store_busy;
            return py::make_tuple(out, cycles);
        },
        py::arg("a"), py::arg("b"), py::arg("bias") = py::none(), py::arg("multiplier") = 1.0f,
        py::arg("zero_point") = 0, py::arg("config") = py::none());

    // Pruning.
    m.def("build_connectivity", [](const Graph& g) {
        py::list out;
        for (const auto& grp : build_connectivity(g)) {
            py::dict d;
            d["id"] = grp.id;
            d["members"] = grp.members;
            d["channels"] = grp.channels;
            d["prunable"] = grp.prunable;
            py::list consumers;
            for (const auto& c : grp.consumers)
                consumers.append(py::make_tuple(c.node_id, c.channel_offset));
            d["consumers"] = consumers;
            out.append(d);
        }
        return out;
    });
    m.def("run_plan", [](const Graph& g, const std::string& plan_json) {
        auto [pruned, stats] = run_plan(g, PruningPlan::from_json(plan_json));
        py::list st;
        for (const auto& s : stats) {
            py::dict d;
            d["params_before"] = s.params_before;
            d["params_after"] = s.params_after;
            d["sparsity"] = s.sparsity;
            d["gop_before"] = s.gop_before();
            d["gop_after"] = s.gop_after();
            st.append(d);
        }
        return py::make_tuple(pruned, st);
    });
    m.def("count_params", &count_params);

    // Tuning.
    m.def(
        "tune_graph",
        [](const Graph& g, const accel::AcceleratorConfig& cfg, size_t budget, uint64_t seed,
           int jobs) {
            const GraphTuneResult r = tune_graph(g, cfg, budget, seed, jobs);
            py::dict summary;
            summary["layers"] = r.summary.layers;
            summary["improved"] = r.summary.improved;
            summary["improved_fraction"] = r.summary.improved_fraction;
            summary["mean_cycle_reduction"] = r.summary.mean_cycle_reduction;
            py::dict table;
            for (const auto& [id, choice] : r.table) {
                py::dict c;
                c["source"] = choice.source == BestChoice::Source::Tuned ? "tuned" : "default";
                c["schedule"] = choice.schedule;
                c["cycles_default"] = choice.cycles_default;
                c["cycles_best"] = choice.cycles_best;
                table[py::str(id)] = c;
            }
            return py::make_tuple(table, summary, records_to_jsonl(r.records));
        },
        py::arg("graph"), py::arg("config"), py::arg("budget") = 24, py::arg("seed") = 1,
        py::arg("jobs") = 1);

    // Partitioning and end-to-end execution.
    m.def("partition", [](const Graph& g) {
        const Partition p = partition(g);
        py::dict d;
        d["accel_nodes"] = p.accel_part.nodes.size();
        d["host_nodes"] = p.host_part.nodes.size();
        py::list boundary;
        for (const auto& [id, bytes] : p.boundary) boundary.append(py::make_tuple(id, bytes));
        d["boundary"] = boundary;
        return d;
    });
    m.def(
        "run_end_to_end",
        [](const Graph& g, const accel::AcceleratorConfig& cfg, const py::array& input,
           double power_w) {
            EndToEndOptions opts;
            opts.power_w = power_w;
            const EndToEndResult res = run_end_to_end(g, cfg, {}, single_input(g, input), opts);
            return py::make_tuple(detections_to_list(res.detections),
                                  report_to_dict(res.report));
        },
        py::arg("graph"), py::arg("config"), py::arg("input"), py::arg("power_w") = 3.68);
    m.def(
        "compare_placements",
        [](const Graph& g, const accel::AcceleratorConfig& cfg, const py::array& input) {
            py::list out;
            for (const auto& row : compare_placements(g, cfg, {}, single_input(g, input))) {
                py::dict d;
                d["placement"] = row.name;
                d["accel_ms"] = row.accel_ms;
                d["host_ms"] = row.host_ms;
                d["transfer_ms"] = row.transfer_ms;
                d["total_ms"] = row.total_ms;
                out.append(d);
            }
            return out;
        },
        py::arg("graph"), py::arg("config"), py::arg("input"));

    m.def(
        "run_pipeline",
        [](const std::string& config_json) {
            const PipelineResult res = run_pipeline(PipelineConfig::from_json(config_json));
            py::dict d;
            d["stages"] = res.stages_run;
            d["artifacts"] = res.artifacts;
            d["report"] = report_to_dict(res.report);
            d["detections"] = res.detections;
            return d;
        },
        py::arg("config_json"));
}
