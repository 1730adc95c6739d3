#include "gemflow/accel/macro.hpp"

#include <cstring>

#include "gemflow/schedule.hpp"

namespace gemflow::accel {

namespace {

constexpr uint64_t kAlign = 64;
uint64_t align_up(uint64_t v) { return (v + kAlign - 1) / kAlign * kAlign; }

MacroResult run_desc(const AcceleratorConfig& cfg, MatmulDesc desc, uint64_t dram_size,
                     const std::vector<std::pair<uint64_t, const void*>>& stage,
                     const std::vector<uint64_t>& stage_len) {
    const Schedule sched = default_schedule(desc.m, desc.k, desc.n, cfg);
    InstructionStream stream = lower_tiled(desc, cfg, sched);

    std::vector<uint8_t> dram(dram_size, 0);
    for (size_t i = 0; i < stage.size(); ++i)
        std::memcpy(dram.data() + stage[i].first, stage[i].second, stage_len[i]);

    ExecResult res = execute_stream(cfg, stream, std::move(dram));

    MacroResult out;
    out.out_rows = desc.m;
    out.out_cols = desc.n;
    out.out.resize(static_cast<size_t>(desc.m) * desc.n);
    std::memcpy(out.out.data(), res.dram.data() + desc.out_addr, out.out.size());
    out.cycles = res.cycles;
    out.stream = std::move(stream);
    return out;
}

MacroResult run_matmul(const AcceleratorConfig& cfg, const TiledMatmul& op) {
    if (op.m < 1 || op.k < 1 || op.n < 1)
        throw SimulationError("tiled_matmul: degenerate operand shape");
    if (op.a.size() != static_cast<size_t>(op.m * op.k) ||
        op.b.size() != static_cast<size_t>(op.k * op.n))
        throw SimulationError("tiled_matmul: operand sizes do not match m/k/n");
    if (op.bias && op.bias->size() != static_cast<size_t>(op.n))
        throw SimulationError("tiled_matmul: bias size mismatch");

    MatmulDesc d;
    d.m = op.m;
    d.k = op.k;
    d.n = op.n;
    d.requant = op.requant;
    uint64_t cursor = 0;
    d.a_addr = cursor;
    cursor = align_up(cursor + op.a.size());
    d.b_addr = cursor;
    cursor = align_up(cursor + op.b.size());
    std::vector<std::pair<uint64_t, const void*>> stage{{d.a_addr, op.a.data()},
                                                        {d.b_addr, op.b.data()}};
    std::vector<uint64_t> lens{op.a.size(), op.b.size()};
    if (op.bias) {
        d.bias_addr = cursor;
        stage.emplace_back(cursor, op.bias->data());
        lens.push_back(op.bias->size() * 4);
        cursor = align_up(cursor + op.bias->size() * 4);
    }
    d.psum_addr = cursor;
    cursor = align_up(cursor + static_cast<uint64_t>(d.m) * d.n * 4);
    d.out_addr = cursor;
    cursor = align_up(cursor + static_cast<uint64_t>(d.m) * d.n);
    return run_desc(cfg, d, cursor, stage, lens);
}

MacroResult run_conv(const AcceleratorConfig& cfg, const TiledConv& op) {
    if (op.in_h < 1 || op.in_w < 1 || op.cin < 1 || op.cout < 1)
        throw SimulationError("tiled_conv: degenerate operand shape");
    if (op.input.size() != static_cast<size_t>(op.in_h * op.in_w * op.cin))
        throw SimulationError("tiled_conv: input size mismatch");
    if (op.filter.size() != static_cast<size_t>(op.kh) * op.kw * op.cin * op.cout)
        throw SimulationError("tiled_conv: filter size mismatch");

    const Padding pad = op.same_padding ? Padding::Same : Padding::Valid;
    const auto sh = conv_spatial(op.in_h, op.kh, op.stride, pad);
    const auto sw = conv_spatial(op.in_w, op.kw, op.stride, pad);

    MatmulDesc d;
    d.m = sh.out * sw.out;
    d.k = static_cast<int64_t>(op.kh) * op.kw * op.cin;
    d.n = op.cout;
    d.requant = op.requant;
    ConvGeom geom;
    geom.in_h = op.in_h;
    geom.in_w = op.in_w;
    geom.cin = op.cin;
    geom.kh = op.kh;
    geom.kw = op.kw;
    geom.stride = op.stride;
    geom.pad_top = sh.pad_begin;
    geom.pad_left = sw.pad_begin;
    geom.out_h = sh.out;
    geom.out_w = sw.out;
    geom.pad_value = op.pad_value;
    d.im2col = geom;

    uint64_t cursor = 0;
    d.a_addr = cursor;
    cursor = align_up(cursor + op.input.size());
    d.b_addr = cursor;
    cursor = align_up(cursor + op.filter.size());
    std::vector<std::pair<uint64_t, const void*>> stage{{d.a_addr, op.input.data()},
                                                        {d.b_addr, op.filter.data()}};
    std::vector<uint64_t> lens{op.input.size(), op.filter.size()};
    if (op.bias) {
        if (op.bias->size() != static_cast<size_t>(op.cout))
            throw SimulationError("tiled_conv: bias size mismatch");
        d.bias_addr = cursor;
        stage.emplace_back(cursor, op.bias->data());
        lens.push_back(op.bias->size() * 4);
        cursor = align_up(cursor + op.bias->size() * 4);
    }
    d.psum_addr = cursor;
    cursor = align_up(cursor + static_cast<uint64_t>(d.m) * d.n * 4);
    d.out_addr = cursor;
    cursor = align_up(cursor + static_cast<uint64_t>(d.m) * d.n);
    return run_desc(cfg, d, cursor, stage, lens);
}

}  // namespace

MacroResult execute_macro(const AcceleratorConfig& cfg, const MacroOp& op) {
    if (const auto* mm = std::get_if<TiledMatmul>(&op)) return run_matmul(cfg, *mm);
    return run_conv(cfg, std::get<TiledConv>(op));
}

}  // namespace gemflow::accel
