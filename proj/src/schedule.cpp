#include "gemflow/schedule.hpp"

#include <algorithm>

#include <json.hpp>

#include "gemflow/model_io.hpp"

namespace gemflow {

using accel::AcceleratorConfig;
using accel::ConfigEx;
using accel::ConfigLd;
using accel::ConfigSt;
using accel::Compute;
using accel::Fence;
using accel::Im2colDesc;
using accel::Instruction;
using accel::InstructionStream;
using accel::LocalAddr;
using accel::Mvin;
using accel::Mvout;
using accel::Preload;
using accel::Space;
using nlohmann::json;

std::string loop_order_name(uint8_t idx) {
    const auto& o = kLoopOrders.at(idx);
    return std::string{o[0], o[1], o[2]};
}

uint8_t loop_order_from_name(const std::string& name) {
    for (uint8_t i = 0; i < kLoopOrders.size(); ++i)
        if (loop_order_name(i) == name) return i;
    throw ValidationError("unknown loop order: " + name);
}

std::string Schedule::to_json() const {
    json j{{"tile_i", tile_i},
           {"tile_j", tile_j},
           {"tile_k", tile_k},
           {"loop_order", loop_order_name(loop_order)},
           {"double_buffer", double_buffer}};
    return j.dump();
}

Schedule Schedule::from_json(const std::string& text) {
    json j = json::parse(text);
    Schedule s;
    s.tile_i = j.at("tile_i").get<int>();
    s.tile_j = j.at("tile_j").get<int>();
    s.tile_k = j.at("tile_k").get<int>();
    s.loop_order = loop_order_from_name(j.at("loop_order").get<std::string>());
    s.double_buffer = j.at("double_buffer").get<bool>();
    return s;
}

namespace {

int64_t spad_footprint_bytes(const Schedule& s, const AcceleratorConfig& cfg) {
    return (static_cast<int64_t>(s.tile_i) * s.tile_k +
            static_cast<int64_t>(s.tile_k) * s.tile_j) *
           cfg.dim * cfg.dim;
}

int64_t acc_footprint_bytes(const Schedule& s, const AcceleratorConfig& cfg) {
    return static_cast<int64_t>(s.tile_i) * s.tile_j * cfg.dim * cfg.dim * 4;
}

}  // namespace

bool schedule_legal(const Schedule& s, const AcceleratorConfig& cfg) {
    if (s.tile_i < 1 || s.tile_j < 1 || s.tile_k < 1 || s.loop_order >= kLoopOrders.size())
        return false;
    int64_t spad_cap = static_cast<int64_t>(cfg.spad_kib) * 1024;
    if (s.double_buffer) spad_cap /= 2;
    if (spad_footprint_bytes(s, cfg) > spad_cap) return false;
    if (acc_footprint_bytes(s, cfg) > static_cast<int64_t>(cfg.acc_kib) * 1024) return false;
    return true;
}

void check_schedule(const Schedule& s, const AcceleratorConfig& cfg) {
    if (s.tile_i < 1 || s.tile_j < 1 || s.tile_k < 1)
        throw ValidationError("schedule: tile sizes must be positive");
    if (s.loop_order >= kLoopOrders.size())
        throw ValidationError("schedule: bad loop order index");
    int64_t spad_cap = static_cast<int64_t>(cfg.spad_kib) * 1024;
    if (s.double_buffer) spad_cap /= 2;
    const int64_t spad_need = spad_footprint_bytes(s, cfg);
    if (spad_need > spad_cap)
        throw ValidationError(
            "schedule: scratchpad footprint " + std::to_string(spad_need) + " B exceeds " +
            std::to_string(spad_cap) + " B" + (s.double_buffer ? " (double buffered)" : ""));
    const int64_t acc_need = acc_footprint_bytes(s, cfg);
    if (acc_need > static_cast<int64_t>(cfg.acc_kib) * 1024)
        throw ValidationError("schedule: accumulator footprint " + std::to_string(acc_need) +
                              " B exceeds " + std::to_string(cfg.acc_kib * 1024) + " B");
}

Schedule default_schedule(int64_t m, int64_t k, int64_t n, const AcceleratorConfig& cfg) {
    const int64_t dim = cfg.dim;
    const int64_t mt = std::max<int64_t>(1, (m + dim - 1) / dim);
    const int64_t kt = std::max<int64_t>(1, (k + dim - 1) / dim);
    const int64_t nt = std::max<int64_t>(1, (n + dim - 1) / dim);

    Schedule s;
    s.loop_order = 0;  // (i, j, k)
    s.double_buffer = false;
    auto grow = [&](int Schedule::* field, int64_t extent) {
        Schedule probe = s;
        for (int64_t v = extent; v >= 1; --v) {
            probe.*field = static_cast<int>(v);
            if (schedule_legal(probe, cfg)) {
                s.*field = static_cast<int>(v);
                return;
            }
        }
        throw ValidationError("no legal schedule for this layer under the given config");
    };
    grow(&Schedule::tile_k, kt);
    grow(&Schedule::tile_j, nt);
    grow(&Schedule::tile_i, mt);
    return s;
}

namespace {

// Emits instructions with config deduplication.
struct Emitter {
    InstructionStream stream;
    std::optional<ConfigLd> last_ld;
    std::optional<ConfigSt> last_st;

    void ld(const ConfigLd& c) {
        if (!last_ld || !(*last_ld == c)) {
            stream.push_back(c);
            last_ld = c;
        }
    }
    void st(const ConfigSt& c) {
        if (!last_st || !(*last_st == c)) {
            stream.push_back(c);
            last_st = c;
        }
    }
    void push(Instruction ins) { stream.push_back(std::move(ins)); }
};

struct TileExtents {
    int64_t mt, kt, nt;  // problem size in dim-tiles
    int64_t bi, bj, bk;  // macro-block counts
};

}  // namespace

InstructionStream lower_tiled(const MatmulDesc& desc, const AcceleratorConfig& cfg,
                              const Schedule& sched) {
    check_schedule(sched, cfg);
    if (desc.m < 1 || desc.k < 1 || desc.n < 1)
        throw ValidationError("lower_tiled: degenerate problem size");

    const int64_t dim = cfg.dim;
    TileExtents e;
    e.mt = (desc.m + dim - 1) / dim;
    e.kt = (desc.k + dim - 1) / dim;
    e.nt = (desc.n + dim - 1) / dim;
    e.bi = (e.mt + sched.tile_i - 1) / sched.tile_i;
    e.bj = (e.nt + sched.tile_j - 1) / sched.tile_j;
    e.bk = (e.kt + sched.tile_k - 1) / sched.tile_k;

    const bool k_innermost = kLoopOrders[sched.loop_order][2] == 'k';
    const bool spills = e.bk > 1 && !k_innermost;

    Emitter em;
    // The requant spec rides on the execute controller; pin it before any
    // store can retire.
    em.push(ConfigEx{desc.requant, 0});
    em.push(Fence{});

    // Stores are held back and emitted after the next block's loads, so loads
    // can overlap the previous block's compute/store tail.
    struct HeldStore {
        ConfigSt cfg;
        Mvout mv;
    };
    std::vector<HeldStore> held;
    auto flush_stores = [&] {
        for (const auto& h : held) {
            em.st(h.cfg);
            em.push(h.mv);
        }
        held.clear();
    };

    // Scratchpad regions: A block tiles, then B block tiles; double buffering
    // alternates between the two halves.
    const int64_t a_rows = static_cast<int64_t>(sched.tile_i) * sched.tile_k * dim;
    const int64_t half = cfg.spad_rows() / 2;

    // Per output sub-tile: has it received its first contribution yet?
    // Indexed (mi * nt + nj) over the whole problem; reset per bk pass when
    // spilling (reload re-initializes the accumulator).
    std::vector<uint8_t> touched(static_cast<size_t>(e.mt * e.nt), 0);

    const std::array<char, 3>& order = kLoopOrders[sched.loop_order];
    int64_t counts[3];
    for (int d = 0; d < 3; ++d)
        counts[d] = order[d] == 'i' ? e.bi : (order[d] == 'j' ? e.bj : e.bk);

    int64_t block_counter = 0;
    for (int64_t o0 = 0; o0 < counts[0]; ++o0) {
        for (int64_t o1 = 0; o1 < counts[1]; ++o1) {
            for (int64_t o2 = 0; o2 < counts[2]; ++o2) {
                int64_t bi = 0, bj = 0, bk = 0;
                const int64_t ov[3] = {o0, o1, o2};
                for (int d = 0; d < 3; ++d) {
                    if (order[d] == 'i') bi = ov[d];
                    else if (order[d] == 'j') bj = ov[d];
                    else bk = ov[d];
                }

                const int64_t spad_base =
                    sched.double_buffer ? (block_counter % 2) * half : 0;
                const int64_t a_base = spad_base;
                const int64_t b_base = spad_base + a_rows;
                ++block_counter;

                // Cross-controller DRAM dependency (spill then reload) is not
                // scoreboarded; order it explicitly.
                if (spills && bk > 0) {
                    flush_stores();
                    em.push(Fence{});
                }

                const int64_t ti_lo = bi * sched.tile_i;
                const int64_t ti_hi = std::min<int64_t>(ti_lo + sched.tile_i, e.mt);
                const int64_t tj_lo = bj * sched.tile_j;
                const int64_t tj_hi = std::min<int64_t>(tj_lo + sched.tile_j, e.nt);
                const int64_t tk_lo = bk * sched.tile_k;
                const int64_t tk_hi = std::min<int64_t>(tk_lo + sched.tile_k, e.kt);

                auto valid_m = [&](int64_t mi) {
                    return static_cast<uint16_t>(std::min<int64_t>(dim, desc.m - mi * dim));
                };
                auto valid_n = [&](int64_t nj) {
                    return static_cast<uint16_t>(std::min<int64_t>(dim, desc.n - nj * dim));
                };
                auto valid_k = [&](int64_t ki) {
                    return static_cast<uint16_t>(std::min<int64_t>(dim, desc.k - ki * dim));
                };

                // --- load A block ---
                for (int64_t mi = ti_lo; mi < ti_hi; ++mi) {
                    for (int64_t ki = tk_lo; ki < tk_hi; ++ki) {
                        const uint32_t row = static_cast<uint32_t>(
                            a_base + ((mi - ti_lo) * sched.tile_k + (ki - tk_lo)) * dim);
                        if (desc.im2col) {
                            const auto& gsrc = *desc.im2col;
                            Im2colDesc d;
                            d.in_h = static_cast<uint32_t>(gsrc.in_h);
                            d.in_w = static_cast<uint32_t>(gsrc.in_w);
                            d.channels = static_cast<uint32_t>(gsrc.cin);
                            d.kh = static_cast<uint16_t>(gsrc.kh);
                            d.kw = static_cast<uint16_t>(gsrc.kw);
                            d.stride = static_cast<uint16_t>(gsrc.stride);
                            d.pad_top = static_cast<int16_t>(gsrc.pad_top);
                            d.pad_left = static_cast<int16_t>(gsrc.pad_left);
                            d.out_w = static_cast<uint32_t>(gsrc.out_w);
                            d.pad_value = gsrc.pad_value;
                            d.m0 = static_cast<uint32_t>(mi * dim);
                            d.k0 = static_cast<uint32_t>(ki * dim);
                            em.ld(ConfigLd{0, 1, d});
                            em.push(Mvin{desc.a_addr, LocalAddr{Space::Spad, row, false},
                                         valid_m(mi), valid_k(ki), false, false});
                        } else {
                            em.ld(ConfigLd{desc.k, 1, std::nullopt});
                            em.push(
                                Mvin{desc.a_addr + static_cast<uint64_t>(mi) * dim * desc.k +
                                         static_cast<uint64_t>(ki) * dim,
                                     LocalAddr{Space::Spad, row, false}, valid_m(mi),
                                     valid_k(ki), false, false});
                        }
                    }
                }
                // --- load B block ---
                for (int64_t ki = tk_lo; ki < tk_hi; ++ki) {
                    for (int64_t nj = tj_lo; nj < tj_hi; ++nj) {
                        const uint32_t row = static_cast<uint32_t>(
                            b_base + ((ki - tk_lo) * sched.tile_j + (nj - tj_lo)) * dim);
                        em.ld(ConfigLd{desc.n, 1, std::nullopt});
                        em.push(Mvin{desc.b_addr + static_cast<uint64_t>(ki) * dim * desc.n +
                                         static_cast<uint64_t>(nj) * dim,
                                     LocalAddr{Space::Spad, row, false}, valid_k(ki),
                                     valid_n(nj), false, false});
                    }
                }
                // Previous block's stores go out once this block's loads are
                // in flight; they must also precede any accumulator re-init.
                flush_stores();

                // --- accumulator init: bias on the first pass, psum reload after ---
                for (int64_t mi = ti_lo; mi < ti_hi; ++mi) {
                    for (int64_t nj = tj_lo; nj < tj_hi; ++nj) {
                        const uint32_t crow = static_cast<uint32_t>(
                            ((mi - ti_lo) * sched.tile_j + (nj - tj_lo)) * dim);
                        if (bk == 0 && desc.bias_addr) {
                            em.ld(ConfigLd{0, 4, std::nullopt});
                            em.push(Mvin{*desc.bias_addr + static_cast<uint64_t>(nj) * dim * 4,
                                         LocalAddr{Space::Acc, crow, false}, valid_m(mi),
                                         valid_n(nj), false, false});
                            touched[static_cast<size_t>(mi * e.nt + nj)] = 1;
                        } else if (bk > 0 && spills) {
                            em.ld(ConfigLd{desc.n * 4, 4, std::nullopt});
                            em.push(Mvin{desc.psum_addr +
                                             (static_cast<uint64_t>(mi) * dim * desc.n +
                                              static_cast<uint64_t>(nj) * dim) *
                                                 4,
                                         LocalAddr{Space::Acc, crow, false}, valid_m(mi),
                                         valid_n(nj), false, false});
                            touched[static_cast<size_t>(mi * e.nt + nj)] = 1;
                        }
                    }
                }
                // --- compute: preload per weight tile, stream A rows ---
                for (int64_t nj = tj_lo; nj < tj_hi; ++nj) {
                    for (int64_t ki = tk_lo; ki < tk_hi; ++ki) {
                        const uint32_t brow = static_cast<uint32_t>(
                            b_base + ((ki - tk_lo) * sched.tile_j + (nj - tj_lo)) * dim);
                        const uint32_t crow0 = static_cast<uint32_t>(
                            ((ti_lo - ti_lo) * sched.tile_j + (nj - tj_lo)) * dim);
                        em.push(Preload{LocalAddr{Space::Spad, brow, false},
                                        LocalAddr{Space::Acc, crow0, false}});
                        for (int64_t mi = ti_lo; mi < ti_hi; ++mi) {
                            const uint32_t arow = static_cast<uint32_t>(
                                a_base + ((mi - ti_lo) * sched.tile_k + (ki - tk_lo)) * dim);
                            const uint32_t crow = static_cast<uint32_t>(
                                ((mi - ti_lo) * sched.tile_j + (nj - tj_lo)) * dim);
                            uint8_t& seen = touched[static_cast<size_t>(mi * e.nt + nj)];
                            em.push(Compute{LocalAddr{Space::Spad, arow, false},
                                            LocalAddr{Space::Acc, crow, seen != 0},
                                            valid_m(mi), seen != 0});
                            seen = 1;
                        }
                    }
                }
                // --- stores: final requantized output or i32 spill ---
                const bool last_k = bk == e.bk - 1;
                for (int64_t mi = ti_lo; mi < ti_hi; ++mi) {
                    for (int64_t nj = tj_lo; nj < tj_hi; ++nj) {
                        const uint32_t crow = static_cast<uint32_t>(
                            ((mi - ti_lo) * sched.tile_j + (nj - tj_lo)) * dim);
                        if (last_k) {
                            held.push_back(
                                {ConfigSt{desc.n, std::nullopt},
                                 Mvout{LocalAddr{Space::Acc, crow, false},
                                       desc.out_addr + static_cast<uint64_t>(mi) * dim * desc.n +
                                           static_cast<uint64_t>(nj) * dim,
                                       valid_m(mi), valid_n(nj), false, false}});
                        } else if (spills) {
                            held.push_back(
                                {ConfigSt{desc.n * 4, std::nullopt},
                                 Mvout{LocalAddr{Space::Acc, crow, false},
                                       desc.psum_addr +
                                           (static_cast<uint64_t>(mi) * dim * desc.n +
                                            static_cast<uint64_t>(nj) * dim) *
                                               4,
                                       valid_m(mi), valid_n(nj), true, false}});
                        }
                    }
                }
            }
        }
    }
    flush_stores();
    em.push(Fence{});
    return std::move(em.stream);
}

void conv_matmul_dims(const Graph& g, const Node& n, int64_t& m, int64_t& k, int64_t& n_out) {
    const auto& a = n.conv();
    const Shape4 in = g.tensor(n.inputs[0]).shape;
    m = n.output.shape.h() * n.output.shape.w();
    k = static_cast<int64_t>(a.kh) * a.kw * in.c();
    n_out = n.output.shape.c();
}

namespace {

constexpr uint64_t kAlign = 64;

uint64_t align_up(uint64_t v) { return (v + kAlign - 1) / kAlign * kAlign; }

}  // namespace

NodeLowering lower_conv(const Graph& g, const Node& n, const AcceleratorConfig& cfg,
                        const std::optional<Schedule>& sched) {
    if (n.op != OpKind::Conv2D) throw ValidationError("lower_conv: not a conv node");
    if (n.output.dtype != DType::I8)
        throw ValidationError("lower_conv: node '" + n.id + "' is not quantized");
    const auto& a = n.conv();
    if (a.dilation != 1) {
        if (cfg.disabled.count(accel::Feature::KernelDilation))
            throw ValidationError("node '" + n.id + "': kernel dilation feature is disabled");
        throw ValidationError("node '" + n.id + "': dilated convolutions are not lowerable");
    }
    if (!n.requant) throw ValidationError("lower_conv: node '" + n.id + "' has no requant spec");

    const Shape4 in = g.tensor(n.inputs[0]).shape;
    MatmulDesc d;
    conv_matmul_dims(g, n, d.m, d.k, d.n);
    d.requant = *n.requant;

    const auto sh = conv_spatial(in.h(), a.kh, a.stride, a.padding);
    const auto sw = conv_spatial(in.w(), a.kw, a.stride, a.padding);
    ConvGeom geom;
    geom.in_h = in.h();
    geom.in_w = in.w();
    geom.cin = in.c();
    geom.kh = a.kh;
    geom.kw = a.kw;
    geom.stride = a.stride;
    geom.pad_top = sh.pad_begin;
    geom.pad_left = sw.pad_begin;
    geom.out_h = n.output.shape.h();
    geom.out_w = n.output.shape.w();
    geom.pad_value =
        static_cast<int8_t>(g.tensor(n.inputs[0]).qparams->zero_point);
    d.im2col = geom;

    NodeLowering low;
    uint64_t cursor = 0;
    const uint64_t in_bytes = static_cast<uint64_t>(in.elements());
    d.a_addr = cursor;
    low.input_offsets.emplace_back(n.inputs[0], cursor);
    cursor = align_up(cursor + in_bytes);

    // Weights are already k-major in the blob ([Kh,Kw,Cin,Cout] == K x N).
    const auto wspan = g.conv_filter_i8(n);
    d.b_addr = cursor;
    low.staged.emplace_back(cursor, std::vector<uint8_t>(
                                        reinterpret_cast<const uint8_t*>(wspan.data()),
                                        reinterpret_cast<const uint8_t*>(wspan.data()) +
                                            wspan.size()));
    cursor = align_up(cursor + wspan.size());

    const auto bias = g.conv_bias_i32(n);
    if (!bias.empty()) {
        d.bias_addr = cursor;
        std::vector<uint8_t> bytes(bias.size() * 4);
        std::memcpy(bytes.data(), bias.data(), bytes.size());
        low.staged.emplace_back(cursor, std::move(bytes));
        cursor = align_up(cursor + bias.size() * 4);
    }

    d.psum_addr = cursor;
    cursor = align_up(cursor + static_cast<uint64_t>(d.m) * d.n * 4);
    d.out_addr = cursor;
    low.out_offset = cursor;
    cursor = align_up(cursor + static_cast<uint64_t>(d.m) * d.n);
    low.dram_size = cursor;
    low.m = d.m;
    low.k = d.k;
    low.n = d.n;

    const Schedule s = sched ? *sched : default_schedule(d.m, d.k, d.n, cfg);
    low.stream = lower_tiled(d, cfg, s);
    return low;
}

namespace {

// Shared layout for the data-movement lowerings.
struct AuxCtx {
    NodeLowering low;
    Emitter em;

    uint64_t place_input(const Graph& g, const std::string& id, uint64_t& cursor) {
        const uint64_t off = cursor;
        low.input_offsets.emplace_back(id, off);
        cursor = align_up(cursor + static_cast<uint64_t>(g.tensor(id).shape.elements()));
        return off;
    }
};

}  // namespace

NodeLowering lower_aux(const Graph& g, const Node& n, const AcceleratorConfig& cfg) {
    if (n.output.dtype != DType::I8)
        throw ValidationError("lower_aux: node '" + n.id + "' is not quantized");
    const int64_t dim = cfg.dim;
    AuxCtx ctx;
    uint64_t cursor = 0;

    switch (n.op) {
        case OpKind::MaxPool2D: {
            const auto& a = n.pool();
            const Shape4 in = g.tensor(n.inputs[0]).shape;
            const Shape4 out = n.output.shape;
            const uint64_t in_off = ctx.place_input(g, n.inputs[0], cursor);
            const uint64_t out_off = cursor;
            cursor = align_up(cursor + static_cast<uint64_t>(out.elements()));

            const auto sh = conv_spatial(in.h(), a.kernel, a.stride, a.padding);
            const auto sw = conv_spatial(in.w(), a.kernel, a.stride, a.padding);
            const int64_t c_total = in.c();

            for (int64_t c0 = 0; c0 < c_total; c0 += dim) {
                const uint16_t cols = static_cast<uint16_t>(std::min<int64_t>(dim, c_total - c0));
                for (int64_t oh = 0; oh < out.h(); ++oh) {
                    // Load the input band covering this output row's windows.
                    int64_t iy_lo = oh * a.stride - sh.pad_begin;
                    int64_t iy_hi = iy_lo + a.kernel - 1;
                    iy_lo = std::clamp<int64_t>(iy_lo, 0, in.h() - 1);
                    iy_hi = std::clamp<int64_t>(iy_hi, 0, in.h() - 1);
                    const int64_t pos0 = iy_lo * in.w();
                    const int64_t positions = (iy_hi - iy_lo + 1) * in.w();
                    if (positions > cfg.spad_rows())
                        throw ValidationError("lower_aux: pooling band exceeds the scratchpad");
                    for (int64_t p = 0; p < positions; p += dim) {
                        const uint16_t rows =
                            static_cast<uint16_t>(std::min<int64_t>(dim, positions - p));
                        ctx.em.ld(ConfigLd{c_total, 1, std::nullopt});
                        ctx.em.push(Mvin{
                            in_off + static_cast<uint64_t>((pos0 + p) * c_total + c0),
                            LocalAddr{Space::Spad, static_cast<uint32_t>(p), false}, rows, cols,
                            false, false});
                    }
                    // Pooled stores for this output row.
                    for (int64_t ow0 = 0; ow0 < out.w(); ow0 += dim) {
                        const uint16_t rows =
                            static_cast<uint16_t>(std::min<int64_t>(dim, out.w() - ow0));
                        accel::PoolDesc p;
                        p.window = static_cast<uint16_t>(a.kernel);
                        p.stride = static_cast<uint16_t>(a.stride);
                        p.pad_top = static_cast<int16_t>(sh.pad_begin);
                        p.pad_left = static_cast<int16_t>(sw.pad_begin);
                        p.in_h = static_cast<uint32_t>(in.h());
                        p.in_w = static_cast<uint32_t>(in.w());
                        p.out_w = static_cast<uint32_t>(out.w());
                        p.in_pos0 = static_cast<uint32_t>(pos0);
                        p.m0 = static_cast<uint32_t>(oh * out.w() + ow0);
                        ctx.em.st(ConfigSt{c_total, p});
                        ctx.em.push(Mvout{
                            LocalAddr{Space::Spad, 0, false},
                            out_off + static_cast<uint64_t>((oh * out.w() + ow0) * c_total + c0),
                            rows, cols, false, false});
                    }
                }
            }
            ctx.low.out_offset = out_off;
            break;
        }
        case OpKind::ResizeNearest: {
            const int f = n.resize().factor;
            const Shape4 in = g.tensor(n.inputs[0]).shape;
            const Shape4 out = n.output.shape;
            const uint64_t in_off = ctx.place_input(g, n.inputs[0], cursor);
            const uint64_t out_off = cursor;
            cursor = align_up(cursor + static_cast<uint64_t>(out.elements()));
            const int64_t c = in.c();

            for (int64_t c0 = 0; c0 < c; c0 += dim) {
                const uint16_t cols = static_cast<uint16_t>(std::min<int64_t>(dim, c - c0));
                for (int64_t y = 0; y < in.h(); ++y) {
                    for (int64_t x0 = 0; x0 < in.w(); x0 += dim) {
                        const uint16_t rows =
                            static_cast<uint16_t>(std::min<int64_t>(dim, in.w() - x0));
                        ctx.em.ld(ConfigLd{c, 1, std::nullopt});
                        ctx.em.push(Mvin{in_off + static_cast<uint64_t>((y * in.w() + x0) * c + c0),
                                         LocalAddr{Space::Spad, 0, false}, rows, cols, false,
                                         false});
                        // One store pass per replication phase.
                        for (int dy = 0; dy < f; ++dy) {
                            for (int dx = 0; dx < f; ++dx) {
                                const int64_t oy = y * f + dy;
                                const int64_t ox0 = x0 * f + dx;
                                ctx.em.st(ConfigSt{static_cast<int64_t>(f) * c, std::nullopt});
                                ctx.em.push(Mvout{
                                    LocalAddr{Space::Spad, 0, false},
                                    out_off +
                                        static_cast<uint64_t>((oy * out.w() + ox0) * c + c0),
                                    rows, cols, false, false});
                            }
                        }
                    }
                }
            }
            ctx.low.out_offset = out_off;
            break;
        }
        case OpKind::Concat: {
            const Shape4 out = n.output.shape;
            std::vector<uint64_t> in_offs;
            for (const auto& in_id : n.inputs) in_offs.push_back(ctx.place_input(g, in_id, cursor));
            const uint64_t out_off = cursor;
            cursor = align_up(cursor + static_cast<uint64_t>(out.elements()));
            const int64_t positions = out.h() * out.w();
            const int64_t c_out = out.c();

            int64_t coff = 0;
            for (size_t t = 0; t < n.inputs.size(); ++t) {
                const int64_t c = g.tensor(n.inputs[t]).shape.c();
                for (int64_t c0 = 0; c0 < c; c0 += dim) {
                    const uint16_t cols = static_cast<uint16_t>(std::min<int64_t>(dim, c - c0));
                    for (int64_t p0 = 0; p0 < positions; p0 += dim) {
                        const uint16_t rows =
                            static_cast<uint16_t>(std::min<int64_t>(dim, positions - p0));
                        ctx.em.ld(ConfigLd{c, 1, std::nullopt});
                        ctx.em.push(Mvin{in_offs[t] + static_cast<uint64_t>(p0 * c + c0),
                                         LocalAddr{Space::Spad, 0, false}, rows, cols, false,
                                         false});
                        ctx.em.st(ConfigSt{c_out, std::nullopt});
                        ctx.em.push(Mvout{
                            LocalAddr{Space::Spad, 0, false},
                            out_off + static_cast<uint64_t>(p0 * c_out + coff + c0), rows, cols,
                            false, false});
                    }
                }
                coff += c;
            }
            ctx.low.out_offset = out_off;
            break;
        }
        case OpKind::Add: {
            if (!n.requant)
                throw ValidationError("lower_aux: add node '" + n.id + "' has no requant spec");
            const Shape4 out = n.output.shape;
            const uint64_t x_off = ctx.place_input(g, n.inputs[0], cursor);
            const uint64_t y_off = ctx.place_input(g, n.inputs[1], cursor);
            // Constant row folding the doubled input zero point.
            const int32_t zp = g.tensor(n.inputs[0]).qparams->zero_point;
            const uint64_t const_off = cursor;
            {
                std::vector<uint8_t> bytes(static_cast<size_t>(dim) * 4);
                for (int64_t i = 0; i < dim; ++i) {
                    const int32_t v = -2 * zp;
                    std::memcpy(bytes.data() + i * 4, &v, 4);
                }
                ctx.low.staged.emplace_back(const_off, std::move(bytes));
            }
            cursor = align_up(cursor + static_cast<uint64_t>(dim) * 4);
            const uint64_t out_off = cursor;
            cursor = align_up(cursor + static_cast<uint64_t>(out.elements()));

            ctx.em.push(ConfigEx{*n.requant, 0});
            ctx.em.push(Fence{});

            const int64_t positions = out.h() * out.w();
            const int64_t c = out.c();
            for (int64_t c0 = 0; c0 < c; c0 += dim) {
                const uint16_t cols = static_cast<uint16_t>(std::min<int64_t>(dim, c - c0));
                for (int64_t p0 = 0; p0 < positions; p0 += dim) {
                    const uint16_t rows =
                        static_cast<uint16_t>(std::min<int64_t>(dim, positions - p0));
                    ctx.em.ld(ConfigLd{c, 1, std::nullopt});
                    ctx.em.push(Mvin{x_off + static_cast<uint64_t>(p0 * c + c0),
                                     LocalAddr{Space::Acc, 0, false}, rows, cols, false, false});
                    ctx.em.push(Mvin{y_off + static_cast<uint64_t>(p0 * c + c0),
                                     LocalAddr{Space::Acc, 0, true}, rows, cols, false, false});
                    ctx.em.ld(ConfigLd{0, 4, std::nullopt});
                    ctx.em.push(Mvin{const_off, LocalAddr{Space::Acc, 0, true}, rows, cols,
                                     false, false});
                    ctx.em.st(ConfigSt{c, std::nullopt});
                    ctx.em.push(Mvout{LocalAddr{Space::Acc, 0, false},
                                      out_off + static_cast<uint64_t>(p0 * c + c0), rows, cols,
                                      false, false});
                }
            }
            ctx.low.out_offset = out_off;
            break;
        }
        default:
            throw ValidationError("lower_aux: unsupported node kind " +
                                  std::string(op_name(n.op)));
    }

    ctx.em.push(Fence{});
    ctx.low.stream = std::move(ctx.em.stream);
    ctx.low.dram_size = cursor;
    return ctx.low;
}

NodeLowering lower_node(const Graph& g, const Node& n, const AcceleratorConfig& cfg,
                        const std::optional<Schedule>& sched) {
    if (n.op == OpKind::Conv2D) return lower_conv(g, n, cfg, sched);
    return lower_aux(g, n, cfg);
}

}  // namespace gemflow
