#include <doctest.h>

#include <cstring>

#include "gemflow/accel/macro.hpp"
#include "gemflow/accel/sim.hpp"
#include "gemflow/fixtures.hpp"
#include "gemflow/schedule.hpp"

using namespace gemflow;
using namespace gemflow::accel;

namespace {

AcceleratorConfig ours() { return AcceleratorConfig::ours(); }

// Test-local brute-force oracle: i32 conv with zero-point padding, then the
// shared requantize kernel. Independent of the lowering and the simulator.
std::vector<int8_t> oracle_conv(const std::vector<int8_t>& input, int64_t h, int64_t w,
                                int64_t cin, const std::vector<int8_t>& filt, int64_t cout,
                                int kh, int kw, int stride, int8_t zp_in,
                                const std::vector<int32_t>& bias, const RequantSpec& rq) {
    const auto sh = conv_spatial(h, kh, stride, Padding::Same);
    const auto sw = conv_spatial(w, kw, stride, Padding::Same);
    std::vector<int8_t> out(static_cast<size_t>(sh.out) * sw.out * cout);
    for (int64_t oy = 0; oy < sh.out; ++oy)
        for (int64_t ox = 0; ox < sw.out; ++ox)
            for (int64_t co = 0; co < cout; ++co) {
                int32_t acc = bias.empty() ? 0 : bias[static_cast<size_t>(co)];
                for (int ky = 0; ky < kh; ++ky)
                    for (int kx = 0; kx < kw; ++kx)
                        for (int64_t ci = 0; ci < cin; ++ci) {
                            const int64_t iy = oy * stride - sh.pad_begin + ky;
                            const int64_t ix = ox * stride - sw.pad_begin + kx;
                            const int32_t x =
                                (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    ? input[(iy * w + ix) * cin + ci]
                                    : zp_in;
                            acc += x * filt[((ky * kw + kx) * cin + ci) * cout + co];
                        }
                out[(oy * sw.out + ox) * cout + co] = requantize(acc, rq);
            }
    return out;
}

// Plain matmul problem staged into DRAM; returns (dram, desc).
std::pair<std::vector<uint8_t>, MatmulDesc> stage_matmul(int64_t m, int64_t k, int64_t n,
                                                         uint64_t seed, bool with_bias) {
    fixtures::DetRand rng(seed);
    MatmulDesc d;
    d.m = m;
    d.k = k;
    d.n = n;
    d.requant = RequantSpec::make(0.0078125f, 1);
    d.a_addr = 0;
    d.b_addr = static_cast<uint64_t>(m) * k;
    uint64_t cursor = d.b_addr + static_cast<uint64_t>(k) * n;
    if (with_bias) {
        d.bias_addr = cursor;
        cursor += static_cast<uint64_t>(n) * 4;
    }
    d.psum_addr = cursor;
    cursor += static_cast<uint64_t>(m) * n * 4;
    d.out_addr = cursor;
    cursor += static_cast<uint64_t>(m) * n;

    std::vector<uint8_t> dram(cursor, 0);
    for (int64_t i = 0; i < m * k; ++i)
        dram[i] = static_cast<uint8_t>(rng.uniform_int(-128, 127));
    for (int64_t i = 0; i < k * n; ++i)
        dram[d.b_addr + i] = static_cast<uint8_t>(rng.uniform_int(-128, 127));
    if (with_bias)
        for (int64_t i = 0; i < n; ++i) {
            const int32_t b = rng.uniform_int(-5000, 5000);
            std::memcpy(dram.data() + *d.bias_addr + i * 4, &b, 4);
        }
    return {std::move(dram), d};
}

std::vector<int8_t> run_lowered(const MatmulDesc& d, const AcceleratorConfig& cfg,
                                const Schedule& s, const std::vector<uint8_t>& dram) {
    const auto stream = lower_tiled(d, cfg, s);
    const auto res = execute_stream(cfg, stream, dram);
    std::vector<int8_t> out(static_cast<size_t>(d.m) * d.n);
    std::memcpy(out.data(), res.dram.data() + d.out_addr, out.size());
    return out;
}

}  // namespace

TEST_CASE("capacity legality rule") {
    const AcceleratorConfig cfg = ours();
    Schedule s;
    s.tile_i = 4;
    s.tile_j = 4;
    s.tile_k = 8;
    // (4*8 + 8*4) * 32^2 = 65536 B <= 512 KiB.
    CHECK(schedule_legal(s, cfg));
    s.tile_i = 500;
    CHECK(!schedule_legal(s, cfg));  // scratchpad blown
    s.tile_i = 8;
    s.tile_j = 8;
    s.tile_k = 1;
    CHECK(!schedule_legal(s, cfg));  // accumulator: 8*8 tiles > 32
    s.tile_j = 4;
    CHECK(schedule_legal(s, cfg));
    // Double buffering halves the scratchpad budget.
    Schedule big;
    big.tile_i = 1;
    big.tile_j = 1;
    big.tile_k = 255;
    CHECK(schedule_legal(big, cfg));
    big.double_buffer = true;
    CHECK(!schedule_legal(big, cfg));
    CHECK_THROWS_WITH_AS(check_schedule(big, cfg), doctest::Contains("scratchpad"),
                         ValidationError);
}

TEST_CASE("conv im2col dimensions") {
    // 3x3 conv, Cin=64 with dim 32: K = 576 -> 18 reduction tiles.
    Graph g;
    g.inputs.push_back({"in", TensorSpec{Shape4{{1, 16, 16, 64}}, DType::F32, std::nullopt}});
    Node n;
    n.id = "c";
    n.op = OpKind::Conv2D;
    n.inputs = {"in"};
    ConvAttrs a;
    a.kh = 3;
    a.kw = 3;
    a.stride = 1;
    a.has_bias = false;
    n.attrs = a;
    n.output.shape = Shape4{{1, 16, 16, 32}};
    n.output.dtype = DType::F32;
    int64_t m, k, nn;
    conv_matmul_dims(g, n, m, k, nn);
    CHECK(m == 256);
    CHECK(k == 576);
    CHECK(nn == 32);
    CHECK((k + 31) / 32 == 18);
}

TEST_CASE("default schedule maximizes k, then j, then i (enumeration oracle)") {
    const AcceleratorConfig cfg = ours();
    const int64_t dim = cfg.dim;

    SUBCASE("tiny problems take their full extents") {
        const Schedule s = default_schedule(2 * dim, 3 * dim, 4 * dim, cfg);
        CHECK(s.tile_i == 2);
        CHECK(s.tile_k == 3);
        CHECK(s.tile_j == 4);
        CHECK(s.loop_order == 0);
        CHECK(!s.double_buffer);
    }

    SUBCASE("large problems match the greedy enumeration") {
        const int64_t ext = 128;
        const Schedule got = default_schedule(ext * dim, ext * dim, ext * dim, cfg);
        // Oracle: scan every legal triple, lexicographic order (k, j, i).
        Schedule best;
        bool found = false;
        for (int tk = 1; tk <= ext; ++tk)
            for (int tj = 1; tj <= ext; ++tj)
                for (int ti = 1; ti <= ext; ++ti) {
                    Schedule s;
                    s.tile_i = ti;
                    s.tile_j = tj;
                    s.tile_k = tk;
                    if (!schedule_legal(s, cfg)) continue;
                    if (!found || std::tie(tk, tj, ti) > std::tie(best.tile_k, best.tile_j,
                                                                  best.tile_i)) {
                        best = s;
                        found = true;
                    }
                }
        REQUIRE(found);
        CHECK(got.tile_k == best.tile_k);
        CHECK(got.tile_j == best.tile_j);
        CHECK(got.tile_i == best.tile_i);
        CHECK(got.tile_k == 128);
        CHECK(got.tile_j == 3);
        CHECK(got.tile_i == 1);
    }

    SUBCASE("smaller memories never get larger tiles") {
        AcceleratorConfig small = cfg;
        small.spad_kib = 256;
        small.acc_kib = 64;
        const Schedule a = default_schedule(64 * dim, 64 * dim, 64 * dim, cfg);
        const Schedule b = default_schedule(64 * dim, 64 * dim, 64 * dim, small);
        CHECK(b.tile_i <= a.tile_i);
        CHECK(b.tile_j <= a.tile_j);
        CHECK(b.tile_k <= a.tile_k);
    }
}

TEST_CASE("no legal schedule for an impossibly small accelerator") {
    AcceleratorConfig tiny = ours();
    tiny.spad_kib = 1;
    tiny.spad_banks = 1;
    CHECK_THROWS_WITH_AS(default_schedule(64, 64, 64, tiny), doctest::Contains("no legal"),
                         ValidationError);
}

TEST_CASE("every legal schedule computes the same function") {
    auto [dram, desc] = stage_matmul(96, 96, 96, 77, true);
    const AcceleratorConfig cfg = ours();
    const Schedule def = default_schedule(desc.m, desc.k, desc.n, cfg);
    const auto want = run_lowered(desc, cfg, def, dram);

    std::vector<Schedule> variants;
    for (uint8_t lo = 0; lo < 6; ++lo) {
        Schedule s;  // one-tile blocks exercise every block boundary
        s.tile_i = 1;
        s.tile_j = 1;
        s.tile_k = 1;
        s.loop_order = lo;
        variants.push_back(s);
        s.double_buffer = true;
        variants.push_back(s);
    }
    Schedule mixed;
    mixed.tile_i = 2;
    mixed.tile_j = 3;
    mixed.tile_k = 2;
    mixed.loop_order = 5;  // k outermost: psum spill/reload path
    variants.push_back(mixed);

    for (const auto& s : variants) {
        CAPTURE(s.to_json());
        REQUIRE(schedule_legal(s, cfg));
        CHECK(run_lowered(desc, cfg, s, dram) == want);
    }
}

TEST_CASE("lowered streams stay within the declared scratchpad footprint") {
    auto [dram, desc] = stage_matmul(128, 128, 128, 5, false);
    const AcceleratorConfig cfg = ours();
    Schedule s;
    s.tile_i = 2;
    s.tile_j = 2;
    s.tile_k = 2;
    s.double_buffer = true;
    const auto stream = lower_tiled(desc, cfg, s);
    const int64_t fp_rows = (s.tile_i * s.tile_k + s.tile_k * s.tile_j) * cfg.dim;
    const int64_t half = cfg.spad_rows() / 2;
    for (const auto& ins : stream) {
        if (const auto* m = std::get_if<Mvin>(&ins)) {
            if (m->local.space != Space::Spad) continue;
            const int64_t base = m->local.row < half ? 0 : half;
            CHECK(m->local.row + m->rows <= base + fp_rows);
        }
    }
}

TEST_CASE("macro conv output equals the naive conv oracle") {
    fixtures::DetRand rng(303);
    for (int trial = 0; trial < 4; ++trial) {
        const int64_t h = 5 + trial * 3, w = 7 + trial * 2;
        const int64_t cin = 3 + trial * 17, cout = 5 + trial * 23;
        const int k = trial % 2 ? 3 : 1;
        const int stride = trial % 2 ? 2 : 1;
        const int8_t zp = static_cast<int8_t>(rng.uniform_int(-20, 20));

        TiledConv op;
        op.in_h = h;
        op.in_w = w;
        op.cin = cin;
        op.cout = cout;
        op.kh = k;
        op.kw = k;
        op.stride = stride;
        op.same_padding = true;
        op.pad_value = zp;
        op.input.resize(static_cast<size_t>(h) * w * cin);
        op.filter.resize(static_cast<size_t>(k) * k * cin * cout);
        for (auto& v : op.input) v = static_cast<int8_t>(rng.uniform_int(-128, 127));
        for (auto& v : op.filter) v = static_cast<int8_t>(rng.uniform_int(-128, 127));
        std::vector<int32_t> bias(static_cast<size_t>(cout));
        for (auto& v : bias) v = rng.uniform_int(-10000, 10000);
        op.bias = bias;
        op.requant = RequantSpec::make(0.001953125f, -3);

        const auto res = execute_macro(ours(), op);
        const auto want = oracle_conv(op.input, h, w, cin, op.filter, cout, k, k, stride, zp,
                                      bias, op.requant);
        REQUIRE(res.out.size() == want.size());
        CHECK(res.out == want);
    }
}

TEST_CASE("schedule json round-trip") {
    Schedule s;
    s.tile_i = 3;
    s.tile_j = 5;
    s.tile_k = 7;
    s.loop_order = 4;
    s.double_buffer = true;
    CHECK(Schedule::from_json(s.to_json()) == s);
    CHECK(loop_order_name(4) == "kij");
    CHECK(loop_order_from_name("jki") == 3);
    CHECK_THROWS_AS(loop_order_from_name("xyz"), ValidationError);
}

TEST_CASE("1x1 conv over a dim-square image lowers to a single-k-tile stream") {
    // Quantized 1x1 conv, Cin = Cout = dim, 32x32 spatial: M = 1024, K = 32,
    // N = 32 -> 32 M-tiles, one K-tile, one weight preload.
    Graph g;
    const int dim = 32;
    QuantParams qp = QuantParams::make(0.02f, -5);
    g.inputs.push_back({"in", TensorSpec{Shape4{{1, 32, 32, dim}}, DType::I8, qp}});
    Node n;
    n.id = "c";
    n.op = OpKind::Conv2D;
    n.inputs = {"in"};
    ConvAttrs a;
    a.kh = 1;
    a.kw = 1;
    a.stride = 1;
    a.has_bias = true;
    n.attrs = a;
    n.output = TensorSpec{Shape4{{1, 32, 32, dim}}, DType::I8, qp};
    n.requant = RequantSpec::make(0.5f, 0);
    n.weight_ref = WeightRef{0, dim * dim + dim * 4ull};
    g.weights.assign(dim * dim + dim * 4, 1);
    g.nodes.push_back(n);
    g.outputs = {"c"};
    g.validate();

    const NodeLowering low = lower_conv(g, g.node("c"), ours());
    CHECK(low.m == 1024);
    CHECK(low.k == 32);
    CHECK(low.n == 32);
    int preloads = 0, computes = 0;
    for (const auto& ins : low.stream) {
        preloads += std::holds_alternative<Preload>(ins);
        computes += std::holds_alternative<Compute>(ins);
    }
    CHECK(preloads == 1);    // single K-tile, single N-tile
    CHECK(computes == 32);   // ceil(1024/dim) M-tiles
}

TEST_CASE("dilated convs are rejected, with the feature flag spelled out") {
    Graph g;
    QuantParams qp = QuantParams::make(0.02f, 0);
    g.inputs.push_back({"in", TensorSpec{Shape4{{1, 8, 8, 4}}, DType::I8, qp}});
    Node n;
    n.id = "c";
    n.op = OpKind::Conv2D;
    n.inputs = {"in"};
    ConvAttrs a;
    a.kh = 3;
    a.kw = 3;
    a.stride = 1;
    a.dilation = 2;
    a.has_bias = true;
    n.attrs = a;
    n.output = TensorSpec{Shape4{{1, 8, 8, 4}}, DType::I8, qp};
    n.requant = RequantSpec::make(0.5f, 0);
    n.weight_ref = WeightRef{0, 3 * 3 * 4 * 4 + 4 * 4ull};
    g.weights.assign(3 * 3 * 4 * 4 + 4 * 4, 0);
    g.nodes.push_back(n);
    g.outputs = {"c"};
    g.validate();

    AcceleratorConfig cfg = ours();
    CHECK_THROWS_WITH_AS(lower_conv(g, g.node("c"), cfg), doctest::Contains("not lowerable"),
                         gemflow::ValidationError);
    cfg.disabled.insert(Feature::KernelDilation);
    CHECK_THROWS_WITH_AS(lower_conv(g, g.node("c"), cfg), doctest::Contains("disabled"),
                         gemflow::ValidationError);
}
