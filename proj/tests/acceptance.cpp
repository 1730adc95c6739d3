// Acceptance suite: every release criterion with its tolerance pinned, one
// pass/fail line each. Exits nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gemflow/accel/macro.hpp"
#include "gemflow/dsp_pack.hpp"
#include "gemflow/fixtures.hpp"
#include "gemflow/model_io.hpp"
#include "gemflow/pipeline.hpp"
#include "gemflow/prune.hpp"
#include "gemflow/quantize.hpp"
#include "gemflow/runtime.hpp"
#include "gemflow/transforms.hpp"

using namespace gemflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

Graph quantize_fixture(Graph g, uint64_t seed, int samples = 1) {
    g = replace_activations(g);
    std::vector<TensorMap> s;
    for (int i = 0; i < samples; ++i) s.push_back(synth_input(g, seed + i));
    return quantize_graph(g, calibrate(g, s));
}

// ---------------------------------------------------------------------------
// 1. DSP packing: packed_mac(pack(w1,w2), a) == (w1*a, w2*a) for all 2^24
//    triples, zero mismatches.
Outcome c1_dsp_exhaustive() {
    const double t0 = now_s();
    uint64_t mismatches = 0;
    for (int a = -128; a <= 127; ++a) {
        for (int w1 = -128; w1 <= 127; ++w1) {
            const dsp::PackedPair base = dsp::pack(static_cast<int8_t>(w1), 0);
            for (int w2 = -128; w2 <= 127; ++w2) {
                const dsp::PackedPair pp{base.p + w2};
                const auto [p1, p2] = dsp::packed_mac(pp, static_cast<int8_t>(a));
                if (p1 != w1 * a || p2 != w2 * a) ++mismatches;
            }
        }
    }
    const double dt = now_s() - t0;
    Outcome o;
    o.pass = mismatches == 0 && dt < 60.0;
    o.detail = fmt("2^24 triples, %llu mismatches, %.2fs (limit 60s)",
                   (unsigned long long)mismatches, dt);
    return o;
}

// ---------------------------------------------------------------------------
// 2. Conv oracle equivalence: 100 randomized conv layers, accelerator output
//    bit-identical to the naive i32 conv + requantize oracle.
Outcome c2_conv_oracle() {
    fixtures::DetRand rng(20240229);
    int failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int k = rng.uniform_int(0, 1) ? 3 : 1;
        const int stride = rng.uniform_int(0, 1) ? 2 : 1;
        const int64_t h = rng.uniform_int(k, 32), w = rng.uniform_int(k, 32);
        const int64_t cin = rng.uniform_int(1, 128), cout = rng.uniform_int(1, 128);
        const int8_t zp = static_cast<int8_t>(rng.uniform_int(-32, 32));

        accel::TiledConv op;
        op.in_h = h;
        op.in_w = w;
        op.cin = cin;
        op.cout = cout;
        op.kh = k;
        op.kw = k;
        op.stride = stride;
        op.same_padding = rng.uniform_int(0, 3) != 0;  // mostly same, some valid
        op.pad_value = zp;
        op.input.resize(static_cast<size_t>(h * w * cin));
        op.filter.resize(static_cast<size_t>(k) * k * cin * cout);
        for (auto& v : op.input) v = static_cast<int8_t>(rng.uniform_int(-128, 127));
        for (auto& v : op.filter) v = static_cast<int8_t>(rng.uniform_int(-128, 127));
        std::vector<int32_t> bias(static_cast<size_t>(cout));
        for (auto& v : bias) v = rng.uniform_int(-30000, 30000);
        op.bias = bias;
        op.requant =
            RequantSpec::make(std::exp2(static_cast<float>(rng.uniform_int(-11, -6))),
                              rng.uniform_int(-16, 16));

        const auto res = execute_macro(accel::AcceleratorConfig::ours(), op);

        // Independent oracle: direct i32 convolution + shared requantize.
        const Padding pad = op.same_padding ? Padding::Same : Padding::Valid;
        const auto sh = conv_spatial(h, k, stride, pad);
        const auto sw = conv_spatial(w, k, stride, pad);
        bool ok = res.out_rows == sh.out * sw.out && res.out_cols == cout;
        for (int64_t oy = 0; ok && oy < sh.out; ++oy)
            for (int64_t ox = 0; ok && ox < sw.out; ++ox)
                for (int64_t co = 0; ok && co < cout; ++co) {
                    int32_t acc = bias[static_cast<size_t>(co)];
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            for (int64_t ci = 0; ci < cin; ++ci) {
                                const int64_t iy = oy * stride - sh.pad_begin + ky;
                                const int64_t ix = ox * stride - sw.pad_begin + kx;
                                const int32_t x = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                                      ? op.input[(iy * w + ix) * cin + ci]
                                                      : zp;
                                acc += x * op.filter[((ky * k + kx) * cin + ci) * cout + co];
                            }
                    if (res.out[(oy * sw.out + ox) * cout + co] != requantize(acc, op.requant))
                        ok = false;
                }
        if (!ok) ++failures;
    }
    Outcome o;
    o.pass = failures == 0;
    o.detail = fmt("100 random conv layers, %d mismatching", failures);
    return o;
}

// ---------------------------------------------------------------------------
// 3. Input-size analysis: conv-only GOP(480)/GOP(640) exactly 0.5625; the toy
//    detector with post-processing within [0.55, 0.60].
Outcome c3_input_size() {
    const Graph conv = load_model("models/conv_only.json");
    const int64_t g640 = count_gop(conv).total_ops();
    const int64_t g480 = count_gop(rescale_input(conv, 480, 480)).total_ops();
    const double ratio = static_cast<double>(g480) / static_cast<double>(g640);

    const Graph toy = load_model("models/toydet.json");
    const int64_t t64 = count_gop(toy).total_ops();
    const int64_t t48 = count_gop(rescale_input(toy, 48, 48)).total_ops();
    const double tratio = static_cast<double>(t48) / static_cast<double>(t64);

    Outcome o;
    o.pass = ratio == 0.5625 && tratio >= 0.55 && tratio <= 0.60;
    o.detail = fmt("conv-only ratio %.10f (need exactly 0.5625), toy ratio %.4f in [0.55,0.60]",
                   ratio, tratio);
    return o;
}

// ---------------------------------------------------------------------------
// 4. GOP cross-check: the 58-conv detector at 480x480 counts 7.78 GOP +-10%.
Outcome c4_gop_crosscheck() {
    const Graph tiny = fixtures::make_tiny58(480);
    const double gop = count_gop(tiny).total_gop();
    Outcome o;
    o.pass = gop >= 7.78 * 0.9 && gop <= 7.78 * 1.1;
    o.detail = fmt("%.3f GOP/inference (band [%.2f, %.2f])", gop, 7.78 * 0.9, 7.78 * 1.1);
    return o;
}

// ---------------------------------------------------------------------------
// 5. Tuning fallback: on the 58-conv network every layer has
//    cycles_best <= cycles_default, and at least 30% strictly improve.
Outcome c5_tuning_fallback() {
    const Graph q = quantize_fixture(fixtures::make_tiny58(160, 4), 42);
    const GraphTuneResult r = tune_graph(q, accel::AcceleratorConfig::ours(), 24, 7, 4);
    bool fallback_ok = true;
    for (const auto& [id, choice] : r.table)
        if (choice.cycles_best > choice.cycles_default) fallback_ok = false;
    Outcome o;
    o.pass = fallback_ok && r.summary.layers == 58 && r.summary.improved_fraction >= 0.30;
    o.detail = fmt("%lld layers, every delta >= 0: %s, %.1f%% strictly improved (need >= 30%%)",
                   (long long)r.summary.layers, fallback_ok ? "yes" : "NO",
                   r.summary.improved_fraction * 100.0);
    return o;
}

// ---------------------------------------------------------------------------
// 6. Config scaling: toy-detector cycles under the ours preset are strictly
//    lower than under the baseline preset.
Outcome c6_config_scaling() {
    const Graph q = quantize_fixture(fixtures::make_toy_detector(64), 5, 2);
    const TensorMap in = synth_input(q, 1234);
    const auto ours = run_end_to_end(q, accel::AcceleratorConfig::ours(), {}, in);
    const auto base = run_end_to_end(q, accel::AcceleratorConfig::baseline(), {}, in);
    Outcome o;
    o.pass = ours.report.accel_cycles < base.report.accel_cycles;
    o.detail = fmt("ours %llu cycles < baseline %llu cycles",
                   (unsigned long long)ours.report.accel_cycles,
                   (unsigned long long)base.report.accel_cycles);
    return o;
}

// ---------------------------------------------------------------------------
// 7. Partition recomposition: mixed-placement detections bit-identical to
//    monolithic functional execution on 20 random inputs; placement table
//    orders mixed <= min(only-host, only-accel) at zero transfer cost.
Outcome c7_recomposition() {
    const Graph q = quantize_fixture(fixtures::make_toy_detector(64), 9, 2);
    const accel::AcceleratorConfig cfg = accel::AcceleratorConfig::ours();
    int mismatched = 0;
    for (int i = 0; i < 20; ++i) {
        const TensorMap in = synth_input(q, 5000 + i);
        const EndToEndResult mixed = run_end_to_end(q, cfg, {}, in);
        const TensorMap ref = run_functional(q, in);
        std::vector<Detection> want;
        for (auto it = q.nodes.rbegin(); it != q.nodes.rend(); ++it)
            if (it->op == OpKind::Nms) {
                want = detections_from_tensor(ref.at(it->id));
                break;
            }
        bool same = want.size() == mixed.detections.size();
        for (size_t d = 0; same && d < want.size(); ++d) {
            const auto &a = mixed.detections[d], &b = want[d];
            same = std::memcmp(&a, &b, sizeof(Detection)) == 0;
        }
        if (!same) ++mismatched;
    }
    const auto rows = compare_placements(q, cfg, {}, synth_input(q, 77));
    const bool ordered =
        rows[2].total_ms <= rows[0].total_ms && rows[2].total_ms <= rows[1].total_ms;
    Outcome o;
    o.pass = mismatched == 0 && ordered;
    o.detail = fmt("20 inputs, %d detection mismatches; mixed %.3fms <= min(%.3f, %.3f)ms: %s",
                   mismatched, rows[2].total_ms, rows[0].total_ms, rows[1].total_ms,
                   ordered ? "yes" : "NO");
    return o;
}

// ---------------------------------------------------------------------------
// 8. Pruning accounting: the bundled plan reaches 88% +-1% parameter sparsity
//    on the 58-conv model with >= 65% GOP reduction, and the pruned graph
//    passes shape and execution audits.
Outcome c8_pruning() {
    const Graph tiny = fixtures::make_tiny58(640);
    const PruningPlan plan = PruningPlan::load("models/plan_88.json");
    auto [pruned, stats] = run_plan(tiny, plan);
    const double sparsity = stats.back().sparsity;
    const double gop_red =
        1.0 - static_cast<double>(stats.back().ops_after) / stats.back().ops_before;

    bool audits = true;
    std::string audit_msg = "audits ok";
    try {
        pruned.validate();
        const Graph small = rescale_input(pruned, 160, 160);  // cheap execution audit
        run_reference(small, synth_input(small, 555));
    } catch (const std::exception& e) {
        audits = false;
        audit_msg = std::string("audit failed: ") + e.what();
    }

    Outcome o;
    o.pass = sparsity >= 0.87 && sparsity <= 0.89 && gop_red >= 0.65 && audits;
    o.detail = fmt("sparsity %.4f (band [0.87,0.89]), GOP reduction %.4f (need >= 0.65), %s",
                   sparsity, gop_red, audit_msg.c_str());
    return o;
}

// ---------------------------------------------------------------------------
// 9. Determinism: two CLI pipeline runs with identical config and seed give
//    byte-identical artifact directories.
Outcome c9_determinism() {
    const fs::path dir = fs::temp_directory_path() / "gemflow_acceptance_det";
    fs::remove_all(dir);
    fs::create_directories(dir);
    save_model(fixtures::make_toy_detector(64), (dir / "toydet.json").string());

    const std::string out = (dir / "out").string();
    const std::string cmd = std::string(GEMFLOW_CLI_PATH) + " pipeline --model " +
                            (dir / "toydet.json").string() + " --out-dir " + out +
                            " --budget 6 --seed 21 --calib-samples 1 > /dev/null 2>&1";

    auto snapshot = [&] {
        std::map<std::string, std::string> files;
        for (const auto& e : fs::directory_iterator(out)) {
            std::ifstream f(e.path(), std::ios::binary);
            files[e.path().filename().string()] = std::string(
                (std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        }
        return files;
    };

    if (std::system(cmd.c_str()) != 0) return {false, "first CLI run failed"};
    const auto first = snapshot();
    fs::remove_all(out);
    if (std::system(cmd.c_str()) != 0) return {false, "second CLI run failed"};
    const auto second = snapshot();

    Outcome o;
    o.pass = !first.empty() && first == second;
    o.detail = fmt("%zu artifacts, byte-identical: %s", first.size(), o.pass ? "yes" : "NO");
    return o;
}

// ---------------------------------------------------------------------------
// 10. Requantization f16-vs-f32 bound: over 10^6 random (acc, scale) pairs
//     the outputs differ by at most 1 code and disagree on fewer than 1%.
Outcome c10_requant_bound() {
    fixtures::DetRand rng(616);
    const int trials = 1000000;
    int mismatches = 0;
    int max_diff = 0;
    for (int i = 0; i < trials; ++i) {
        const float scale = std::exp2(rng.uniform(-10.0f, -2.0f));
        const int32_t acc = rng.uniform_int(-1048576, 1048576);
        const RequantSpec spec = RequantSpec::make(scale, 0);
        const int32_t with_f16 = requantize(acc, spec);
        // f32 route: identical pipeline, unrounded multiplier.
        const double p = static_cast<double>(static_cast<float>(acc) * scale);
        double r = std::floor(p);
        const double frac = p - r;
        if (frac > 0.5 || (frac == 0.5 && std::fmod(r, 2.0) != 0.0)) r += 1.0;
        const int32_t with_f32 =
            static_cast<int32_t>(std::max(-128.0, std::min(127.0, r)));
        const int diff = std::abs(with_f16 - with_f32);
        max_diff = std::max(max_diff, diff);
        mismatches += diff != 0;
    }
    Outcome o;
    const double rate = static_cast<double>(mismatches) / trials;
    o.pass = max_diff <= 1 && rate < 0.01;
    o.detail = fmt("10^6 pairs: max diff %d (need <= 1), mismatch rate %.4f%% (need < 1%%)",
                   max_diff, rate * 100.0);
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        Outcome (*fn)();
    };
    const Criterion criteria[] = {
        {"dsp-packing-exhaustive", c1_dsp_exhaustive},
        {"conv-oracle-equivalence", c2_conv_oracle},
        {"input-size-analysis", c3_input_size},
        {"gop-cross-check", c4_gop_crosscheck},
        {"tuning-fallback", c5_tuning_fallback},
        {"config-scaling", c6_config_scaling},
        {"partition-recomposition", c7_recomposition},
        {"pruning-accounting", c8_pruning},
        {"pipeline-determinism", c9_determinism},
        {"requant-f16-bound", c10_requant_bound},
    };

    // Run from the source tree so the bundled models resolve.
    std::error_code ec;
    fs::current_path(GEMFLOW_SOURCE_DIR, ec);

    int failed = 0;
    const int total = static_cast<int>(std::size(criteria));
    for (int i = 0; i < total; ++i) {
        const double t0 = now_s();
        Outcome o;
        try {
            o = criteria[i].fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double dt = now_s() - t0;
        std::printf("[%2d/%d] %-26s %s  (%s) [%.2fs]\n", i + 1, total, criteria[i].name,
                    o.pass ? "PASS" : "FAIL", o.detail.c_str(), dt);
        std::fflush(stdout);
        failed += !o.pass;
    }
    if (failed) std::printf("%d/%d acceptance criteria FAILED\n", failed, total);
    else std::printf("all %d acceptance criteria passed\n", total);
    return failed == 0 ? 0 : 1;
}
