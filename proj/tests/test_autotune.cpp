#include <doctest.h>

#include "gemflow/autotune.hpp"
#include "gemflow/fixtures.hpp"
#include "gemflow/quantize.hpp"
#include "gemflow/transforms.hpp"

using namespace gemflow;
using accel::AcceleratorConfig;

namespace {

Graph quantized_toy(uint64_t seed = 7) {
    Graph g = replace_activations(fixtures::make_toy_detector(64, seed));
    std::vector<TensorMap> samples;
    TensorMap m;
    fixtures::DetRand rng(500);
    Tensor t = Tensor::zeros(g.inputs[0].spec);
    for (auto& v : t.f) v = rng.uniform(-1.0f, 1.0f);
    m.emplace("input", std::move(t));
    samples.push_back(std::move(m));
    return quantize_graph(g, calibrate(g, samples));
}

}  // namespace

TEST_CASE("enumerate_space basics") {
    const AcceleratorConfig cfg = AcceleratorConfig::ours();

    SUBCASE("single-tile problems expose exactly the 12 order/buffer variants") {
        const auto space = enumerate_space(16, 16, 16, cfg, 1000, 1);
        CHECK(space.size() == 12);
        for (const auto& s : space) {
            CHECK(s.tile_i == 1);
            CHECK(s.tile_j == 1);
            CHECK(s.tile_k == 1);
        }
    }

    SUBCASE("budget 1 forces the default schedule") {
        const auto space = enumerate_space(4096, 4096, 4096, cfg, 1, 9);
        REQUIRE(space.size() == 1);
        CHECK(space[0] == default_schedule(4096, 4096, 4096, cfg));
    }

    SUBCASE("full space has no duplicates and includes the default") {
        const auto space = enumerate_space(128, 128, 128, cfg, 1u << 20, 3);
        std::set<std::string> seen;
        for (const auto& s : space) CHECK(seen.insert(s.to_json()).second);
        const Schedule def = default_schedule(128, 128, 128, cfg);
        CHECK(std::find(space.begin(), space.end(), def) != space.end());
        for (const auto& s : space) CHECK(schedule_legal(s, cfg));
    }

    SUBCASE("larger budgets extend smaller ones (prefix property)") {
        const auto small = enumerate_space(4096, 4096, 4096, cfg, 8, 42);
        const auto big = enumerate_space(4096, 4096, 4096, cfg, 16, 42);
        REQUIRE(small.size() == 8);
        REQUIRE(big.size() == 16);
        for (size_t i = 0; i < small.size(); ++i) CHECK(small[i] == big[i]);
        CHECK(small[0] == default_schedule(4096, 4096, 4096, cfg));
    }
}

TEST_CASE("tune_layer always honours the fallback rule") {
    const Graph q = quantized_toy();
    const AcceleratorConfig cfg = AcceleratorConfig::ours();
    for (const auto& n : q.nodes) {
        if (n.op != OpKind::Conv2D) continue;
        const LayerTuneResult r = tune_layer(q, n, cfg, 16, 5);
        CHECK(r.best.cycles_best <= r.best.cycles_default);
        if (r.best.source == BestChoice::Source::Default)
            CHECK(r.best.cycles_best == r.best.cycles_default);
        CHECK(!r.records.empty());
    }
}

TEST_CASE("tune_layer is deterministic and budget-monotone") {
    const Graph q = quantized_toy();
    const AcceleratorConfig cfg = AcceleratorConfig::ours();
    const Node* conv = nullptr;
    for (const auto& n : q.nodes)
        if (n.op == OpKind::Conv2D) conv = &n;
    REQUIRE(conv);

    const auto a = tune_layer(q, *conv, cfg, 12, 77);
    const auto b = tune_layer(q, *conv, cfg, 12, 77);
    CHECK(a.best.schedule == b.best.schedule);
    CHECK(a.best.cycles_best == b.best.cycles_best);
    CHECK(records_to_jsonl(a.records) == records_to_jsonl(b.records));

    const auto wide = tune_layer(q, *conv, cfg, 24, 77);
    CHECK(wide.best.cycles_best <= a.best.cycles_best);
}

TEST_CASE("tune_graph caches identical layers and summarizes improvements") {
    const Graph q = quantized_toy();
    const AcceleratorConfig cfg = AcceleratorConfig::ours();
    const GraphTuneResult r = tune_graph(q, cfg, 16, 11);

    int convs = 0;
    for (const auto& n : q.nodes) convs += n.op == OpKind::Conv2D;
    CHECK(r.summary.layers == convs);
    CHECK(r.table.size() == static_cast<size_t>(convs));
    for (const auto& [id, choice] : r.table)
        CHECK(choice.cycles_best <= choice.cycles_default);

    // conv2a (1x1, 32ch @16x16) and conv4? none identical in the toy; check
    // the cache through a graph with two equal convs instead.
    Graph g2 = replace_activations(fixtures::make_toy_detector(64));
    // conv2a and conv2b have different kernels; build equality via tiny58's
    // repeated ELAN stems is overkill here. Instead: same fingerprint -> one
    // record group per unique fingerprint.
    std::set<std::string> fps;
    for (const auto& rec : r.records) fps.insert(rec.fingerprint);
    std::set<std::string> layer_fps;
    for (const auto& n : q.nodes)
        if (n.op == OpKind::Conv2D) layer_fps.insert(fingerprint_layer(q, n, cfg));
    CHECK(fps == layer_fps);
}

TEST_CASE("records replay to an identical schedule table") {
    const Graph q = quantized_toy();
    const AcceleratorConfig cfg = AcceleratorConfig::ours();
    const GraphTuneResult r = tune_graph(q, cfg, 12, 3);

    const auto parsed = records_from_jsonl(records_to_jsonl(r.records));
    REQUIRE(parsed.size() == r.records.size());
    const auto table = replay_records(q, cfg, parsed);
    REQUIRE(table.size() == r.table.size());
    for (const auto& [id, choice] : r.table) {
        const auto& replayed = table.at(id);
        CHECK(replayed.schedule == choice.schedule);
        CHECK(replayed.cycles_best == choice.cycles_best);
        CHECK(replayed.cycles_default == choice.cycles_default);
        CHECK((replayed.source == choice.source));
    }
}

TEST_CASE("parallel tuning matches single-threaded results") {
    const Graph q = quantized_toy();
    const AcceleratorConfig cfg = AcceleratorConfig::ours();
    const GraphTuneResult serial = tune_graph(q, cfg, 12, 9, 1);
    const GraphTuneResult parallel = tune_graph(q, cfg, 12, 9, 4);
    CHECK(records_to_jsonl(serial.records) == records_to_jsonl(parallel.records));
    for (const auto& [id, choice] : serial.table) {
        CHECK(parallel.table.at(id).schedule == choice.schedule);
        CHECK(parallel.table.at(id).cycles_best == choice.cycles_best);
    }
}

TEST_CASE("equal-cycle candidates resolve to the lexicographically smaller schedule") {
    const Graph q = quantized_toy();
    const accel::AcceleratorConfig cfg = accel::AcceleratorConfig::ours();
    const Node* conv = nullptr;
    for (const auto& n : q.nodes)
        if (n.op == OpKind::Conv2D) {
            conv = &n;
            break;
        }
    REQUIRE(conv);
    const std::string fp = fingerprint_layer(q, *conv, cfg);

    Schedule small, large;
    small.tile_i = 1;
    large.tile_i = 2;
    std::vector<TuningRecord> records;
    TuningRecord def;
    def.fingerprint = fp;
    def.schedule = large;
    def.cycles = 100;
    def.is_default = true;
    records.push_back(def);
    TuningRecord tied;
    tied.fingerprint = fp;
    tied.schedule = small;
    tied.cycles = 90;
    records.push_back(tied);
    TuningRecord tied2;
    tied2.fingerprint = fp;
    tied2.schedule = large;
    tied2.schedule.tile_j = 9;
    tied2.cycles = 90;
    records.push_back(tied2);
    // Cover the other conv layers so replay resolves the whole graph.
    for (const auto& n : q.nodes) {
        if (n.op != OpKind::Conv2D || &n == conv) continue;
        TuningRecord r;
        r.fingerprint = fingerprint_layer(q, n, cfg);
        r.schedule = large;
        r.cycles = 50;
        r.is_default = true;
        records.push_back(r);
    }
    const auto table = replay_records(q, cfg, records);
    CHECK(table.at(conv->id).cycles_best == 90);
    CHECK(table.at(conv->id).schedule == small);  // lex tie-break
}

TEST_CASE("the toy model finds genuinely better-than-default schedules") {
    const Graph q = quantized_toy();
    const GraphTuneResult r = tune_graph(q, accel::AcceleratorConfig::ours(), 24, 2);
    int tuned = 0;
    for (const auto& [id, c] : r.table) tuned += c.source == BestChoice::Source::Tuned;
    CHECK(tuned >= 1);
    CHECK(r.summary.improved == tuned);
}
