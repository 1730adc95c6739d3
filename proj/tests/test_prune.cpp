#include <doctest.h>

#include <cstring>
#include <set>

#include "gemflow/fixtures.hpp"
#include "gemflow/prune.hpp"
#include "gemflow/reference.hpp"

using namespace gemflow;

namespace {

// conv_a, conv_b -> Add -> conv_c (all 1x1), for the add-aliasing cases.
Graph add_tied_graph(const std::vector<float>& wa, const std::vector<float>& wb,
                     int64_t channels) {
    Graph g;
    g.inputs.push_back({"input", TensorSpec{Shape4{{1, 2, 2, 2}}, DType::F32, std::nullopt}});
    auto mk_conv = [&](const std::string& id, const std::string& in, int64_t cin, int64_t cout,
                       const std::vector<float>& w) {
        Node n;
        n.id = id;
        n.op = OpKind::Conv2D;
        n.inputs = {in};
        ConvAttrs a;
        a.kh = 1;
        a.kw = 1;
        a.stride = 1;
        a.has_bias = false;
        n.attrs = a;
        n.output.dtype = DType::F32;
        n.output.shape = Shape4{{1, 2, 2, cout}};
        REQUIRE(w.size() == static_cast<size_t>(cin * cout));
        n.weight_ref = WeightRef{g.weights.size(), w.size() * 4};
        const size_t off = g.weights.size();
        g.weights.resize(off + w.size() * 4);
        std::memcpy(g.weights.data() + off, w.data(), w.size() * 4);
        g.nodes.push_back(n);
    };
    mk_conv("conv_a", "input", 2, channels, wa);
    mk_conv("conv_b", "input", 2, channels, wb);
    Node add;
    add.id = "sum";
    add.op = OpKind::Add;
    add.inputs = {"conv_a", "conv_b"};
    add.attrs = AddAttrs{};
    add.output.dtype = DType::F32;
    add.output.shape = Shape4{{1, 2, 2, channels}};
    g.nodes.push_back(add);
    std::vector<float> wc(static_cast<size_t>(channels), 1.0f);
    mk_conv("conv_c", "sum", channels, 1, wc);
    g.outputs = {"conv_c"};
    g.validate();
    return g;
}

}  // namespace

TEST_CASE("connectivity groups in the toy detector") {
    const Graph g = fixtures::make_toy_detector(64);
    const auto groups = build_connectivity(g);

    std::map<std::string, const ConnectivityGroup*> by_id;
    for (const auto& grp : groups) by_id[grp.id] = &grp;
    REQUIRE(by_id.count("conv2a"));
    REQUIRE(by_id.count("conv2b"));

    // cat1 = concat(conv2a, conv2b); conv3 consumes it through the pool.
    auto consumer_offset = [&](const ConnectivityGroup& grp, const std::string& node) {
        for (const auto& c : grp.consumers)
            if (c.node_id == node) return c.channel_offset;
        return int64_t{-1};
    };
    CHECK(consumer_offset(*by_id.at("conv2a"), "conv3") == 0);
    CHECK(consumer_offset(*by_id.at("conv2b"), "conv3") == 32);

    // cat2 = concat(up1(conv3), cat1): head reads conv3@0, conv2a@64, conv2b@96.
    CHECK(consumer_offset(*by_id.at("conv3"), "head") == 0);
    CHECK(consumer_offset(*by_id.at("conv2a"), "head") == 64);
    CHECK(consumer_offset(*by_id.at("conv2b"), "head") == 96);

    // Single chain: conv0 feeds conv1 at offset 0.
    CHECK(consumer_offset(*by_id.at("conv0"), "conv1") == 0);

    // The head feeds box decoding: frozen.
    CHECK(!by_id.at("head")->prunable);
    CHECK(by_id.at("conv0")->prunable);
}

TEST_CASE("add ties its producers into one group") {
    std::vector<float> wa(2 * 4), wb(2 * 4);
    for (size_t i = 0; i < wa.size(); ++i) {
        wa[i] = 0.1f * static_cast<float>(i + 1);
        wb[i] = 0.05f * static_cast<float>(i + 1);
    }
    const Graph g = add_tied_graph(wa, wb, 4);
    const auto groups = build_connectivity(g);
    const ConnectivityGroup* tied = nullptr;
    for (const auto& grp : groups)
        if (grp.members.size() == 2) tied = &grp;
    REQUIRE(tied);
    CHECK(tied->members == std::vector<std::string>{"conv_a", "conv_b"});
    CHECK(tied->channels == 4);
}

TEST_CASE("prune_step removes the lowest-L1 channels everywhere") {
    // Weight layout [1,1,Cin=2,Cout=4]: channel c column. L1(a,c) + L1(b,c)
    // ranks channels; make channels 1 and 2 the weakest.
    //           c0   c1    c2    c3
    std::vector<float> wa = {0.9f, 0.01f, 0.02f, 0.8f,   // ci=0
                             0.9f, 0.01f, 0.02f, 0.8f};  // ci=1
    std::vector<float> wb = wa;
    const Graph g = add_tied_graph(wa, wb, 4);
    const auto groups = build_connectivity(g);

    std::string tied_id;
    for (const auto& grp : groups)
        if (grp.members.size() == 2) tied_id = grp.id;
    REQUIRE(!tied_id.empty());

    auto [pruned, stats] = prune_step(g, groups, {tied_id}, 0.5);
    CHECK(pruned.node("conv_a").output.shape.c() == 2);
    CHECK(pruned.node("conv_b").output.shape.c() == 2);
    CHECK(pruned.tensor("sum").shape.c() == 2);
    // conv_c input channels shrank identically.
    CHECK(conv_filter_elems(pruned.node("conv_c"), pruned) == 2);
    // The surviving channels are the strong ones (c0 and c3).
    const auto w = pruned.conv_filter_f32(pruned.node("conv_a"));
    CHECK(w[0] == 0.9f);
    CHECK(w[1] == 0.8f);
    CHECK(stats.params_after < stats.params_before);

    // Both parts still execute.
    TensorMap in;
    Tensor t = Tensor::zeros(pruned.inputs[0].spec);
    for (auto& v : t.f) v = 0.25f;
    in.emplace("input", std::move(t));
    CHECK_NOTHROW(run_reference(pruned, in));
}

TEST_CASE("concat consumers lose the right input slices") {
    const Graph g = fixtures::make_toy_detector(64);
    const auto groups = build_connectivity(g);
    // Prune a quarter of conv2b (32 -> 24): conv3 should read 64-8 = 56
    // channels, and the head 128-8 = 120.
    auto [pruned, stats] = prune_step(g, groups, {"conv2b"}, 0.25);
    CHECK(pruned.node("conv2b").output.shape.c() == 24);
    CHECK(pruned.tensor("cat1").shape.c() == 56);
    CHECK(pruned.tensor("cat2").shape.c() == 120);
    const Node& conv3 = pruned.node("conv3");
    CHECK(conv_filter_elems(conv3, pruned) == 3 * 3 * 56 * 64);
    pruned.validate();

    // Analytic parameter accounting matches the direct summation.
    int64_t direct = 0;
    for (const auto& n : pruned.nodes) {
        if (n.op != OpKind::Conv2D) continue;
        direct += conv_filter_elems(n, pruned);
        if (n.conv().has_bias) direct += n.output.shape.c();
    }
    CHECK(stats.params_after == direct);
    CHECK(stats.params_after == count_params(pruned));
}

TEST_CASE("pruning zero-weight channels leaves execution bit-identical") {
    Graph g = fixtures::make_toy_detector(64);
    // Zero out filters AND the bias of four conv1 output channels; their
    // outputs become exactly 0 after leaky_relu, so removal cannot change
    // downstream math.
    {
        Node& conv1 = g.node("conv1");
        const int64_t cout = conv1.output.shape.c();
        const int64_t kelems = conv_filter_elems(conv1, g);
        auto bytes = g.weights.data() + conv1.weight_ref->offset;
        float* w = reinterpret_cast<float*>(bytes);
        float* b = reinterpret_cast<float*>(bytes + kelems * 4);
        for (int64_t i = 0; i < kelems / cout; ++i)
            for (int64_t c : {3, 7, 11, 19}) w[i * cout + c] = 0.0f;
        for (int64_t c : {3, 7, 11, 19}) b[c] = 0.0f;
    }
    TensorMap in;
    fixtures::DetRand rng(1);
    Tensor t = Tensor::zeros(g.inputs[0].spec);
    for (auto& v : t.f) v = rng.uniform(-1.0f, 1.0f);
    in.emplace("input", t);
    const TensorMap before = run_reference(g, in);

    const auto groups = build_connectivity(g);
    auto [pruned, stats] = prune_step(g, groups, {"conv1"}, 4.0 / 32.0 + 1e-9);
    CHECK(pruned.node("conv1").output.shape.c() == 28);
    const TensorMap after = run_reference(pruned, in);
    CHECK(after.at("dets").f == before.at("dets").f);   // detections identical
    CHECK(after.at("head").f == before.at("head").f);   // even pre-NMS
}

TEST_CASE("prune_step error paths") {
    const Graph g = fixtures::make_toy_detector(64);
    const auto groups = build_connectivity(g);
    CHECK_THROWS_WITH_AS(prune_step(g, groups, {"nope"}, 0.5), doctest::Contains("unknown"),
                         ValidationError);
    CHECK_THROWS_AS(prune_step(g, groups, {"conv0"}, 0.0), ValidationError);
    CHECK_THROWS_AS(prune_step(g, groups, {"conv0"}, 1.0), ValidationError);
    CHECK_THROWS_WITH_AS(prune_step(g, groups, {"head"}, 0.5), doctest::Contains("fixed-width"),
                         ValidationError);
}

TEST_CASE("run_plan applies iterations cumulatively") {
    const Graph g = fixtures::make_toy_detector(64);

    SUBCASE("empty plan is the identity") {
        PruningPlan plan;
        auto [out, stats] = run_plan(g, plan);
        CHECK(stats.empty());
        CHECK(count_params(out) == count_params(g));
    }

    SUBCASE("two uniform iterations compound") {
        PruningPlan plan;
        plan.iterations.push_back({{}, 0.25});
        plan.iterations.push_back({{}, 0.25});
        auto [out, stats] = run_plan(g, plan);
        REQUIRE(stats.size() == 2);
        CHECK(stats[0].sparsity > 0.2);
        CHECK(stats[1].sparsity > stats[0].sparsity);
        CHECK(stats[1].params_before == count_params(g));  // cumulative base
        out.validate();

        // The stats CSV has the expected columns.
        const std::string csv = pruning_stats_csv(stats);
        CHECK(csv.rfind("iteration,sparsity,gop\n", 0) == 0);
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    }

    SUBCASE("plans serialize") {
        PruningPlan plan;
        plan.iterations.push_back({{"conv0", "conv1"}, 0.125});
        const PruningPlan back = PruningPlan::from_json(plan.to_json());
        REQUIRE(back.iterations.size() == 1);
        CHECK(back.iterations[0].groups == plan.iterations[0].groups);
        CHECK(back.iterations[0].rate == doctest::Approx(0.125));
    }
}

TEST_CASE("the bundled 40% plan lands in its sparsity band") {
    const Graph tiny = fixtures::make_tiny58(640);
    const PruningPlan plan =
        PruningPlan::load(std::string(GEMFLOW_SOURCE_DIR) + "/models/plan_40.json");
    auto [pruned, stats] = run_plan(tiny, plan);
    CHECK(stats.back().sparsity >= 0.39);
    CHECK(stats.back().sparsity <= 0.41);
    pruned.validate();
}
