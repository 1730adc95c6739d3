#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "gemflow/fixtures.hpp"
#include "gemflow/graph.hpp"
#include "gemflow/model_io.hpp"

using namespace gemflow;
namespace fs = std::filesystem;

namespace {

// Minimal one-conv model: 1x8x8x3 f32 -> Conv2D 3x3x3x4 (same) -> 1x8x8x4.
Graph tiny_conv_model() {
    Graph g;
    g.inputs.push_back({"input", TensorSpec{Shape4{{1, 8, 8, 3}}, DType::F32, std::nullopt}});
    Node n;
    n.id = "conv";
    n.op = OpKind::Conv2D;
    n.inputs = {"input"};
    ConvAttrs a;
    a.kh = 3;
    a.kw = 3;
    a.stride = 1;
    a.padding = Padding::Same;
    a.has_bias = true;
    a.activation = Activation::None;
    n.attrs = a;
    n.output = TensorSpec{Shape4{{1, 8, 8, 4}}, DType::F32, std::nullopt};
    const int64_t elems = 3 * 3 * 3 * 4 + 4;
    n.weight_ref = WeightRef{0, static_cast<uint64_t>(elems) * 4};
    g.weights.assign(static_cast<size_t>(elems) * 4, 0);
    g.nodes.push_back(n);
    g.outputs = {"conv"};
    return g;
}

}  // namespace

TEST_CASE("shape rules") {
    CHECK(conv_spatial(8, 3, 1, Padding::Same).out == 8);
    CHECK(conv_spatial(8, 3, 2, Padding::Same).out == 4);
    CHECK(conv_spatial(8, 3, 1, Padding::Valid).out == 6);
    CHECK(conv_spatial(8, 2, 2, Padding::Valid).out == 4);
    CHECK(conv_spatial(5, 5, 1, Padding::Same).pad_begin == 2);
    // Even-kernel same padding puts the extra row at the end.
    const auto s = conv_spatial(8, 2, 2, Padding::Same);
    CHECK(s.out == 4);
    CHECK(s.pad_begin == 0);
    CHECK(s.pad_end == 0);
}

TEST_CASE("minimal model validates and reports the expected output shape") {
    const Graph g = tiny_conv_model();
    g.validate();
    CHECK(g.tensor("conv").shape == Shape4{{1, 8, 8, 4}});
    CHECK(g.nodes.size() == 1);
}

TEST_CASE("concat doubles the channel dim") {
    const Graph g = fixtures::make_toy_detector();
    CHECK(g.tensor("cat1").shape.c() == 64);  // 32 + 32
    CHECK(g.tensor("cat2").shape.c() == 128);
}

TEST_CASE("blob size mismatch is rejected") {
    Graph g = tiny_conv_model();
    g.nodes[0].weight_ref->length += 4;
    CHECK_THROWS_WITH_AS(g.validate(), doctest::Contains("blob size mismatch"), ValidationError);

    Graph g2 = tiny_conv_model();
    g2.weights.resize(g2.weights.size() - 4);
    CHECK_THROWS_WITH_AS(g2.validate(), doctest::Contains("blob size mismatch"), ValidationError);
}

TEST_CASE("dangling references and duplicate ids are rejected") {
    Graph g = tiny_conv_model();
    g.nodes[0].inputs[0] = "nope";
    CHECK_THROWS_WITH_AS(g.validate(), doctest::Contains("dangling"), ValidationError);

    Graph g2 = fixtures::make_toy_detector();
    g2.nodes[1].id = "conv0";  // clashes with the first conv
    CHECK_THROWS_AS(g2.validate(), ValidationError);
}

TEST_CASE("stored shapes must satisfy the shape rule") {
    Graph g = tiny_conv_model();
    g.nodes[0].output.shape.d[1] = 9;
    CHECK_THROWS_WITH_AS(g.validate(), doctest::Contains("shape rule"), ValidationError);
}

TEST_CASE("save/load round-trip is exact") {
    const fs::path dir = fs::temp_directory_path() / "gemflow_graph_test";
    fs::create_directories(dir);
    const Graph g = fixtures::make_toy_detector();
    save_model(g, (dir / "toy.json").string());
    const Graph r = load_model((dir / "toy.json").string());

    REQUIRE(r.nodes.size() == g.nodes.size());
    CHECK(r.weights == g.weights);
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        CHECK(r.nodes[i].id == g.nodes[i].id);
        CHECK(r.nodes[i].op == g.nodes[i].op);
        CHECK(r.nodes[i].inputs == g.nodes[i].inputs);
        CHECK(r.nodes[i].output == g.nodes[i].output);
        CHECK(r.nodes[i].weight_ref == g.nodes[i].weight_ref);
        CHECK(r.nodes[i].attrs == g.nodes[i].attrs);
    }

    // Save the loaded graph again: the manifest bytes must be identical.
    save_model(r, (dir / "toy2.json").string(), "toy.bin");
    std::ifstream f1(dir / "toy.json"), f2(dir / "toy2.json");
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
}

TEST_CASE("decimal float strings round-trip exactly") {
    fixtures::DetRand rng(3);
    for (int i = 0; i < 10000; ++i) {
        const float v = rng.uniform(-1e6f, 1e6f) * rng.uniform(0.0f, 1.0f);
        CHECK(float_from_string(float_to_string(v)) == v);
    }
    CHECK_THROWS_AS(float_from_string("1.0x"), ValidationError);
}

TEST_CASE("fixture structure counts") {
    const Graph g = fixtures::make_tiny58();
    int convs = 0, pools = 0, resizes = 0, cats = 0;
    for (const auto& n : g.nodes) {
        convs += n.op == OpKind::Conv2D;
        pools += n.op == OpKind::MaxPool2D;
        resizes += n.op == OpKind::ResizeNearest;
        cats += n.op == OpKind::Concat;
    }
    CHECK(convs == 58);
    CHECK(pools == 6);
    CHECK(resizes == 2);
    CHECK(cats > 8);

    const Graph toy = fixtures::make_toy_detector();
    int tconvs = 0;
    for (const auto& n : toy.nodes) tconvs += n.op == OpKind::Conv2D;
    CHECK(tconvs == 6);
}
