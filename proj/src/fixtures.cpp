#include "gemflow/fixtures.hpp"

#include <cmath>
#include <cstring>

namespace gemflow::fixtures {

uint64_t DetRand::next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

float DetRand::next_float() {
    return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
}

float DetRand::uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

int32_t DetRand::uniform_int(int32_t lo, int32_t hi) {
    const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int32_t>(next_u64() % span);
}

namespace {

// Incremental graph construction with generated weights.
class Builder {
  public:
    Builder(int64_t input_hw, int64_t input_c, uint64_t seed) : rng_(seed) {
        g_.inputs.push_back({"input", TensorSpec{Shape4{{1, input_hw, input_hw, input_c}},
                                                 DType::F32, std::nullopt}});
    }

    std::string conv(const std::string& id, const std::string& in, int64_t cout, int k,
                     int stride, Activation act = Activation::LeakyRelu,
                     Padding pad = Padding::Same) {
        Node n;
        n.id = id;
        n.op = OpKind::Conv2D;
        n.inputs = {in};
        ConvAttrs a;
        a.kh = k;
        a.kw = k;
        a.stride = stride;
        a.padding = pad;
        a.has_bias = true;
        a.activation = act;
        a.leaky_alpha = 0.1f;
        n.attrs = a;
        const Shape4 in_shape = g_.tensor(in).shape;
        n.output.dtype = DType::F32;
        n.output.shape.d[3] = cout;
        n.output.shape = infer_output_shape(n, {in_shape});
        n.output.shape.d[3] = cout;

        const int64_t cin = in_shape.c();
        const int64_t wcount = static_cast<int64_t>(k) * k * cin * cout;
        const float bound = std::sqrt(2.0f / (static_cast<float>(k * k) * cin));
        std::vector<float> w(static_cast<size_t>(wcount + cout));
        for (int64_t i = 0; i < wcount; ++i) w[i] = rng_.uniform(-bound, bound);
        for (int64_t i = 0; i < cout; ++i) w[wcount + i] = rng_.uniform(-0.05f, 0.05f);
        n.weight_ref = append_blob(w);
        g_.nodes.push_back(std::move(n));
        return id;
    }

    std::string maxpool(const std::string& id, const std::string& in, int k, int s,
                        Padding pad = Padding::Valid) {
        Node n;
        n.id = id;
        n.op = OpKind::MaxPool2D;
        n.inputs = {in};
        n.attrs = PoolAttrs{k, s, pad};
        n.output.dtype = DType::F32;
        n.output.shape = infer_output_shape(n, {g_.tensor(in).shape});
        g_.nodes.push_back(std::move(n));
        return id;
    }

    std::string resize(const std::string& id, const std::string& in, int factor) {
        Node n;
        n.id = id;
        n.op = OpKind::ResizeNearest;
        n.inputs = {in};
        n.attrs = ResizeAttrs{factor};
        n.output.dtype = DType::F32;
        n.output.shape = infer_output_shape(n, {g_.tensor(in).shape});
        g_.nodes.push_back(std::move(n));
        return id;
    }

    std::string concat(const std::string& id, const std::vector<std::string>& ins) {
        Node n;
        n.id = id;
        n.op = OpKind::Concat;
        n.inputs = ins;
        n.attrs = ConcatAttrs{};
        n.output.dtype = DType::F32;
        std::vector<Shape4> shapes;
        for (const auto& i : ins) shapes.push_back(g_.tensor(i).shape);
        n.output.shape = infer_output_shape(n, shapes);
        g_.nodes.push_back(std::move(n));
        return id;
    }

    std::string add(const std::string& id, const std::string& a, const std::string& b) {
        Node n;
        n.id = id;
        n.op = OpKind::Add;
        n.inputs = {a, b};
        n.attrs = AddAttrs{};
        n.output.dtype = DType::F32;
        n.output.shape = infer_output_shape(n, {g_.tensor(a).shape, g_.tensor(b).shape});
        g_.nodes.push_back(std::move(n));
        return id;
    }

    std::string sigmoid(const std::string& id, const std::string& in) {
        Node n;
        n.id = id;
        n.op = OpKind::Sigmoid;
        n.inputs = {in};
        n.attrs = UnaryAttrs{};
        n.output.dtype = DType::F32;
        n.output.shape = g_.tensor(in).shape;
        g_.nodes.push_back(std::move(n));
        return id;
    }

    std::string box_decode(const std::string& id, const std::string& in, int stride,
                           std::vector<std::array<float, 2>> anchors) {
        Node n;
        n.id = id;
        n.op = OpKind::BoxDecode;
        n.inputs = {in};
        n.attrs = BoxDecodeAttrs{stride, std::move(anchors)};
        n.output.dtype = DType::F32;
        n.output.shape = infer_output_shape(n, {g_.tensor(in).shape});
        g_.nodes.push_back(std::move(n));
        return id;
    }

    std::string nms(const std::string& id, const std::vector<std::string>& ins, float iou,
                    float conf) {
        Node n;
        n.id = id;
        n.op = OpKind::Nms;
        n.inputs = ins;
        n.attrs = NmsAttrs{iou, conf};
        n.output.dtype = DType::F32;
        std::vector<Shape4> shapes;
        for (const auto& i : ins) shapes.push_back(g_.tensor(i).shape);
        n.output.shape = infer_output_shape(n, shapes);
        g_.nodes.push_back(std::move(n));
        return id;
    }

    Graph finish(std::vector<std::string> outputs) {
        g_.outputs = std::move(outputs);
        g_.validate();
        return std::move(g_);
    }

  private:
    WeightRef append_blob(const std::vector<float>& vals) {
        const uint64_t offset = g_.weights.size();
        const uint64_t length = vals.size() * 4;
        g_.weights.resize(offset + length);
        std::memcpy(g_.weights.data() + offset, vals.data(), length);
        return WeightRef{offset, length};
    }

    Graph g_;
    DetRand rng_;
};

}  // namespace

Graph make_toy_detector(int64_t input, uint64_t seed) {
    Builder b(input, 3, seed);
    b.conv("conv0", "input", 16, 3, 2);
    b.conv("conv1", "conv0", 32, 3, 2);
    b.conv("conv2a", "conv1", 32, 1, 1);
    b.conv("conv2b", "conv1", 32, 3, 1);
    b.concat("cat1", {"conv2a", "conv2b"});
    b.maxpool("pool1", "cat1", 2, 2);
    b.conv("conv3", "pool1", 64, 3, 1);
    b.resize("up1", "conv3", 2);
    b.concat("cat2", {"up1", "cat1"});
    // Head: 3 anchors * (5 + 4 classes) = 27 channels.
    b.conv("head", "cat2", 27, 1, 1, Activation::None);
    b.sigmoid("sig", "head");
    b.box_decode("boxes", "sig", 4, {{{8, 8}}, {{16, 16}}, {{32, 24}}});
    b.nms("dets", {"boxes"}, 0.45f, 0.25f);
    return b.finish({"dets"});
}

Graph make_conv_only(int64_t input, uint64_t seed) {
    Builder b(input, 3, seed);
    b.conv("c0", "input", 16, 3, 2);
    b.conv("c1", "c0", 32, 3, 2);
    b.conv("c2", "c1", 32, 3, 1);
    b.conv("c3", "c2", 64, 3, 2);
    b.conv("c4", "c3", 64, 3, 2);
    b.conv("c5", "c4", 96, 3, 2);
    return b.finish({"c5"});
}

namespace {

// ELAN-style block: two 1x1 stems, two chained 3x3 convs, concat of the four
// taps, 1x1 merge. Returns the merge id.
std::string elan(Builder& b, const std::string& prefix, const std::string& in, int64_t mid,
                 int64_t out) {
    const std::string x1 = b.conv(prefix + "_a", in, mid, 1, 1);
    const std::string x2 = b.conv(prefix + "_b", in, mid, 1, 1);
    const std::string x3 = b.conv(prefix + "_c", x2, mid, 3, 1);
    const std::string x4 = b.conv(prefix + "_d", x3, mid, 3, 1);
    b.concat(prefix + "_cat", {x4, x3, x2, x1});
    return b.conv(prefix + "_m", prefix + "_cat", out, 1, 1);
}

}  // namespace

Graph make_tiny58(int64_t input, int num_classes, uint64_t seed) {
    Builder b(input, 3, seed);
    const int64_t head_c = 3 * (5 + num_classes);

    b.conv("b0", "input", 32, 3, 2);
    b.conv("b1", "b0", 64, 3, 2);
    const std::string e1 = elan(b, "e1", "b1", 32, 64);
    b.maxpool("mp1", e1, 2, 2);
    const std::string e2 = elan(b, "e2", "mp1", 64, 128);   // P3 level
    b.maxpool("mp2", e2, 2, 2);
    const std::string e3 = elan(b, "e3", "mp2", 128, 256);  // P4 level
    b.maxpool("mp3", e3, 2, 2);
    const std::string e4 = elan(b, "e4", "mp3", 256, 512);  // P5 level

    // SPP neck: parallel same-padded pools on one branch.
    b.conv("spp_a", e4, 256, 1, 1);
    b.conv("spp_b", e4, 256, 1, 1);
    b.maxpool("spp_p5", "spp_b", 5, 1, Padding::Same);
    b.maxpool("spp_p9", "spp_b", 9, 1, Padding::Same);
    b.maxpool("spp_p13", "spp_b", 13, 1, Padding::Same);
    b.concat("spp_cat", {"spp_b", "spp_p5", "spp_p9", "spp_p13"});
    b.conv("spp_c", "spp_cat", 256, 1, 1);
    b.concat("spp_cat2", {"spp_c", "spp_a"});
    const std::string neck = b.conv("spp_m", "spp_cat2", 256, 1, 1);

    // Top-down path.
    b.conv("td1", neck, 128, 1, 1);
    b.resize("up1", "td1", 2);
    b.conv("lat1", e3, 128, 1, 1);
    b.concat("cat_p4", {"lat1", "up1"});
    const std::string e5 = elan(b, "e5", "cat_p4", 64, 128);
    b.conv("td2", e5, 64, 1, 1);
    b.resize("up2", "td2", 2);
    b.conv("lat2", e2, 64, 1, 1);
    b.concat("cat_p3", {"lat2", "up2"});
    const std::string e6 = elan(b, "e6", "cat_p3", 32, 64);

    // Bottom-up path.
    b.conv("bu1", e6, 128, 3, 2);
    b.concat("cat_n4", {"bu1", e5});
    const std::string e7 = elan(b, "e7", "cat_n4", 64, 128);
    b.conv("bu2", e7, 256, 3, 2);
    b.concat("cat_n5", {"bu2", neck});
    const std::string e8 = elan(b, "e8", "cat_n5", 128, 256);

    // Detection heads.
    b.conv("h1", e6, 128, 3, 1);
    b.conv("h2", e7, 256, 3, 1);
    b.conv("h3", e8, 512, 3, 1);
    b.conv("det1", "h1", head_c, 1, 1, Activation::None);
    b.conv("det2", "h2", head_c, 1, 1, Activation::None);
    b.conv("det3", "h3", head_c, 1, 1, Activation::None);

    b.sigmoid("sig1", "det1");
    b.sigmoid("sig2", "det2");
    b.sigmoid("sig3", "det3");
    b.box_decode("boxes1", "sig1", 8, {{{10, 13}}, {{16, 30}}, {{33, 23}}});
    b.box_decode("boxes2", "sig2", 16, {{{30, 61}}, {{62, 45}}, {{59, 119}}});
    b.box_decode("boxes3", "sig3", 32, {{{116, 90}}, {{156, 198}}, {{373, 326}}});
    b.nms("dets", {"boxes1", "boxes2", "boxes3"}, 0.45f, 0.25f);
    return b.finish({"dets"});
}

}  // namespace gemflow::fixtures
