#include "gemflow/prune.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "gemflow/model_io.hpp"
#include "gemflow/transforms.hpp"

namespace gemflow {

using nlohmann::json;

namespace {

// Each tensor's channel space is a concatenation of whole conv outputs (or
// the graph input). Segments carry the producing conv id.
struct Segment {
    std::string source;  // conv node id, or "@input" sentinel
    int64_t channels;
};

struct UnionFind {
    std::unordered_map<std::string, std::string> parent;
    const std::string& find(const std::string& x) {
        auto it = parent.find(x);
        if (it == parent.end()) {
            parent[x] = x;
            return parent.find(x)->first;
        }
        if (it->second == x) return it->second;
        const std::string root = find(it->second);
        parent[x] = root;
        return parent.find(x)->second;
    }
    void merge(const std::string& a, const std::string& b) {
        const std::string ra = find(a), rb = find(b);
        if (ra != rb) parent[ra] = rb;
    }
};

std::unordered_map<std::string, std::vector<Segment>> tensor_segments(const Graph& g,
                                                                      UnionFind& uf) {
    std::unordered_map<std::string, std::vector<Segment>> segs;
    for (const auto& gi : g.inputs) segs[gi.id] = {{"@input", gi.spec.shape.c()}};
    for (const auto& n : g.nodes) {
        switch (n.op) {
            case OpKind::Conv2D:
                segs[n.id] = {{n.id, n.output.shape.c()}};
                break;
            case OpKind::MaxPool2D:
            case OpKind::ResizeNearest:
            case OpKind::Sigmoid:
            case OpKind::Quantize:
            case OpKind::Dequantize:
                segs[n.id] = segs.at(n.inputs[0]);
                break;
            case OpKind::Concat: {
                std::vector<Segment> out;
                for (const auto& in : n.inputs)
                    for (const auto& s : segs.at(in)) out.push_back(s);
                segs[n.id] = std::move(out);
                break;
            }
            case OpKind::Add: {
                const auto& a = segs.at(n.inputs[0]);
                const auto& b = segs.at(n.inputs[1]);
                if (a.size() != b.size())
                    throw ValidationError("build_connectivity: add ties tensors with different "
                                          "channel segmentations (node '" + n.id + "')");
                for (size_t i = 0; i < a.size(); ++i) {
                    if (a[i].channels != b[i].channels)
                        throw ValidationError(
                            "build_connectivity: add segment widths differ (node '" + n.id + "')");
                    if (a[i].source != "@input" && b[i].source != "@input")
                        uf.merge(a[i].source, b[i].source);
                    else if (a[i].source != b[i].source)
                        throw ValidationError(
                            "build_connectivity: add ties the graph input to a conv (node '" +
                            n.id + "')");
                }
                segs[n.id] = a;
                break;
            }
            case OpKind::BoxDecode:
            case OpKind::Nms:
                segs[n.id] = {};  // box rows, no channel provenance
                break;
        }
    }
    return segs;
}

}  // namespace

std::vector<ConnectivityGroup> build_connectivity(const Graph& g) {
    UnionFind uf;
    const auto segs = tensor_segments(g, uf);

    // Collect group membership (root -> member convs).
    std::map<std::string, std::set<std::string>> members;
    for (const auto& n : g.nodes)
        if (n.op == OpKind::Conv2D) members[uf.find(n.id)].insert(n.id);

    std::map<std::string, ConnectivityGroup> by_root;
    for (const auto& [root, mset] : members) {
        ConnectivityGroup grp;
        grp.members.assign(mset.begin(), mset.end());
        grp.id = grp.members.front();
        grp.channels = g.node(grp.members.front()).output.shape.c();
        for (const auto& m : grp.members) {
            if (g.node(m).output.shape.c() != grp.channels)
                throw ValidationError(
                    "build_connectivity: tied convs have different channel counts ('" + m + "')");
        }
        by_root[root] = std::move(grp);
    }

    // Consumers and freeze marks.
    auto freeze = [&](const std::string& tensor_id) {
        auto it = segs.find(tensor_id);
        if (it == segs.end()) return;
        for (const auto& s : it->second)
            if (s.source != "@input") by_root.at(uf.find(s.source)).prunable = false;
    };
    for (const auto& n : g.nodes) {
        if (n.op == OpKind::Conv2D) {
            int64_t offset = 0;
            for (const auto& s : segs.at(n.inputs[0])) {
                if (s.source != "@input")
                    by_root.at(uf.find(s.source)).consumers.push_back({n.id, offset});
                offset += s.channels;
            }
        } else if (n.op == OpKind::BoxDecode) {
            freeze(n.inputs[0]);
        }
    }
    for (const auto& out : g.outputs) freeze(out);

    std::vector<ConnectivityGroup> groups;
    groups.reserve(by_root.size());
    for (auto& [root, grp] : by_root) groups.push_back(std::move(grp));
    std::sort(groups.begin(), groups.end(),
              [](const ConnectivityGroup& a, const ConnectivityGroup& b) { return a.id < b.id; });
    return groups;
}

int64_t count_params(const Graph& g) {
    int64_t total = 0;
    for (const auto& n : g.nodes) {
        if (n.op != OpKind::Conv2D) continue;
        total += conv_filter_elems(n, g);
        if (n.conv().has_bias) total += n.output.shape.c();
    }
    return total;
}

std::pair<Graph, PruningStats> prune_step(const Graph& g,
                                          const std::vector<ConnectivityGroup>& groups,
                                          const std::vector<std::string>& targets, double rate) {
    if (!(rate > 0.0 && rate < 1.0))
        throw ValidationError("prune_step: rate must lie in (0, 1)");
    for (const auto& n : g.nodes)
        if (n.op == OpKind::Conv2D && n.output.dtype != DType::F32)
            throw ValidationError("prune_step: pruning operates on the f32 graph");

    std::map<std::string, const ConnectivityGroup*> by_id;
    for (const auto& grp : groups) by_id[grp.id] = &grp;

    PruningStats stats;
    stats.params_before = count_params(g);
    stats.ops_before = count_gop(g).total_ops();

    // Removed output-channel indices per member conv, and removed
    // input-channel indices per consumer conv.
    std::map<std::string, std::vector<int64_t>> removed_out;
    std::map<std::string, std::vector<int64_t>> removed_in;

    for (const auto& target : targets) {
        auto it = by_id.find(target);
        if (it == by_id.end())
            throw ValidationError("prune_step: unknown group id '" + target + "'");
        const ConnectivityGroup& grp = *it->second;
        if (!grp.prunable)
            throw ValidationError("prune_step: group '" + grp.id +
                                  "' feeds a fixed-width consumer (head or graph output)");
        const int64_t c = grp.channels;
        const int64_t n_remove = static_cast<int64_t>(std::floor(rate * static_cast<double>(c)));
        if (n_remove >= c)
            throw ValidationError("prune_step: rate would remove every channel of group '" +
                                  grp.id + "'");
        if (n_remove == 0) continue;

        // Rank channels by the summed L1 norm of member filters.
        std::vector<double> score(static_cast<size_t>(c), 0.0);
        for (const auto& member : grp.members) {
            const Node& conv = g.node(member);
            const auto w = g.conv_filter_f32(conv);
            const int64_t cout = conv.output.shape.c();
            const int64_t k = static_cast<int64_t>(w.size()) / cout;
            for (int64_t ki = 0; ki < k; ++ki)
                for (int64_t co = 0; co < c; ++co)
                    score[static_cast<size_t>(co)] += std::fabs(w[ki * cout + co]);
        }
        std::vector<int64_t> order(static_cast<size_t>(c));
        for (int64_t i = 0; i < c; ++i) order[static_cast<size_t>(i)] = i;
        std::sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
            if (score[static_cast<size_t>(a)] != score[static_cast<size_t>(b)])
                return score[static_cast<size_t>(a)] < score[static_cast<size_t>(b)];
            return a < b;  // deterministic tie-break: lowest index
        });
        std::vector<int64_t> removed(order.begin(), order.begin() + n_remove);
        std::sort(removed.begin(), removed.end());

        for (const auto& member : grp.members) {
            auto& v = removed_out[member];
            v.insert(v.end(), removed.begin(), removed.end());
        }
        for (const auto& consumer : grp.consumers) {
            auto& v = removed_in[consumer.node_id];
            for (int64_t idx : removed) v.push_back(consumer.channel_offset + idx);
        }
    }

    // Rebuild the graph with sliced weights and re-propagated shapes.
    Graph out;
    out.inputs = g.inputs;
    out.outputs = g.outputs;
    for (const auto& n : g.nodes) {
        Node nn = n;
        nn.weight_ref.reset();
        if (n.op == OpKind::Conv2D) {
            std::set<int64_t> drop_out, drop_in;
            if (auto it = removed_out.find(n.id); it != removed_out.end())
                drop_out.insert(it->second.begin(), it->second.end());
            if (auto it = removed_in.find(n.id); it != removed_in.end())
                drop_in.insert(it->second.begin(), it->second.end());

            const auto w = g.conv_filter_f32(n);
            const auto bias = g.conv_bias_f32(n);
            const int64_t cout = n.output.shape.c();
            const int64_t cin = g.tensor(n.inputs[0]).shape.c();
            const auto& a = n.conv();
            const int64_t spatial = static_cast<int64_t>(a.kh) * a.kw;

            std::vector<int64_t> keep_out, keep_in;
            for (int64_t i = 0; i < cout; ++i)
                if (!drop_out.count(i)) keep_out.push_back(i);
            for (int64_t i = 0; i < cin; ++i)
                if (!drop_in.count(i)) keep_in.push_back(i);

            std::vector<float> nw;
            nw.reserve(static_cast<size_t>(spatial) * keep_in.size() * keep_out.size());
            for (int64_t s = 0; s < spatial; ++s)
                for (int64_t ci : keep_in)
                    for (int64_t co : keep_out)
                        nw.push_back(w[(s * cin + ci) * cout + co]);
            std::vector<float> nb;
            if (a.has_bias)
                for (int64_t co : keep_out) nb.push_back(bias[static_cast<size_t>(co)]);

            const uint64_t offset = out.weights.size();
            const uint64_t len = (nw.size() + nb.size()) * 4;
            out.weights.resize(offset + len);
            std::memcpy(out.weights.data() + offset, nw.data(), nw.size() * 4);
            std::memcpy(out.weights.data() + offset + nw.size() * 4, nb.data(), nb.size() * 4);
            nn.weight_ref = WeightRef{offset, len};
            nn.output.shape.d[3] = static_cast<int64_t>(keep_out.size());
        }
        out.nodes.push_back(std::move(nn));
    }
    // Forward shape propagation over the pruned channel counts.
    for (auto& n : out.nodes) {
        std::vector<Shape4> in_shapes;
        for (const auto& in : n.inputs) in_shapes.push_back(out.tensor(in).shape);
        n.output.shape = infer_output_shape(n, in_shapes);
        if (n.op == OpKind::Conv2D) {
            // Channel count set above; infer fills spatial dims only.
        }
    }
    out.validate();

    stats.params_after = count_params(out);
    stats.ops_after = count_gop(out).total_ops();
    stats.sparsity =
        1.0 - static_cast<double>(stats.params_after) / static_cast<double>(stats.params_before);
    return {std::move(out), stats};
}

std::string PruningPlan::to_json() const {
    json its = json::array();
    for (const auto& it : iterations)
        its.push_back(json{{"groups", it.groups}, {"rate", float_to_string(static_cast<float>(it.rate))}});
    return json{{"format", "gemflow-pruning-plan"}, {"iterations", its}}.dump(2) + "\n";
}

PruningPlan PruningPlan::from_json(const std::string& text) {
    json j = json::parse(text);
    PruningPlan plan;
    for (const auto& it : j.at("iterations")) {
        Iteration iter;
        iter.groups = it.at("groups").get<std::vector<std::string>>();
        iter.rate = float_from_string(it.at("rate").get<std::string>());
        plan.iterations.push_back(std::move(iter));
    }
    return plan;
}

PruningPlan PruningPlan::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open pruning plan: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::pair<Graph, std::vector<PruningStats>> run_plan(const Graph& g, const PruningPlan& plan) {
    Graph current = g;
    const int64_t params0 = count_params(g);
    const int64_t ops0 = count_gop(g).total_ops();

    std::vector<PruningStats> all;
    for (const auto& iter : plan.iterations) {
        const auto groups = build_connectivity(current);
        std::vector<std::string> targets = iter.groups;
        if (targets.empty())
            for (const auto& grp : groups)
                if (grp.prunable) targets.push_back(grp.id);
        auto [next, stats] = prune_step(current, groups, targets, iter.rate);
        current = std::move(next);
        // Report cumulatively against the original graph.
        stats.params_before = params0;
        stats.ops_before = ops0;
        stats.sparsity = 1.0 - static_cast<double>(stats.params_after) / params0;
        all.push_back(stats);
    }
    return {std::move(current), std::move(all)};
}

std::string pruning_stats_csv(const std::vector<PruningStats>& stats) {
    std::string out = "iteration,sparsity,gop\n";
    for (size_t i = 0; i < stats.size(); ++i) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.6f\n", i + 1, stats[i].sparsity,
                      stats[i].gop_after());
        out += buf;
    }
    return out;
}

}  // namespace gemflow
