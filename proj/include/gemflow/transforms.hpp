#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gemflow/graph.hpp"

namespace gemflow {

// Swap every LeakyReLU conv activation for ReLU6. Idempotent.
Graph replace_activations(const Graph& g);

// Re-derive all spatial dims for a new input size. The new size must be a
// multiple of the graph's spatial alignment requirement (the accumulated
// stride/pool/resize factor along every path).
Graph rescale_input(const Graph& g, int64_t new_h, int64_t new_w);

// Smallest (h, w) multiples a graph input must respect for all shape rules
// to stay exact under rescaling.
std::pair<int64_t, int64_t> input_size_multiple(const Graph& g);

enum class GopBucket : uint8_t { Main, Post };

struct NodeOps {
    std::string id;
    OpKind op;
    GopBucket bucket;
    int64_t ops;
};

struct GopCount {
    int64_t main_ops = 0;  // tensor pipeline (convs + data movement ops)
    int64_t post_ops = 0;  // detection post-processing (sigmoid/decode/nms)
    std::vector<NodeOps> per_node;

    int64_t total_ops() const { return main_ops + post_ops; }
    double main_gop() const { return static_cast<double>(main_ops) * 1e-9; }
    double post_gop() const { return static_cast<double>(post_ops) * 1e-9; }
    double total_gop() const { return static_cast<double>(total_ops()) * 1e-9; }
};

// Deterministic integer op counts. Convs count one MAC as 2 ops; element-wise
// and data-movement ops count one op per output element; NMS is charged a
// fixed 8 ops per candidate box (data-independent proxy).
GopCount count_gop(const Graph& g);

}  // namespace gemflow
