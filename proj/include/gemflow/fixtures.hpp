#pragma once

#include <cstdint>

#include "gemflow/graph.hpp"

namespace gemflow::fixtures {

// Small single-head detector: 6 convs, 2 concats, 1 maxpool, 1 resize,
// sigmoid/box-decode/NMS tail. Ships as the bundled demo model.
Graph make_toy_detector(int64_t input = 64, uint64_t seed = 7);

// Plain conv stack (stride product 32) for input-size/GOP analysis.
Graph make_conv_only(int64_t input = 640, uint64_t seed = 11);

// 58-conv three-head detector mirroring a tiny production topology
// (ELAN-style blocks, SPP neck, three detection heads).
Graph make_tiny58(int64_t input = 640, int num_classes = 80, uint64_t seed = 23);

// Deterministic pseudo-random stream used for fixture weights and inputs
// (splitmix64; independent of libstdc++ distribution internals).
class DetRand {
  public:
    explicit DetRand(uint64_t seed) : state_(seed) {}
    uint64_t next_u64();
    // Uniform in [0, 1) with 24 bits of resolution.
    float next_float();
    // Uniform in [lo, hi).
    float uniform(float lo, float hi);
    int32_t uniform_int(int32_t lo, int32_t hi);  // inclusive bounds

  private:
    uint64_t state_;
};

}  // namespace gemflow::fixtures
