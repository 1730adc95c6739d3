#pragma once

#include <string>
#include <vector>

#include "gemflow/graph.hpp"

namespace gemflow {

// One jointly-pruned set of convolution output channels. Add ties member
// convs index-to-index; Concat places members at disjoint offsets in their
// consumers' input channel space.
struct GroupConsumer {
    std::string node_id;     // conv reading these channels
    int64_t channel_offset;  // position of the group's channel 0 in that input
};

struct ConnectivityGroup {
    std::string id;                     // lexicographically smallest member id
    std::vector<std::string> members;   // conv node ids, sorted
    std::vector<GroupConsumer> consumers;
    int64_t channels = 0;
    // False when a detection head, graph output or other fixed-width consumer
    // depends on the exact channel count.
    bool prunable = true;
};

std::vector<ConnectivityGroup> build_connectivity(const Graph& g);

struct PruningStats {
    int64_t params_before = 0, params_after = 0;
    int64_t ops_before = 0, ops_after = 0;  // count_gop totals
    double sparsity = 0.0;                  // 1 - params_after/params_before

    double gop_before() const { return static_cast<double>(ops_before) * 1e-9; }
    double gop_after() const { return static_cast<double>(ops_after) * 1e-9; }
};

// Removes the floor(rate*C) lowest-L1 channels of every targeted group, from
// member filters/biases and from every consumer's input-channel slices.
// Operates on f32 graphs (before quantization).
std::pair<Graph, PruningStats> prune_step(const Graph& g,
                                          const std::vector<ConnectivityGroup>& groups,
                                          const std::vector<std::string>& targets, double rate);

struct PruningPlan {
    struct Iteration {
        std::vector<std::string> groups;  // empty = every prunable group
        double rate = 0.0;
    };
    std::vector<Iteration> iterations;

    std::string to_json() const;
    static PruningPlan from_json(const std::string& text);
    static PruningPlan load(const std::string& path);
};

// Applies the plan iteration by iteration, rebuilding connectivity after each
// step. Stats are cumulative against the original graph.
std::pair<Graph, std::vector<PruningStats>> run_plan(const Graph& g, const PruningPlan& plan);

// CSV rows (iteration, sparsity, gop).
std::string pruning_stats_csv(const std::vector<PruningStats>& stats);

int64_t count_params(const Graph& g);

}  // namespace gemflow
