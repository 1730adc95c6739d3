#pragma once

#include <map>
#include <string>
#include <vector>

#include "gemflow/schedule.hpp"

namespace gemflow {

struct TuningRecord {
    std::string fingerprint;
    Schedule schedule;
    uint64_t cycles = 0;
    uint64_t seq = 0;  // deterministic logical timestamp (record sequence number)
    bool failed = false;
    bool is_default = false;

    std::string to_jsonl() const;
    static TuningRecord from_jsonl(const std::string& line);
};

struct BestChoice {
    enum class Source { Tuned, Default };
    Source source = Source::Default;
    Schedule schedule;
    uint64_t cycles_default = 0;
    uint64_t cycles_best = 0;
};

// Stable identity of a layer for record caching: op, im2col dims, attrs and
// the accelerator config hash.
std::string fingerprint_layer(const Graph& g, const Node& n,
                              const accel::AcceleratorConfig& cfg);

// All legal schedules when the space fits the budget; otherwise a seeded
// deterministic shuffle prefix that always starts with the default schedule.
// Growing the budget only appends candidates (prefix property).
std::vector<Schedule> enumerate_space(int64_t m, int64_t k, int64_t n,
                                      const accel::AcceleratorConfig& cfg, size_t budget,
                                      uint64_t seed);

struct LayerTuneResult {
    BestChoice best;
    std::vector<TuningRecord> records;
};

// Evaluates every candidate by timing-only simulation of the lowered stream.
// Candidates that fail to lower or simulate are recorded with a failure mark
// and skipped. Falls back to the default schedule whenever nothing beats it.
LayerTuneResult tune_layer(const Graph& g, const Node& node,
                           const accel::AcceleratorConfig& cfg, size_t budget, uint64_t seed);

struct GraphTuneSummary {
    int64_t layers = 0;
    int64_t improved = 0;  // strictly better than the default
    double improved_fraction = 0.0;
    double mean_cycle_reduction = 0.0;
};

struct GraphTuneResult {
    std::map<std::string, BestChoice> table;  // conv node id -> choice
    GraphTuneSummary summary;
    std::vector<TuningRecord> records;
};

// Tunes every quantized conv layer; identical layers (same fingerprint) are
// tuned once and share the result. Candidate evaluation may run on `jobs`
// threads; the outcome is independent of the thread count.
GraphTuneResult tune_graph(const Graph& g, const accel::AcceleratorConfig& cfg, size_t budget,
                           uint64_t seed, int jobs = 1);

// Rebuilds the schedule table for a graph from persisted records, without
// re-simulation.
std::map<std::string, BestChoice> replay_records(const Graph& g,
                                                 const accel::AcceleratorConfig& cfg,
                                                 const std::vector<TuningRecord>& records);

std::string records_to_jsonl(const std::vector<TuningRecord>& records);
std::vector<TuningRecord> records_from_jsonl(const std::string& text);

}  // namespace gemflow
