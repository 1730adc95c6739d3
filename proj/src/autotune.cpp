#include "gemflow/autotune.hpp"

#include <algorithm>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "gemflow/accel/sim.hpp"

namespace gemflow {

using nlohmann::json;

std::string TuningRecord::to_jsonl() const {
    json j{{"fingerprint", fingerprint},
           {"schedule", json::parse(schedule.to_json())},
           {"cycles", cycles},
           {"seq", seq},
           {"failed", failed},
           {"default", is_default}};
    return j.dump();
}

TuningRecord TuningRecord::from_jsonl(const std::string& line) {
    json j = json::parse(line);
    TuningRecord r;
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.schedule = Schedule::from_json(j.at("schedule").dump());
    r.cycles = j.at("cycles").get<uint64_t>();
    r.seq = j.at("seq").get<uint64_t>();
    r.failed = j.at("failed").get<bool>();
    r.is_default = j.at("default").get<bool>();
    return r;
}

std::string records_to_jsonl(const std::vector<TuningRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += r.to_jsonl();
        out += '\n';
    }
    return out;
}

std::vector<TuningRecord> records_from_jsonl(const std::string& text) {
    std::vector<TuningRecord> out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(TuningRecord::from_jsonl(line));
    }
    return out;
}

std::string fingerprint_layer(const Graph& g, const Node& n,
                              const accel::AcceleratorConfig& cfg) {
    int64_t m = 0, k = 0, n_out = 0;
    conv_matmul_dims(g, n, m, k, n_out);
    const auto& a = n.conv();
    std::ostringstream os;
    os << "conv2d/m" << m << "k" << k << "n" << n_out << "/kh" << a.kh << "kw" << a.kw << "s"
       << a.stride << (a.padding == Padding::Same ? "p1" : "p0") << "/cfg" << std::hex
       << cfg.hash();
    return os.str();
}

std::vector<Schedule> enumerate_space(int64_t m, int64_t k, int64_t n,
                                      const accel::AcceleratorConfig& cfg, size_t budget,
                                      uint64_t seed) {
    if (budget < 1) throw ValidationError("enumerate_space: budget must be >= 1");
    const int64_t dim = cfg.dim;
    const int64_t mt = std::max<int64_t>(1, (m + dim - 1) / dim);
    const int64_t kt = std::max<int64_t>(1, (k + dim - 1) / dim);
    const int64_t nt = std::max<int64_t>(1, (n + dim - 1) / dim);

    const Schedule def = default_schedule(m, k, n, cfg);

    std::vector<Schedule> space;
    for (int64_t ti = 1; ti <= mt; ++ti) {
        for (int64_t tj = 1; tj <= nt; ++tj) {
            for (int64_t tk = 1; tk <= kt; ++tk) {
                Schedule s;
                s.tile_i = static_cast<int>(ti);
                s.tile_j = static_cast<int>(tj);
                s.tile_k = static_cast<int>(tk);
                if (!schedule_legal(s, cfg)) continue;  // capacity prunes by (ti,tj,tk) alone
                for (uint8_t lo = 0; lo < kLoopOrders.size(); ++lo) {
                    s.loop_order = lo;
                    for (int db = 0; db < 2; ++db) {
                        s.double_buffer = db != 0;
                        if (schedule_legal(s, cfg)) space.push_back(s);
                    }
                }
            }
        }
    }
    std::sort(space.begin(), space.end(),
              [](const Schedule& a, const Schedule& b) { return a.lex_key() < b.lex_key(); });

    if (space.size() <= budget) return space;

    // Deterministic shuffle, then a budget-sized prefix with the default
    // pinned first: larger budgets strictly extend smaller ones.
    std::mt19937_64 rng(seed);
    std::shuffle(space.begin(), space.end(), rng);
    auto it = std::find(space.begin(), space.end(), def);
    if (it != space.end()) space.erase(it);
    space.insert(space.begin(), def);
    space.resize(budget);
    return space;
}

namespace {

uint64_t evaluate_schedule(const Graph& g, const Node& node, const accel::AcceleratorConfig& cfg,
                           const Schedule& sched) {
    NodeLowering low = lower_conv(g, node, cfg, sched);
    std::vector<uint8_t> dram(low.dram_size, 0);
    accel::ExecOptions opts;
    opts.timing_only = true;
    const auto res = accel::execute_stream(cfg, low.stream, std::move(dram), opts);
    return res.cycles.total;
}

}  // namespace

LayerTuneResult tune_layer(const Graph& g, const Node& node, const accel::AcceleratorConfig& cfg,
                           size_t budget, uint64_t seed) {
    if (node.op != OpKind::Conv2D || node.output.dtype != DType::I8)
        throw ValidationError("tune_layer: node '" + node.id + "' is not a quantized conv");
    int64_t m = 0, k = 0, n_out = 0;
    conv_matmul_dims(g, node, m, k, n_out);
    const Schedule def = default_schedule(m, k, n_out, cfg);
    const std::vector<Schedule> candidates = enumerate_space(m, k, n_out, cfg, budget, seed);
    const std::string fp = fingerprint_layer(g, node, cfg);

    LayerTuneResult result;
    uint64_t cycles_default = 0;
    bool have_default = false;
    std::optional<std::pair<uint64_t, Schedule>> best;

    for (const Schedule& s : candidates) {
        TuningRecord rec;
        rec.fingerprint = fp;
        rec.schedule = s;
        rec.seq = result.records.size();
        rec.is_default = s == def;
        try {
            rec.cycles = evaluate_schedule(g, node, cfg, s);
        } catch (const std::exception&) {
            rec.failed = true;  // the candidate is invalidated, tuning continues
        }
        if (!rec.failed) {
            if (rec.is_default) {
                cycles_default = rec.cycles;
                have_default = true;
            }
            if (!best || rec.cycles < best->first ||
                (rec.cycles == best->first && s.lex_key() < best->second.lex_key()))
                best = {rec.cycles, s};
        }
        result.records.push_back(std::move(rec));
    }
    if (!have_default) {
        // The default is always part of the candidate set; if it failed the
        // layer is not lowerable at all.
        throw SimulationError("tune_layer: default schedule failed for node '" + node.id + "'");
    }

    result.best.cycles_default = cycles_default;
    if (best && best->first < cycles_default) {
        result.best.source = BestChoice::Source::Tuned;
        result.best.schedule = best->second;
        result.best.cycles_best = best->first;
    } else {
        result.best.source = BestChoice::Source::Default;
        result.best.schedule = def;
        result.best.cycles_best = cycles_default;
    }
    return result;
}

GraphTuneResult tune_graph(const Graph& g, const accel::AcceleratorConfig& cfg, size_t budget,
                           uint64_t seed, int jobs) {
    // Unique fingerprints, in first-appearance order.
    std::vector<const Node*> conv_nodes;
    for (const auto& n : g.nodes)
        if (n.op == OpKind::Conv2D && n.output.dtype == DType::I8) conv_nodes.push_back(&n);

    std::vector<std::string> fps;
    std::vector<const Node*> reps;
    std::map<std::string, size_t> fp_index;
    for (const Node* n : conv_nodes) {
        const std::string fp = fingerprint_layer(g, *n, cfg);
        if (!fp_index.count(fp)) {
            fp_index[fp] = fps.size();
            fps.push_back(fp);
            reps.push_back(n);
        }
    }

    std::vector<LayerTuneResult> per_fp(fps.size());
    const int nthreads = std::max(1, std::min<int>(jobs, static_cast<int>(fps.size())));
    if (nthreads <= 1) {
        for (size_t i = 0; i < fps.size(); ++i) per_fp[i] = tune_layer(g, *reps[i], cfg, budget, seed);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        std::vector<std::exception_ptr> errs(nthreads);
        for (int t = 0; t < nthreads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (size_t i = next.fetch_add(1); i < fps.size(); i = next.fetch_add(1))
                        per_fp[i] = tune_layer(g, *reps[i], cfg, budget, seed);
                } catch (...) {
                    errs[t] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errs)
            if (e) std::rethrow_exception(e);
    }

    GraphTuneResult out;
    uint64_t seq = 0;
    for (size_t i = 0; i < fps.size(); ++i) {
        for (TuningRecord rec : per_fp[i].records) {
            rec.seq = seq++;
            out.records.push_back(std::move(rec));
        }
    }
    double reduction_sum = 0.0;
    for (const Node* n : conv_nodes) {
        const auto& r = per_fp[fp_index.at(fingerprint_layer(g, *n, cfg))];
        out.table[n->id] = r.best;
        ++out.summary.layers;
        if (r.best.cycles_best < r.best.cycles_default) ++out.summary.improved;
        reduction_sum += r.best.cycles_default == 0
                             ? 0.0
                             : 1.0 - static_cast<double>(r.best.cycles_best) /
                                         static_cast<double>(r.best.cycles_default);
    }
    if (out.summary.layers > 0) {
        out.summary.improved_fraction =
            static_cast<double>(out.summary.improved) / out.summary.layers;
        out.summary.mean_cycle_reduction = reduction_sum / out.summary.layers;
    }
    return out;
}

std::map<std::string, BestChoice> replay_records(const Graph& g,
                                                 const accel::AcceleratorConfig& cfg,
                                                 const std::vector<TuningRecord>& records) {
    struct FpBest {
        std::optional<std::pair<uint64_t, Schedule>> best;
        std::optional<uint64_t> cycles_default;
        std::optional<Schedule> default_schedule;
    };
    std::map<std::string, FpBest> by_fp;
    for (const auto& r : records) {
        if (r.failed) continue;
        auto& b = by_fp[r.fingerprint];
        if (r.is_default) {
            b.cycles_default = r.cycles;
            b.default_schedule = r.schedule;
        }
        if (!b.best || r.cycles < b.best->first ||
            (r.cycles == b.best->first && r.schedule.lex_key() < b.best->second.lex_key()))
            b.best = {r.cycles, r.schedule};
    }

    std::map<std::string, BestChoice> table;
    for (const auto& n : g.nodes) {
        if (n.op != OpKind::Conv2D || n.output.dtype != DType::I8) continue;
        const std::string fp = fingerprint_layer(g, n, cfg);
        auto it = by_fp.find(fp);
        if (it == by_fp.end() || !it->second.cycles_default)
            throw ValidationError("replay_records: no records for layer '" + n.id + "'");
        const auto& b = it->second;
        BestChoice c;
        c.cycles_default = *b.cycles_default;
        if (b.best && b.best->first < *b.cycles_default) {
            c.source = BestChoice::Source::Tuned;
            c.schedule = b.best->second;
            c.cycles_best = b.best->first;
        } else {
            c.source = BestChoice::Source::Default;
            c.schedule = *b.default_schedule;
            c.cycles_best = *b.cycles_default;
        }
        table[n.id] = c;
    }
    return table;
}

}  // namespace gemflow
