#include "gemflow/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gemflow/fixtures.hpp"
#include "gemflow/model_io.hpp"
#include "gemflow/prune.hpp"
#include "gemflow/quantize.hpp"
#include "gemflow/transforms.hpp"
#include "gemflow/version.hpp"

namespace gemflow {

namespace fs = std::filesystem;
using nlohmann::json;

accel::AcceleratorConfig PipelineConfig::resolve_accel() const {
    if (accel == "ours" || accel == "baseline") return accel::AcceleratorConfig::preset(accel);
    std::ifstream f(accel);
    if (!f) throw IoError("cannot open accelerator config: " + accel);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return accel::AcceleratorConfig::from_json(text);
}

std::string PipelineConfig::to_json() const {
    json j{{"model", model_path},
           {"out_dir", out_dir},
           {"accel", accel},
           {"rescale", rescale},
           {"plan", plan_path},
           {"skip_prune", skip_prune},
           {"skip_tune", skip_tune},
           {"budget", budget},
           {"seed", seed},
           {"calib_samples", calib_samples},
           {"calib", calib_path},
           {"input", input_path},
           {"power_w", power_w},
           {"jobs", jobs},
           {"emit_json", emit_json},
           {"emit_csv", emit_csv}};
    return j.dump(2) + "\n";
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    PipelineConfig c;
    c.model_path = j.value("model", c.model_path);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.accel = j.value("accel", c.accel);
    c.rescale = j.value("rescale", c.rescale);
    c.plan_path = j.value("plan", c.plan_path);
    c.skip_prune = j.value("skip_prune", c.skip_prune);
    c.skip_tune = j.value("skip_tune", c.skip_tune);
    c.budget = j.value("budget", c.budget);
    c.seed = j.value("seed", c.seed);
    c.calib_samples = j.value("calib_samples", c.calib_samples);
    c.calib_path = j.value("calib", c.calib_path);
    c.input_path = j.value("input", c.input_path);
    c.power_w = j.value("power_w", c.power_w);
    c.jobs = j.value("jobs", c.jobs);
    c.emit_json = j.value("emit_json", c.emit_json);
    c.emit_csv = j.value("emit_csv", c.emit_csv);
    return c;
}

uint64_t PipelineConfig::hash() const {
    const std::string s = to_json();
    uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

TensorMap synth_input(const Graph& g, uint64_t seed) {
    TensorMap m;
    fixtures::DetRand rng(seed);
    for (const auto& gi : g.inputs) {
        Tensor t = Tensor::zeros(gi.spec);
        for (auto& v : t.f) v = rng.uniform(-1.0f, 1.0f);
        m.emplace(gi.id, std::move(t));
    }
    return m;
}

std::string analyze_input_sizes(const Graph& g, const std::vector<int64_t>& sizes) {
    std::string csv = "size,gop,note\n";
    for (int64_t s : sizes) {
        try {
            const Graph r = rescale_input(g, s, s);
            char buf[96];
            std::snprintf(buf, sizeof(buf), "%lld,%.9f,\n", static_cast<long long>(s),
                          count_gop(r).total_gop());
            csv += buf;
        } catch (const std::exception& e) {
            csv += std::to_string(s) + ",,error: " + e.what() + "\n";
        }
    }
    return csv;
}

namespace {

// Tracks artifacts per stage so a failing stage can mark its own outputs.
class ArtifactSink {
  public:
    explicit ArtifactSink(const fs::path& dir) : dir_(dir) { fs::create_directories(dir); }

    void begin_stage(const std::string& name) {
        stage_ = name;
        stage_files_.clear();
    }
    void write(const std::string& name, const std::string& text) {
        const fs::path p = dir_ / name;
        std::ofstream f(p, std::ios::binary);
        if (!f) throw IoError("cannot write artifact: " + p.string());
        f << text;
        f.close();
        if (!f) throw IoError("write failed: " + p.string());
        stage_files_.push_back(name);
        all_.push_back(name);
    }
    void add_external(const std::string& name) {
        stage_files_.push_back(name);
        all_.push_back(name);
    }
    // An aborted pipeline marks everything written so far as partial output,
    // so a half-finished artifact directory cannot be mistaken for a run.
    void mark_partial() {
        for (const auto& name : all_) {
            const fs::path p = dir_ / name;
            if (fs::exists(p)) fs::rename(p, dir_ / (name + ".partial"));
        }
    }
    const std::vector<std::string>& artifacts() const { return all_; }
    const std::string& stage() const { return stage_; }
    const fs::path& dir() const { return dir_; }

  private:
    fs::path dir_;
    std::string stage_;
    std::vector<std::string> stage_files_;
    std::vector<std::string> all_;
};

std::vector<TensorMap> load_or_synth_samples(const Graph& g, const PipelineConfig& cfg) {
    std::vector<TensorMap> samples;
    if (!cfg.calib_path.empty()) {
        if (g.inputs.size() != 1)
            throw ValidationError("calibration files expect a single-input model");
        std::ifstream f(cfg.calib_path, std::ios::binary);
        if (!f) throw IoError("cannot open calibration set: " + cfg.calib_path);
        std::vector<char> raw((std::istreambuf_iterator<char>(f)),
                              std::istreambuf_iterator<char>());
        const int64_t elems = g.inputs[0].spec.shape.elements();
        const size_t sample_bytes = static_cast<size_t>(elems) * 4;
        if (raw.empty() || raw.size() % sample_bytes != 0)
            throw ValidationError("calibration set size is not a whole number of samples");
        for (size_t off = 0; off + sample_bytes <= raw.size(); off += sample_bytes) {
            Tensor t = Tensor::zeros(g.inputs[0].spec);
            std::memcpy(t.f.data(), raw.data() + off, sample_bytes);
            TensorMap m;
            m.emplace(g.inputs[0].id, std::move(t));
            samples.push_back(std::move(m));
        }
        return samples;
    }
    if (cfg.calib_samples < 1) throw ValidationError("calib_samples must be >= 1");
    for (int i = 0; i < cfg.calib_samples; ++i)
        samples.push_back(synth_input(g, cfg.seed + 1000 + static_cast<uint64_t>(i)));
    return samples;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    const accel::AcceleratorConfig acc = cfg.resolve_accel();
    ArtifactSink sink(cfg.out_dir);
    PipelineResult result;

    // Failures abort with the stage name and keep the error category (the CLI
    // maps categories onto exit codes).
    auto stage = [&](const std::string& name, auto&& fn) {
        sink.begin_stage(name);
        try {
            fn();
            result.stages_run.push_back(name);
        } catch (const ValidationError& e) {
            sink.mark_partial();
            throw ValidationError("pipeline stage '" + name + "': " + e.what());
        } catch (const IoError& e) {
            sink.mark_partial();
            throw IoError("pipeline stage '" + name + "': " + e.what());
        } catch (const std::exception& e) {
            sink.mark_partial();
            throw SimulationError("pipeline stage '" + name + "': " + e.what());
        }
    };

    Graph g;
    stage("load", [&] { g = load_model(cfg.model_path); });

    stage("replace-activations", [&] {
        g = replace_activations(g);
        save_model(g, (sink.dir() / "model_opt.json").string(), "model_opt.bin");
        sink.add_external("model_opt.json");
        sink.add_external("model_opt.bin");
    });

    if (cfg.rescale > 0) {
        stage("rescale", [&] { g = rescale_input(g, cfg.rescale, cfg.rescale); });
    }

    if (!cfg.skip_prune && !cfg.plan_path.empty()) {
        stage("prune", [&] {
            const PruningPlan plan = PruningPlan::load(cfg.plan_path);
            auto [pruned, stats] = run_plan(g, plan);
            g = std::move(pruned);
            result.prune_stats = stats;
            if (cfg.emit_csv) sink.write("pruning_stats.csv", pruning_stats_csv(stats));
            save_model(g, (sink.dir() / "model_pruned.json").string(), "model_pruned.bin");
            sink.add_external("model_pruned.json");
            sink.add_external("model_pruned.bin");
        });
    }

    CalibrationStats stats;
    stage("calibrate", [&] {
        const auto samples = load_or_synth_samples(g, cfg);
        stats = calibrate(g, samples);
        sink.write("calibration.json", stats.to_json());
    });

    Graph quant;
    stage("quantize", [&] {
        quant = quantize_graph(g, stats);
        save_model(quant, (sink.dir() / "model_quant.json").string(), "model_quant.bin");
        sink.add_external("model_quant.json");
        sink.add_external("model_quant.bin");
    });

    stage("partition", [&] {
        const Partition p = partition(quant);
        json j{{"format", "gemflow-partition"},
               {"accel_nodes", p.accel_part.nodes.size()},
               {"host_nodes", p.host_part.nodes.size()}};
        json boundary = json::array();
        for (const auto& [id, bytes] : p.boundary)
            boundary.push_back(json{{"tensor", id}, {"bytes", bytes}});
        j["boundary"] = boundary;
        sink.write("partition.json", j.dump(2) + "\n");
    });

    std::map<std::string, BestChoice> schedules;
    if (!cfg.skip_tune) {
        stage("tune", [&] {
            GraphTuneResult tr = tune_graph(quant, acc, cfg.budget, cfg.seed, cfg.jobs);
            schedules = tr.table;
            result.tune_summary = tr.summary;
            sink.write("tuning_records.jsonl", records_to_jsonl(tr.records));
            json table = json::object();
            for (const auto& [id, choice] : tr.table) {
                table[id] = json{
                    {"source", choice.source == BestChoice::Source::Tuned ? "tuned" : "default"},
                    {"schedule", json::parse(choice.schedule.to_json())},
                    {"cycles_default", choice.cycles_default},
                    {"cycles_best", choice.cycles_best}};
            }
            json j{{"format", "gemflow-schedule-table"},
                   {"summary",
                    json{{"layers", tr.summary.layers},
                         {"improved", tr.summary.improved},
                         {"improved_fraction", tr.summary.improved_fraction},
                         {"mean_cycle_reduction", tr.summary.mean_cycle_reduction}}},
                   {"layers", table}};
            sink.write("schedule_table.json", j.dump(2) + "\n");
        });
    }

    stage("run", [&] {
        TensorMap input;
        if (!cfg.input_path.empty()) {
            if (quant.inputs.size() != 1)
                throw ValidationError("input files expect a single-input model");
            std::ifstream f(cfg.input_path, std::ios::binary);
            if (!f) throw IoError("cannot open input: " + cfg.input_path);
            Tensor t = Tensor::zeros(quant.inputs[0].spec);
            f.read(reinterpret_cast<char*>(t.f.data()),
                   static_cast<std::streamsize>(t.f.size() * 4));
            if (f.gcount() != static_cast<std::streamsize>(t.f.size() * 4))
                throw ValidationError("input file too small for the model input");
            input.emplace(quant.inputs[0].id, std::move(t));
        } else {
            input = synth_input(quant, cfg.seed + 99);
        }
        EndToEndOptions opts;
        opts.power_w = cfg.power_w;
        const EndToEndResult res = run_end_to_end(quant, acc, schedules, input, opts);
        result.report = res.report;
        result.detections = static_cast<int>(res.detections.size());
        if (cfg.emit_json) sink.write("run_report.json", res.report.to_json());
        if (cfg.emit_csv) sink.write("run_report.csv", res.report.to_csv());
        sink.write("detections.jsonl", detections_to_jsonl(res.detections));
    });

    stage("summary", [&] {
        char hash_hex[32];
        std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                      static_cast<unsigned long long>(cfg.hash()));
        json j{{"format", "gemflow-pipeline-summary"},
               {"tool_version", kVersion},
               {"config_hash", hash_hex},
               {"config", json::parse(cfg.to_json())},
               {"accelerator", json::parse(acc.to_json())},
               {"stages", result.stages_run},
               {"artifacts", sink.artifacts()}};
        sink.write("pipeline_summary.json", j.dump(2) + "\n");
    });

    result.artifacts = sink.artifacts();
    return result;
}

}  // namespace gemflow
