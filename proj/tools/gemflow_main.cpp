#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "gemflow/fixtures.hpp"
#include "gemflow/model_io.hpp"
#include "gemflow/pipeline.hpp"
#include "gemflow/prune.hpp"
#include "gemflow/version.hpp"

namespace fs = std::filesystem;
using namespace gemflow;

namespace {

// Exit codes: 0 ok, 2 validation, 3 simulation, 4 io.
int guarded(const std::function<void()>& fn) {
    try {
        fn();
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const SimulationError& e) {
        std::cerr << "simulation error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

std::vector<int64_t> parse_sizes(const std::string& arg) {
    std::vector<int64_t> sizes;
    std::string cur;
    for (char c : arg + ",") {
        if (c == ',') {
            if (!cur.empty()) sizes.push_back(std::stoll(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (sizes.empty()) throw ValidationError("no sizes given");
    return sizes;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << text;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gemflow: deployment toolchain and cycle-approximate simulator for a "
                 "weight-stationary systolic accelerator"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    // --- analyze-input-size ---
    std::string an_model, an_sizes, an_out;
    auto* analyze = app.add_subcommand("analyze-input-size",
                                       "GOP per candidate input size for a model");
    analyze->add_option("--model", an_model, "model manifest (JSON)")->required();
    analyze->add_option("--sizes", an_sizes, "comma-separated square sizes, e.g. 640,480")
        ->required();
    analyze->add_option("--out", an_out, "write CSV here instead of stdout");

    // --- pipeline ---
    PipelineConfig pc;
    std::string pc_config;
    auto* pipeline = app.add_subcommand("pipeline", "run the full deployment pipeline");
    pipeline->add_option("--config", pc_config, "pipeline config JSON (flags override)");
    pipeline->add_option("--model", pc.model_path, "model manifest (JSON)");
    pipeline->add_option("--out-dir", pc.out_dir, "artifact directory");
    pipeline->add_option("--accel", pc.accel, "accelerator: ours, baseline, or a config path");
    pipeline->add_option("--rescale", pc.rescale, "square input size to rescale to");
    pipeline->add_option("--plan", pc.plan_path, "pruning plan JSON");
    pipeline->add_flag("--skip-prune", pc.skip_prune, "skip the pruning stage");
    pipeline->add_flag("--skip-tune", pc.skip_tune, "skip the tuning stage");
    pipeline->add_option("--budget", pc.budget, "tuning candidates per layer");
    pipeline->add_option("--seed", pc.seed, "deterministic seed");
    pipeline->add_option("--calib", pc.calib_path, "raw f32 calibration samples");
    pipeline->add_option("--calib-samples", pc.calib_samples,
                         "synthetic calibration sample count");
    pipeline->add_option("--input", pc.input_path, "raw f32 input tensor");
    pipeline->add_option("--power-w", pc.power_w, "board power for the efficiency figures");
    pipeline->add_option("--jobs", pc.jobs, "tuning worker threads");
    std::string emit = "json,csv";
    pipeline->add_option("--emit", emit, "artifact formats: json, csv, or json,csv");

    // --- gen-model ---
    std::string gm_kind = "toydet", gm_dir = ".";
    int64_t gm_input = 0;
    auto* gen = app.add_subcommand("gen-model", "write a bundled fixture model to disk");
    gen->add_option("--kind", gm_kind, "toydet | conv-only | tiny58 | tiny58-small");
    gen->add_option("--out-dir", gm_dir, "output directory");
    gen->add_option("--input-size", gm_input, "override the input size");

    CLI11_PARSE(app, argc, argv);

    if (*analyze) {
        return guarded([&] {
            const Graph g = load_model(an_model);
            const std::string csv = analyze_input_sizes(g, parse_sizes(an_sizes));
            if (an_out.empty())
                std::cout << csv;
            else
                write_text(an_out, csv);
        });
    }

    if (*pipeline) {
        return guarded([&] {
            PipelineConfig cfg;
            if (!pc_config.empty()) {
                std::ifstream f(pc_config);
                if (!f) throw IoError("cannot open pipeline config: " + pc_config);
                std::string text((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
                cfg = PipelineConfig::from_json(text);
            }
            // Flags win over the config file.
            for (const auto* opt : pipeline->get_options()) {
                if (opt->count() == 0) continue;
                const std::string name = opt->get_name();
                if (name == "--model") cfg.model_path = pc.model_path;
                else if (name == "--out-dir") cfg.out_dir = pc.out_dir;
                else if (name == "--accel") cfg.accel = pc.accel;
                else if (name == "--rescale") cfg.rescale = pc.rescale;
                else if (name == "--plan") cfg.plan_path = pc.plan_path;
                else if (name == "--skip-prune") cfg.skip_prune = pc.skip_prune;
                else if (name == "--skip-tune") cfg.skip_tune = pc.skip_tune;
                else if (name == "--budget") cfg.budget = pc.budget;
                else if (name == "--seed") cfg.seed = pc.seed;
                else if (name == "--calib") cfg.calib_path = pc.calib_path;
                else if (name == "--calib-samples") cfg.calib_samples = pc.calib_samples;
                else if (name == "--input") cfg.input_path = pc.input_path;
                else if (name == "--power-w") cfg.power_w = pc.power_w;
                else if (name == "--jobs") cfg.jobs = pc.jobs;
                else if (name == "--emit") {
                    cfg.emit_json = emit.find("json") != std::string::npos;
                    cfg.emit_csv = emit.find("csv") != std::string::npos;
                }
            }
            if (cfg.model_path.empty())
                throw ValidationError("pipeline: --model (or a config file) is required");
            if (cfg.power_w <= 0) throw ValidationError("pipeline: power_w must be positive");

            const PipelineResult res = run_pipeline(cfg);
            std::printf("pipeline ok: %zu stages, %zu artifacts in %s\n", res.stages_run.size(),
                        res.artifacts.size(), cfg.out_dir.c_str());
            std::printf("  total %.3f ms, %.2f GOP/s, %.2f GOP/s/W (%d detections)\n",
                        res.report.total_ms, res.report.gop_per_s, res.report.efficiency,
                        res.detections);
        });
    }

    if (*gen) {
        return guarded([&] {
            Graph g;
            std::string name;
            if (gm_kind == "toydet") {
                g = fixtures::make_toy_detector(gm_input > 0 ? gm_input : 64);
                name = "toydet";
            } else if (gm_kind == "conv-only") {
                g = fixtures::make_conv_only(gm_input > 0 ? gm_input : 640);
                name = "conv_only";
            } else if (gm_kind == "tiny58") {
                g = fixtures::make_tiny58(gm_input > 0 ? gm_input : 640);
                name = "tiny58";
            } else if (gm_kind == "tiny58-small") {
                g = fixtures::make_tiny58(gm_input > 0 ? gm_input : 160);
                name = "tiny58_small";
            } else {
                throw ValidationError("unknown model kind: " + gm_kind);
            }
            fs::create_directories(gm_dir);
            const std::string manifest = (fs::path(gm_dir) / (name + ".json")).string();
            save_model(g, manifest, name + ".bin");
            std::printf("wrote %s (+ %s.bin)\n", manifest.c_str(), name.c_str());
        });
    }

    return 0;
}
