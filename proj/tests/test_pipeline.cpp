#include <doctest.h>

#include <filesystem>
#include <cstdlib>
#include <fstream>
#include <map>

#include "gemflow/fixtures.hpp"
#include "gemflow/model_io.hpp"
#include "gemflow/pipeline.hpp"

using namespace gemflow;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "gemflow_pipe" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string write_toy_model(const fs::path& dir) {
    const Graph g = fixtures::make_toy_detector(64);
    const std::string manifest = (dir / "toydet.json").string();
    save_model(g, manifest);
    return manifest;
}

}  // namespace

TEST_CASE("full pipeline produces every artifact") {
    const fs::path dir = fresh_dir("full");
    PipelineConfig cfg;
    cfg.model_path = write_toy_model(dir);
    cfg.out_dir = (dir / "out").string();
    cfg.budget = 6;
    cfg.seed = 3;
    cfg.calib_samples = 2;

    const PipelineResult res = run_pipeline(cfg);
    for (const char* name :
         {"model_opt.json", "model_opt.bin", "calibration.json", "model_quant.json",
          "model_quant.bin", "partition.json", "tuning_records.jsonl", "schedule_table.json",
          "run_report.json", "run_report.csv", "detections.jsonl", "pipeline_summary.json"}) {
        CAPTURE(name);
        CHECK(fs::exists(fs::path(cfg.out_dir) / name));
    }
    CHECK(res.report.efficiency > 0.0);
    CHECK(res.report.total_ms > 0.0);
    CHECK(res.tune_summary.layers == 6);

    // Artifacts are self-describing: tool version + config hash present.
    const std::string summary = slurp(fs::path(cfg.out_dir) / "pipeline_summary.json");
    CHECK(summary.find("config_hash") != std::string::npos);
    CHECK(summary.find("tool_version") != std::string::npos);
}

TEST_CASE("skip flags gate their stages") {
    const fs::path dir = fresh_dir("skip");
    PipelineConfig cfg;
    cfg.model_path = write_toy_model(dir);
    cfg.out_dir = (dir / "out").string();
    cfg.skip_tune = true;
    cfg.calib_samples = 1;

    run_pipeline(cfg);
    CHECK(!fs::exists(fs::path(cfg.out_dir) / "schedule_table.json"));
    CHECK(!fs::exists(fs::path(cfg.out_dir) / "pruning_stats.csv"));  // no plan given
    CHECK(fs::exists(fs::path(cfg.out_dir) / "run_report.json"));
}

TEST_CASE("a corrupt weights blob aborts in the load stage") {
    const fs::path dir = fresh_dir("corrupt");
    const std::string manifest = write_toy_model(dir);
    // Truncate the blob.
    const fs::path blob = dir / "toydet.bin";
    fs::resize_file(blob, fs::file_size(blob) - 8);

    PipelineConfig cfg;
    cfg.model_path = manifest;
    cfg.out_dir = (dir / "out").string();
    CHECK_THROWS_WITH_AS(run_pipeline(cfg), doctest::Contains("load"), ValidationError);
}

TEST_CASE("identical config and seed give byte-identical artifacts") {
    const fs::path dir = fresh_dir("determinism");
    PipelineConfig cfg;
    cfg.model_path = write_toy_model(dir);
    cfg.out_dir = (dir / "out").string();
    cfg.budget = 4;
    cfg.seed = 17;
    cfg.calib_samples = 1;

    // Same config, run twice with a snapshot in between.
    run_pipeline(cfg);
    std::map<std::string, std::string> first;
    for (const auto& entry : fs::directory_iterator(cfg.out_dir))
        first[entry.path().filename().string()] = slurp(entry.path());
    fs::remove_all(cfg.out_dir);
    run_pipeline(cfg);

    size_t files = 0;
    for (const auto& entry : fs::directory_iterator(cfg.out_dir)) {
        const std::string name = entry.path().filename().string();
        CAPTURE(name);
        REQUIRE(first.count(name));
        CHECK(slurp(entry.path()) == first.at(name));
        ++files;
    }
    CHECK(files == first.size());
    CHECK(files >= 10);
}

TEST_CASE("analyze_input_sizes emits one row per size with error notes") {
    const Graph g = fixtures::make_conv_only(640);
    const std::string csv = analyze_input_sizes(g, {640, 480, 100});
    CHECK(csv.find("size,gop,note\n") == 0);
    CHECK(csv.find("\n640,") != std::string::npos);
    CHECK(csv.find("\n480,") != std::string::npos);
    CHECK(csv.find("100,,error") != std::string::npos);
}

TEST_CASE("pipeline config json round-trip and flag override semantics") {
    PipelineConfig cfg;
    cfg.model_path = "m.json";
    cfg.budget = 99;
    cfg.power_w = 2.5;
    const PipelineConfig back = PipelineConfig::from_json(cfg.to_json());
    CHECK(back.model_path == "m.json");
    CHECK(back.budget == 99);
    CHECK(back.power_w == doctest::Approx(2.5));
    CHECK(back.hash() == cfg.hash());
    PipelineConfig other = back;
    other.seed += 1;
    CHECK(other.hash() != cfg.hash());
}

TEST_CASE("cli exit codes: 0 ok, 2 validation, 4 io") {
    const fs::path dir = fresh_dir("cli");
    const std::string manifest = write_toy_model(dir);
    auto run = [](const std::string& args) {
        const int status = std::system((std::string(GEMFLOW_CLI_PATH) + " " + args +
                                        " > /dev/null 2>&1")
                                           .c_str());
        return WEXITSTATUS(status);
    };
    CHECK(run("analyze-input-size --model " + manifest + " --sizes 64,48") == 0);
    CHECK(run("pipeline --model /nonexistent/model.json --out-dir " + (dir / "o1").string()) ==
          4);
    // Undivisible rescale fails validation inside the pipeline.
    CHECK(run("pipeline --model " + manifest + " --rescale 50 --out-dir " +
              (dir / "o2").string()) == 2);
    CHECK(run("gen-model --kind nope --out-dir " + (dir / "o3").string()) == 2);

    // A failing stage leaves .partial artifacts behind.
    bool partial = false;
    if (fs::exists(dir / "o2"))
        for (const auto& e : fs::directory_iterator(dir / "o2"))
            partial |= e.path().string().ends_with(".partial");
    CHECK(partial);
}
