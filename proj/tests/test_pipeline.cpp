#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "holovol/pipeline.hpp"

using namespace holovol;
namespace fs = std::filesystem;

namespace {

fs::path work_root() {
    static const fs::path root = [] {
        const auto dir = fs::temp_directory_path() / "holovol_pipeline";
        fs::remove_all(dir);
        fs::create_directories(dir);
        return dir;
    }();
    return root;
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected a holovol::Error");
    return ErrorCode::contract_violation;
}

// Two droplets on a 256 px sensor; small enough to run the full pipeline
// in seconds, rich enough to exercise noise, mosaic gains, and shading.
json small_scene() {
    json j;
    j["schema_version"] = 1;
    j["fov_um"] = {286.72, 286.72};
    j["seed"] = 77;
    j["droplets"] = json::array(
        {{{"x_um", 100.0}, {"y_um", 100.0}, {"a_um", 5.5},
          {"theta0_rad", 0.5}, {"K_rad_per_s", 0.05}},
         {{"x_um", 190.0}, {"y_um", 180.0}, {"a_um", 4.5},
          {"theta0_rad", 0.62}, {"K_rad_per_s", 0.045}}});
    j["sensor"] = {{"layout", "bayer"},
                   {"channel_gains", {1.05, 0.98, 1.02, 0.95}},
                   {"shade_poly_coeffs", {1.0, 0.02, -0.015}},
                   {"shot_noise_scale", 5000.0},
                   {"bit_depth", 12}};
    return j;
}

json small_config() {
    json j;
    j["schema_version"] = 1;
    j["recon"] = {{"gs_iterations", 25}};
    j["simulate"] = {{"n_frames", 8}};
    return j;
}

// Simulates the small scene once; every case that needs a stack shares it.
struct SmallRun {
    fs::path scene_path, config_path, stack_dir;
};

const SmallRun& small_run() {
    static const SmallRun run = [] {
        SmallRun r;
        r.scene_path = work_root() / "scene.json";
        r.config_path = work_root() / "config.json";
        r.stack_dir = work_root() / "stack";
        write_json_file(r.scene_path, small_scene());
        write_json_file(r.config_path, small_config());
        run_simulate(r.scene_path, r.config_path, r.stack_dir);
        return r;
    }();
    return run;
}

} // namespace

TEST_CASE("config parse and serialize is a fixed point") {
    const PipelineConfig defaults;
    const json j0 = pipeline_config_to_json(defaults);
    REQUIRE(pipeline_config_to_json(parse_pipeline_config(j0)) == j0);

    json j = j0;
    j["optical"]["z_nominal_um"] = 800.0;
    j["recon"]["patch_size"] = 256;
    j["recon"]["support_threshold_sigma"] = 4.5;
    j["detect"]["sigma"] = 12.0;
    j["stats"]["size_range_um"] = {1.0, 25.0};
    j["io"]["frame_format"] = "raw";
    const PipelineConfig c = parse_pipeline_config(j);
    REQUIRE(c.optical.z_nominal_um == 800.0);
    REQUIRE(c.recon.patch_size == 256);
    REQUIRE(c.recon.support_threshold_sigma == 4.5);
    REQUIRE(c.detect.sigma == 12.0);
    REQUIRE(c.stats.size_max_um == 25.0);
    REQUIRE(c.io.frame_format == "raw");
    REQUIRE(pipeline_config_to_json(parse_pipeline_config(
                pipeline_config_to_json(c))) == pipeline_config_to_json(c));
}

TEST_CASE("config rejects bad values with the field named") {
    json j = pipeline_config_to_json(PipelineConfig{});
    j["schema_version"] = 99;
    REQUIRE(code_of([&] { parse_pipeline_config(j); }) ==
            ErrorCode::config_error);

    j = pipeline_config_to_json(PipelineConfig{});
    j["detect"]["sigma"] = -1.0;
    try {
        parse_pipeline_config(j);
        FAIL("expected a config complaint");
    } catch (const Error& e) {
        REQUIRE(e.code() == ErrorCode::config_error);
        REQUIRE(std::string(e.what()).find("detect.sigma") !=
                std::string::npos);
    }

    j = pipeline_config_to_json(PipelineConfig{});
    j["stats"]["trim"] = 0.6;
    REQUIRE(code_of([&] { parse_pipeline_config(j); }) ==
            ErrorCode::config_error);

    j = pipeline_config_to_json(PipelineConfig{});
    j["recon"]["patch_size"] = 100;
    REQUIRE(code_of([&] { parse_pipeline_config(j); }) ==
            ErrorCode::config_error);
}

TEST_CASE("simulate writes frames, manifest, and ground truth") {
    const auto& run = small_run();
    const StackManifest m = read_manifest(run.stack_dir);
    REQUIRE(m.count == 8);
    REQUIRE(m.width == 256);
    REQUIRE(m.height == 256);
    REQUIRE(m.layout == SensorLayout::bayer);
    for (int k = 0; k < 8; ++k)
        REQUIRE(fs::exists(run.stack_dir / frame_filename(k, "png")));
    const std::string truth =
        read_text_file(run.stack_dir / "ground_truth.csv");
    REQUIRE(std::count(truth.begin(), truth.end(), '\n') == 3);
}

TEST_CASE("simulate of an empty scene leaves a header-only truth csv") {
    json scene = small_scene();
    scene["droplets"] = json::array();
    json config = small_config();
    config["simulate"]["n_frames"] = 3;
    const auto dir = work_root() / "empty_case";
    fs::create_directories(dir);
    write_json_file(dir / "scene.json", scene);
    write_json_file(dir / "config.json", config);
    run_simulate(dir / "scene.json", dir / "config.json", dir / "stack");
    REQUIRE(read_manifest(dir / "stack").count == 3);
    REQUIRE(read_text_file(dir / "stack" / "ground_truth.csv") ==
            "id,x_um,y_um,a_um,theta0_rad,K_rad_per_s\n");
}

TEST_CASE("simulate is deterministic for a fixed seed") {
    const auto& run = small_run();
    const auto dir = work_root() / "stack_again";
    run_simulate(run.scene_path, run.config_path, dir);
    for (const char* name : {"frame_000000.png", "frame_000007.png",
                             "ground_truth.csv", "manifest.json"})
        REQUIRE(read_text_file(run.stack_dir / name) ==
                read_text_file(dir / name));
}

TEST_CASE("ground truth csv carries every droplet of a dense scene") {
    json scene;
    scene["schema_version"] = 1;
    scene["fov_um"] = {71.68, 71.68};
    scene["seed"] = 3;
    scene["droplets"] = json::array();
    for (int i = 0; i < 20; ++i)
        scene["droplets"].push_back({{"x_um", 12.0 + 12.0 * (i % 5)},
                                     {"y_um", 12.0 + 12.0 * (i / 5)},
                                     {"a_um", 1.0},
                                     {"theta0_rad", 0.4},
                                     {"K_rad_per_s", 0.05}});
    json config = small_config();
    config["simulate"]["n_frames"] = 1;
    const auto dir = work_root() / "dense_case";
    fs::create_directories(dir);
    write_json_file(dir / "scene.json", scene);
    write_json_file(dir / "config.json", config);
    run_simulate(dir / "scene.json", dir / "config.json", dir / "stack");
    const std::string truth =
        read_text_file(dir / "stack" / "ground_truth.csv");
    REQUIRE(std::count(truth.begin(), truth.end(), '\n') == 21);
    REQUIRE(truth.find("19,60,48,1,0.4,0.05\n") != std::string::npos);
}

TEST_CASE("analyze recovers both planted droplets and writes all outputs") {
    const auto& run = small_run();
    const auto out = work_root() / "out_a";
    const RunReport report =
        run_analyze(run.stack_dir, run.config_path, out);

    REQUIRE(report.n_frames == 8);
    REQUIRE(report.traces.size() >= 2);
    REQUIRE(report.particles.size() >= 2);
    REQUIRE(report.volatility_ok);
    // Every particle row references an existing trace exactly once.
    std::vector<int> ids;
    for (const auto& p : report.particles)
        ids.push_back(p.particle_id);
    std::sort(ids.begin(), ids.end());
    REQUIRE(std::adjacent_find(ids.begin(), ids.end()) == ids.end());

    for (const char* name : {"particles.csv", "traces.csv", "summary.json",
                             "histogram.csv", "size_distribution.csv",
                             "timing.json"})
        REQUIRE(fs::exists(out / name));

    const json summary = parse_json_file(out / "summary.json");
    REQUIRE(summary["n_traces"].get<size_t>() == report.traces.size());
    REQUIRE(summary["particles"].size() == report.particles.size());
    REQUIRE(summary["volatility"]["n"].get<int>() ==
            report.volatility.n);
}

TEST_CASE("analyze twice produces byte-identical results") {
    const auto& run = small_run();
    const auto out1 = work_root() / "out_d1";
    const auto out2 = work_root() / "out_d2";
    run_analyze(run.stack_dir, run.config_path, out1);
    run_analyze(run.stack_dir, run.config_path, out2);
    for (const char* name : {"particles.csv", "summary.json", "traces.csv",
                             "histogram.csv", "size_distribution.csv"})
        REQUIRE(read_text_file(out1 / name) == read_text_file(out2 / name));
}

TEST_CASE("streamed analysis matches the in-memory stage chain") {
    const auto& run = small_run();
    const auto out = work_root() / "out_direct";
    const RunReport report =
        run_analyze(run.stack_dir, run.config_path, out);

    const PipelineConfig config =
        parse_pipeline_config(parse_json_file(run.config_path));
    const auto raw = read_frame_stack(run.stack_dir);
    std::vector<CorrectedFrame> corrected;
    for (const auto& f : raw)
        corrected.push_back(correct_frame(f));
    const auto fields =
        reconstruct_stack(corrected, config.recon, config.optical);
    std::vector<FrameMask> masks;
    std::vector<double> timestamps;
    for (size_t k = 0; k < fields.size(); ++k) {
        masks.push_back(threshold_mask(fields[k], static_cast<int>(k),
                                       config.detect.sigma));
        timestamps.push_back(fields[k].timestamp_s);
    }
    const auto traces =
        extract_traces(masks, config.detect.min_overlap,
                       config.detect.min_trace_frames, &timestamps,
                       config.optical.recon_pitch_um());
    REQUIRE(traces.size() == report.traces.size());
    const auto stacks = crop_sequences(traces, fields);
    REQUIRE(stacks.size() >= report.particles.size());

    for (const auto& row : report.particles) {
        bool found = false;
        for (const auto& stack : stacks) {
            if (stack.trace_id != row.particle_id)
                continue;
            const ParticleResult res = analyze_crop_stack(
                stack, config.optical, config.detect.min_trace_frames);
            REQUIRE(res.fit.k_rad_per_s ==
                    Catch::Approx(row.k_rad_per_s).margin(1e-12));
            REQUIRE(res.fit.theta0_rad ==
                    Catch::Approx(row.theta0_rad).margin(1e-12));
            REQUIRE(res.diameter_um ==
                    Catch::Approx(row.diameter_um).margin(1e-12));
            found = true;
        }
        REQUIRE(found);
    }
}

TEST_CASE("blank stack reports no content but leaves valid empty outputs") {
    const auto dir = work_root() / "blank_stack";
    std::vector<RawFrame> frames(6);
    for (auto& f : frames) {
        f.pixels = RealGrid(64, 64, 1000.0);
        f.layout = SensorLayout::mono;
    }
    write_frame_stack(dir, frames, 2.0);
    const auto out = work_root() / "blank_out";
    REQUIRE(code_of([&] {
                run_analyze(dir, small_run().config_path, out);
            }) == ErrorCode::no_content);
    REQUIRE(read_text_file(out / "particles.csv") ==
            "particle_id,x_um,y_um,n_frames,theta0_rad,K_rad_per_s,r2,D_um,"
            "first_t_s,last_t_s\n");
    const json summary = parse_json_file(out / "summary.json");
    REQUIRE(summary["n_traces"].get<int>() == 0);
    REQUIRE(summary["volatility"].is_null());
}

TEST_CASE("analyze refuses identical input and output directories") {
    const auto& run = small_run();
    REQUIRE(code_of([&] {
                run_analyze(run.stack_dir, run.config_path, run.stack_dir);
            }) == ErrorCode::config_error);
}

TEST_CASE("analyze refuses a stack shorter than the trace minimum") {
    json scene = small_scene();
    json config = small_config();
    config["simulate"]["n_frames"] = 3;
    const auto dir = work_root() / "short_case";
    fs::create_directories(dir);
    write_json_file(dir / "scene.json", scene);
    write_json_file(dir / "config.json", config);
    run_simulate(dir / "scene.json", dir / "config.json", dir / "stack");
    REQUIRE(code_of([&] {
                run_analyze(dir / "stack", dir / "config.json",
                            dir / "out");
            }) == ErrorCode::insufficient_data);
}

TEST_CASE("report of a summary against itself is a null result") {
    const auto dir = work_root() / "report_self";
    fs::create_directories(dir);
    json summary;
    summary["particles"] = json::array({{{"K_rad_per_s", 0.040}},
                                        {{"K_rad_per_s", 0.050}},
                                        {{"K_rad_per_s", 0.060}}});
    write_json_file(dir / "s.json", summary);
    const json out =
        run_report(dir / "s.json", dir / "s.json", TTestMode::welch);
    REQUIRE(out["t"].get<double>() == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(out["p"].get<double>() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE_FALSE(out["significant"].get<bool>());
    REQUIRE(out["n_a"].get<int>() == 3);
    REQUIRE(out["delta_mu"].get<double>() ==
            Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("report rejects malformed summaries") {
    const auto dir = work_root() / "report_bad";
    fs::create_directories(dir);
    json three;
    three["particles"] = json::array({{{"K_rad_per_s", 0.040}},
                                      {{"K_rad_per_s", 0.050}},
                                      {{"K_rad_per_s", 0.060}}});
    json two;
    two["particles"] = json::array({{{"K_rad_per_s", 0.041}},
                                    {{"K_rad_per_s", 0.051}}});
    json no_k;
    no_k["particles"] = json::array({{{"id", 0}}});
    write_json_file(dir / "three.json", three);
    write_json_file(dir / "two.json", two);
    write_json_file(dir / "no_k.json", no_k);

    REQUIRE(code_of([&] {
                run_report(dir / "three.json", dir / "two.json",
                           TTestMode::paired);
            }) == ErrorCode::schema_error);
    try {
        run_report(dir / "three.json", dir / "no_k.json", TTestMode::welch);
        FAIL("expected a schema complaint");
    } catch (const Error& e) {
        REQUIRE(e.code() == ErrorCode::schema_error);
        REQUIRE(std::string(e.what()).find("K_rad_per_s") !=
                std::string::npos);
    }
}
