// Command line front end: simulate renders a synthetic stack, analyze runs
// the full recovery pipeline on one, report compares two analysis summaries.
// Failures print a one-line JSON error record on stderr and exit with a
// stable code per failure class.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "holovol/pipeline.hpp"

namespace {

int exit_code_for(holovol::ErrorCode code) {
    using EC = holovol::ErrorCode;
    switch (code) {
    case EC::config_error:
    case EC::schema_error:
        return 2;
    case EC::io_error:
        return 3;
    case EC::no_content:
        return 4;
    case EC::contract_violation:
        return 5;
    default:
        return 1;
    }
}

void print_error_record(const char* code, const std::string& message) {
    holovol::json j;
    j["error"] = code;
    j["message"] = message;
    std::fprintf(stderr, "%s\n", j.dump().c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"volatility measurement from time-lapsed inline holograms"};
    app.require_subcommand(1);

    std::string scene_path, config_path, input_dir, out_dir;
    std::string a_path, b_path, mode_name = "welch";
    bool dump_debug = false;

    auto* sim =
        app.add_subcommand("simulate", "render a synthetic hologram stack");
    sim->add_option("--scene", scene_path, "scene JSON file")->required();
    sim->add_option("--config", config_path, "pipeline config JSON file")
        ->required();
    sim->add_option("--out", out_dir, "output directory")->required();

    auto* ana = app.add_subcommand(
        "analyze", "recover per-droplet volatility from a stack");
    ana->add_option("--in", input_dir, "input stack directory")->required();
    ana->add_option("--config", config_path, "pipeline config JSON file")
        ->required();
    ana->add_option("--out", out_dir, "output directory")->required();
    ana->add_flag("--dump-debug", dump_debug,
                  "write per-frame amplitude and mask images");

    auto* rep =
        app.add_subcommand("report", "compare two analysis summaries");
    rep->add_option("--a", a_path, "first summary.json")->required();
    rep->add_option("--b", b_path, "second summary.json")->required();
    rep->add_option("--mode", mode_name, "paired or welch (default welch)")
        ->check(CLI::IsMember({"paired", "welch"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        if (rc == 0)
            return 0;  // --help and friends
        print_error_record("config_error", e.what());
        return 2;
    }

    try {
        if (sim->parsed()) {
            holovol::run_simulate(scene_path, config_path, out_dir);
            std::printf("wrote stack to %s\n", out_dir.c_str());
        } else if (ana->parsed()) {
            const auto report = holovol::run_analyze(input_dir, config_path,
                                                     out_dir, dump_debug);
            std::printf("%zu traces, %zu particles, %zu warnings\n",
                        report.traces.size(), report.particles.size(),
                        report.warnings.size());
            if (report.volatility_ok)
                std::printf("mu_K = %.6g rad/s, sigma_K = %.6g rad/s (n = %d)\n",
                            report.volatility.mu_k, report.volatility.sigma_k,
                            report.volatility.n);
            std::printf("results in %s\n", out_dir.c_str());
        } else if (rep->parsed()) {
            const auto mode = mode_name == "paired"
                                  ? holovol::TTestMode::paired
                                  : holovol::TTestMode::welch;
            const auto comparison =
                holovol::run_report(a_path, b_path, mode);
            std::printf("%s\n", comparison.dump(2).c_str());
        }
    } catch (const holovol::Error& e) {
        print_error_record(holovol::error_code_name(e.code()), e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        print_error_record("contract_violation", e.what());
        return 5;
    }
    return 0;
}
