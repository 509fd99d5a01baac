#pragma once

// Orchestration: configuration aggregate, the simulate / analyze / report
// entry points, and the result files they write. The analyzer streams the
// stack twice: pass A reduces each frame to a detection mask plus small
// complex crops around each detected component, pass B links traces and
// quantifies them from the stored crops. A full stack of recovered fields
// never exists in memory, which is what keeps kilo-frame runs inside a
// few hundred MB.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "holovol/detect.hpp"
#include "holovol/errors.hpp"
#include "holovol/io.hpp"
#include "holovol/preprocess.hpp"
#include "holovol/quantify.hpp"
#include "holovol/reconstruct.hpp"
#include "holovol/simulate.hpp"
#include "holovol/stats.hpp"

namespace holovol {

// ---------------------------------------------------------------------------
// Configuration

struct DetectSettings {
    double sigma = 5.0;
    double min_overlap = 0.3;
    int min_trace_frames = 5;

    void validate() const {
        require(sigma > 0 && std::isfinite(sigma), ErrorCode::config_error,
                "detect.sigma must be positive");
        require(min_overlap > 0 && min_overlap <= 1.0,
                ErrorCode::config_error,
                "detect.min_overlap must be in (0, 1]");
        require(min_trace_frames >= 2, ErrorCode::config_error,
                "detect.min_trace_frames must be at least 2");
    }
};

struct StatsSettings {
    double trim = 0.01;
    int bins_per_decade = 16;
    double size_min_um = 0.5;
    double size_max_um = 19.8;

    void validate() const {
        require(trim >= 0 && trim < 0.5, ErrorCode::config_error,
                "stats.trim must be in [0, 0.5)");
        require(bins_per_decade >= 1, ErrorCode::config_error,
                "stats.bins_per_decade must be at least 1");
        require(size_min_um > 0 && size_max_um > size_min_um,
                ErrorCode::config_error,
                "stats.size_range_um must be ordered and positive");
    }
};

struct SimulateSettings {
    int n_frames = 120;

    void validate() const {
        require(n_frames >= 1, ErrorCode::config_error,
                "simulate.n_frames must be at least 1");
    }
};

struct IoSettings {
    std::string input_dir;
    std::string output_dir;
    bool dump_debug = false;
    std::string frame_format = "png";

    void validate() const {
        require(frame_format == "png" || frame_format == "raw",
                ErrorCode::config_error,
                "io.frame_format must be \"png\" or \"raw\"");
    }
};

struct PipelineConfig {
    OpticalConfig optical;
    ReconSettings recon;
    DetectSettings detect;
    StatsSettings stats;
    SimulateSettings simulate;
    IoSettings io;

    void validate() const {
        // The nested optics/recon validators flag bad values as invalid
        // input; here they arrived from a config file, so re-tag them.
        try {
            optical.validate();
            recon.validate();
        } catch (const Error& e) {
            fail(ErrorCode::config_error, e.what());
        }
        detect.validate();
        stats.validate();
        simulate.validate();
        io.validate();
    }
};

inline PipelineConfig parse_pipeline_config(const json& j) {
    using namespace jsondetail;
    check_schema_version(j, "config");
    PipelineConfig c;
    if (j.contains("optical")) {
        const json& o = need(j, "optical", "config");
        const std::string ctx = "config.optical";
        c.optical.wavelength_um =
            number_or(o, "wavelength_um", ctx, c.optical.wavelength_um);
        c.optical.sensor_pitch_um =
            number_or(o, "sensor_pitch_um", ctx, c.optical.sensor_pitch_um);
        c.optical.delta_n = number_or(o, "delta_n", ctx, c.optical.delta_n);
        c.optical.z_nominal_um =
            number_or(o, "z_nominal_um", ctx, c.optical.z_nominal_um);
        c.optical.frame_rate_hz =
            number_or(o, "frame_rate_hz", ctx, c.optical.frame_rate_hz);
        c.optical.upsample_factor = static_cast<int>(
            int_or(o, "upsample_factor", ctx, c.optical.upsample_factor));
        c.optical.boundary_pad =
            number_or(o, "boundary_pad", ctx, c.optical.boundary_pad);
    }
    if (j.contains("recon")) {
        const json& r = need(j, "recon", "config");
        const std::string ctx = "config.recon";
        c.recon.z_min_um = number_or(r, "z_min_um", ctx, c.recon.z_min_um);
        c.recon.z_max_um = number_or(r, "z_max_um", ctx, c.recon.z_max_um);
        c.recon.z_step_um = number_or(r, "z_step_um", ctx, c.recon.z_step_um);
        c.recon.gs_iterations = static_cast<int>(
            int_or(r, "gs_iterations", ctx, c.recon.gs_iterations));
        c.recon.gs_tolerance =
            number_or(r, "gs_tolerance", ctx, c.recon.gs_tolerance);
        c.recon.patch_size = static_cast<int>(
            int_or(r, "patch_size", ctx, c.recon.patch_size));
        c.recon.support_threshold_sigma =
            number_or(r, "support_threshold_sigma", ctx, c.recon.support_threshold_sigma);
    }
    if (j.contains("detect")) {
        const json& d = need(j, "detect", "config");
        const std::string ctx = "config.detect";
        c.detect.sigma = number_or(d, "sigma", ctx, c.detect.sigma);
        c.detect.min_overlap =
            number_or(d, "min_overlap", ctx, c.detect.min_overlap);
        c.detect.min_trace_frames = static_cast<int>(
            int_or(d, "min_trace_frames", ctx, c.detect.min_trace_frames));
    }
    if (j.contains("stats")) {
        const json& s = need(j, "stats", "config");
        const std::string ctx = "config.stats";
        c.stats.trim = number_or(s, "trim", ctx, c.stats.trim);
        c.stats.bins_per_decade = static_cast<int>(
            int_or(s, "bins_per_decade", ctx, c.stats.bins_per_decade));
        if (s.contains("size_range_um")) {
            const json& r = s["size_range_um"];
            require(r.is_array() && r.size() == 2 && r[0].is_number() &&
                        r[1].is_number(),
                    ErrorCode::config_error,
                    "config.stats.size_range_um must be a [min, max] pair");
            c.stats.size_min_um = r[0].get<double>();
            c.stats.size_max_um = r[1].get<double>();
        }
    }
    if (j.contains("simulate")) {
        const json& s = need(j, "simulate", "config");
        c.simulate.n_frames = static_cast<int>(
            int_or(s, "n_frames", "config.simulate", c.simulate.n_frames));
    }
    if (j.contains("io")) {
        const json& o = need(j, "io", "config");
        const std::string ctx = "config.io";
        c.io.input_dir = string_or(o, "input_dir", ctx, c.io.input_dir);
        c.io.output_dir = string_or(o, "output_dir", ctx, c.io.output_dir);
        c.io.dump_debug = bool_or(o, "dump_debug", ctx, c.io.dump_debug);
        c.io.frame_format =
            string_or(o, "frame_format", ctx, c.io.frame_format);
    }
    c.validate();
    return c;
}

inline json pipeline_config_to_json(const PipelineConfig& c) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["optical"] = {{"wavelength_um", c.optical.wavelength_um},
                    {"sensor_pitch_um", c.optical.sensor_pitch_um},
                    {"delta_n", c.optical.delta_n},
                    {"z_nominal_um", c.optical.z_nominal_um},
                    {"frame_rate_hz", c.optical.frame_rate_hz},
                    {"upsample_factor", c.optical.upsample_factor},
                    {"boundary_pad", c.optical.boundary_pad}};
    j["recon"] = {{"z_min_um", c.recon.z_min_um},
                  {"z_max_um", c.recon.z_max_um},
                  {"z_step_um", c.recon.z_step_um},
                  {"gs_iterations", c.recon.gs_iterations},
                  {"gs_tolerance", c.recon.gs_tolerance},
                  {"patch_size", c.recon.patch_size},
                  {"support_threshold_sigma", c.recon.support_threshold_sigma}};
    j["detect"] = {{"sigma", c.detect.sigma},
                   {"min_overlap", c.detect.min_overlap},
                   {"min_trace_frames", c.detect.min_trace_frames}};
    j["stats"] = {{"trim", c.stats.trim},
                  {"bins_per_decade", c.stats.bins_per_decade},
                  {"size_range_um", {c.stats.size_min_um, c.stats.size_max_um}}};
    j["simulate"] = {{"n_frames", c.simulate.n_frames}};
    j["io"] = {{"input_dir", c.io.input_dir},
               {"output_dir", c.io.output_dir},
               {"dump_debug", c.io.dump_debug},
               {"frame_format", c.io.frame_format}};
    return j;
}

// ---------------------------------------------------------------------------
// Report types

struct ParticleRow {
    int particle_id = 0;
    double x_um = 0.0;
    double y_um = 0.0;
    int n_frames = 0;
    double theta0_rad = 0.0;
    double k_rad_per_s = 0.0;
    double r_squared = 0.0;
    double diameter_um = 0.0;
    double first_t_s = 0.0;
    double last_t_s = 0.0;
};

struct StageTiming {
    std::string name;
    double seconds = 0.0;
};

struct RunReport {
    json config_echo;
    int n_frames = 0;
    std::vector<ParticleTrace> traces;
    std::vector<ParticleRow> particles;
    VolatilitySummary volatility;
    bool volatility_ok = false;
    SizeDistribution sizes;
    double mode_diameter_um = 0.0;  // 0 when no mode could be fitted
    std::vector<std::string> warnings;
    std::vector<StageTiming> timing;
};

// ---------------------------------------------------------------------------
// Result files

inline void write_particles_csv(const std::filesystem::path& path,
                                const std::vector<ParticleRow>& rows) {
    std::string text =
        "particle_id,x_um,y_um,n_frames,theta0_rad,K_rad_per_s,r2,D_um,"
        "first_t_s,last_t_s\n";
    for (const auto& r : rows) {
        text += std::to_string(r.particle_id) + "," + csv_num(r.x_um) + "," +
                csv_num(r.y_um) + "," + std::to_string(r.n_frames) + "," +
                csv_num(r.theta0_rad) + "," + csv_num(r.k_rad_per_s) + "," +
                csv_num(r.r_squared) + "," + csv_num(r.diameter_um) + "," +
                csv_num(r.first_t_s) + "," + csv_num(r.last_t_s) + "\n";
    }
    write_text_file(path, text);
}

inline void write_traces_csv(const std::filesystem::path& path,
                             const std::vector<ParticleTrace>& traces) {
    std::string text = "id,first_frame,last_frame,x_um,y_um,area_px\n";
    for (const auto& t : traces) {
        std::vector<int> unioned;
        for (const auto& tf : t.frames)
            unioned.insert(unioned.end(), tf.region.begin(),
                           tf.region.end());
        std::sort(unioned.begin(), unioned.end());
        unioned.erase(std::unique(unioned.begin(), unioned.end()),
                      unioned.end());
        text += std::to_string(t.id) + "," +
                std::to_string(t.frames.front().frame_index) + "," +
                std::to_string(t.frames.back().frame_index) + "," +
                csv_num(t.centroid_x_um) + "," + csv_num(t.centroid_y_um) +
                "," + std::to_string(unioned.size()) + "\n";
    }
    write_text_file(path, text);
}

inline void write_histogram_csv(const std::filesystem::path& path,
                                const Histogram& h) {
    std::string text = "bin_lo,bin_hi,count\n";
    for (size_t i = 0; i < h.counts.size(); ++i)
        text += csv_num(h.edges[i]) + "," + csv_num(h.edges[i + 1]) + "," +
                std::to_string(h.counts[i]) + "\n";
    write_text_file(path, text);
}

inline void write_size_distribution_csv(const std::filesystem::path& path,
                                        const SizeDistribution& d) {
    std::string text = "bin_lo_um,bin_hi_um,count,dn_dlogdp\n";
    for (size_t i = 0; i < d.counts.size(); ++i)
        text += csv_num(d.edges_um[i]) + "," + csv_num(d.edges_um[i + 1]) +
                "," + std::to_string(d.counts[i]) + "," +
                csv_num(d.dn_dlogdp[i]) + "\n";
    write_text_file(path, text);
}

inline json summary_to_json(const RunReport& report) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["n_frames"] = report.n_frames;
    j["n_traces"] = report.traces.size();
    j["particles"] = json::array();
    for (const auto& r : report.particles)
        j["particles"].push_back({{"id", r.particle_id},
                                  {"x_um", r.x_um},
                                  {"y_um", r.y_um},
                                  {"n_frames", r.n_frames},
                                  {"theta0_rad", r.theta0_rad},
                                  {"K_rad_per_s", r.k_rad_per_s},
                                  {"r2", r.r_squared},
                                  {"D_um", r.diameter_um},
                                  {"first_t_s", r.first_t_s},
                                  {"last_t_s", r.last_t_s}});
    if (report.volatility_ok) {
        j["volatility"] = {
            {"n", report.volatility.n},
            {"mu_K_rad_per_s", report.volatility.mu_k},
            {"sigma_K_rad_per_s", report.volatility.sigma_k},
            {"trim", report.volatility.trim},
            {"histogram",
             {{"edges", report.volatility.histogram.edges},
              {"counts", report.volatility.histogram.counts}}}};
    } else {
        j["volatility"] = nullptr;
    }
    if (!report.sizes.counts.empty()) {
        j["size_distribution"] = {
            {"edges_um", report.sizes.edges_um},
            {"counts", report.sizes.counts},
            {"dn_dlogdp", report.sizes.dn_dlogdp},
            {"log_bin_width", report.sizes.log_bin_width},
            {"overflow", report.sizes.overflow},
            {"mode_diameter_um", report.mode_diameter_um}};
    } else {
        j["size_distribution"] = nullptr;
    }
    j["tests"] = json::array();
    j["warnings"] = report.warnings;
    return j;
}

// ---------------------------------------------------------------------------
// simulate

// Renders and writes frames one at a time with the same per-frame seeds and
// timestamps as simulate_sequence, so the streaming path and the in-memory
// path produce identical files.
inline void run_simulate(const std::filesystem::path& scene_path,
                         const std::filesystem::path& config_path,
                         const std::filesystem::path& out_dir) {
    const PipelineConfig config =
        parse_pipeline_config(parse_json_file(config_path));
    const Scene scene = parse_scene(parse_json_file(scene_path));
    scene.validate();

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);

    StackManifest m;
    m.format = config.io.frame_format;
    m.frame_rate_hz = config.optical.frame_rate_hz;
    for (int k = 0; k < config.simulate.n_frames; ++k) {
        const double t = k / config.optical.frame_rate_hz;
        const auto caps = evolve_scene(scene, t);
        RawFrame f = synthesize_hologram(caps, scene, config.optical,
                                         detail::mix_seed(scene.seed, k));
        f.timestamp_s = t;
        if (k == 0) {
            m.width = f.pixels.cols();
            m.height = f.pixels.rows();
            m.layout = f.layout;
            m.bit_depth = f.bit_depth;
        }
        const auto path = out_dir / frame_filename(k, m.format);
        if (m.format == "png")
            write_png16(path, f.pixels);
        else
            write_raw16(path, f.pixels);
    }
    m.count = config.simulate.n_frames;
    write_manifest(out_dir, m);
    write_ground_truth_csv(out_dir / "ground_truth.csv", scene);
}

// ---------------------------------------------------------------------------
// analyze

namespace pipedetail {

// Complex crop around one detected component, stored between passes.
struct StoredCrop {
    int r0 = 0, c0 = 0;
    ComplexGrid data;
};

// Extra margin kept around each component beyond the final crop pad, so the
// fixed trace window (union bounding box + pad) is almost always covered by
// at least one stored crop even as the mask wanders a little between frames.
inline constexpr int kStoredCropSlack = 8;

inline bool frame_is_blank(const RealGrid& pixels) {
    double s = 0.0, s2 = 0.0;
    for (size_t i = 0; i < pixels.size(); ++i) {
        s += pixels[i];
        s2 += pixels[i] * pixels[i];
    }
    const double n = static_cast<double>(pixels.size());
    const double var = std::max(0.0, s2 / n - (s / n) * (s / n));
    return std::sqrt(var) < 1e-9;
}

// Rebuilds the fixed-window crop stack of one trace from the per-frame
// stored crops, using the same window arithmetic as crop_sequences. Window
// cells no stored crop covers are filled with the unit background the
// phase normalization guarantees, which leaves the phase map flat there.
inline CropStack assemble_crop_stack(
    const ParticleTrace& trace,
    const std::vector<std::vector<StoredCrop>>& crops_per_frame, int rows,
    int cols, int pad) {
    int r_min = rows, r_max = -1, c_min = cols, c_max = -1;
    for (const auto& tf : trace.frames)
        for (int idx : tf.region) {
            const int r = idx / cols, c = idx % cols;
            r_min = std::min(r_min, r);
            r_max = std::max(r_max, r);
            c_min = std::min(c_min, c);
            c_max = std::max(c_max, c);
        }
    CropStack stack;
    stack.trace_id = trace.id;
    stack.r0 = std::max(0, r_min - pad);
    stack.c0 = std::max(0, c_min - pad);
    const int r1 = std::min(rows - 1, r_max + pad);
    const int c1 = std::min(cols - 1, c_max + pad);
    stack.rows = r1 - stack.r0 + 1;
    stack.cols = c1 - stack.c0 + 1;

    for (const auto& tf : trace.frames) {
        ComplexGrid crop(stack.rows, stack.cols,
                         std::complex<double>(1.0, 0.0));
        for (const auto& sc : crops_per_frame[tf.frame_index]) {
            const int rr0 = std::max(stack.r0, sc.r0);
            const int cc0 = std::max(stack.c0, sc.c0);
            const int rr1 = std::min(stack.r0 + stack.rows,
                                     sc.r0 + static_cast<int>(sc.data.rows()));
            const int cc1 = std::min(stack.c0 + stack.cols,
                                     sc.c0 + static_cast<int>(sc.data.cols()));
            for (int r = rr0; r < rr1; ++r)
                for (int c = cc0; c < cc1; ++c)
                    crop(r - stack.r0, c - stack.c0) =
                        sc.data(r - sc.r0, c - sc.c0);
        }
        stack.crops.push_back(std::move(crop));
        std::vector<int> local;
        local.reserve(tf.region.size());
        for (int idx : tf.region) {
            const int r = idx / cols - stack.r0;
            const int c = idx % cols - stack.c0;
            local.push_back(r * stack.cols + c);
        }
        stack.regions.push_back(std::move(local));
        stack.timestamps.push_back(tf.timestamp_s);
        stack.frame_indices.push_back(tf.frame_index);
    }
    return stack;
}

inline void dump_debug_images(const std::filesystem::path& debug_dir,
                              int frame_index, const RecoveredField& rec,
                              const MaskGrid& mask) {
    const auto& grid = rec.field.grid;
    RealGrid amp(grid.rows(), grid.cols());
    double peak = 0.0;
    for (size_t i = 0; i < grid.size(); ++i) {
        amp[i] = std::abs(grid[i]);
        peak = std::max(peak, amp[i]);
    }
    const double scale = peak > 0.0 ? 65535.0 / peak : 0.0;
    for (size_t i = 0; i < amp.size(); ++i)
        amp[i] *= scale;
    RealGrid mask_img(mask.rows(), mask.cols());
    for (size_t i = 0; i < mask.size(); ++i)
        mask_img[i] = mask[i] ? 65535.0 : 0.0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "amp_%06d.png", frame_index);
    write_png16(debug_dir / buf, amp);
    std::snprintf(buf, sizeof buf, "mask_%06d.png", frame_index);
    write_png16(debug_dir / buf, mask_img);
}

class StageClock {
  public:
    void add(std::vector<StageTiming>& out, const std::string& name) {
        const auto now = std::chrono::steady_clock::now();
        out.push_back(
            {name, std::chrono::duration<double>(now - mark_).count()});
        mark_ = now;
    }

  private:
    std::chrono::steady_clock::time_point mark_ =
        std::chrono::steady_clock::now();
};

} // namespace pipedetail

inline RunReport run_analyze(const std::filesystem::path& input_dir,
                             const std::filesystem::path& config_path,
                             const std::filesystem::path& out_dir,
                             bool dump_debug = false) {
    const auto t_start = std::chrono::steady_clock::now();
    pipedetail::StageClock clock;

    PipelineConfig config =
        parse_pipeline_config(parse_json_file(config_path));
    config.io.dump_debug = config.io.dump_debug || dump_debug;
    require(std::filesystem::weakly_canonical(input_dir) !=
                std::filesystem::weakly_canonical(out_dir),
            ErrorCode::config_error,
            "input and output directories must differ");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (config.io.dump_debug)
        std::filesystem::create_directories(out_dir / "debug", ec);

    const StackManifest manifest = read_manifest(input_dir);
    require(manifest.count >= config.detect.min_trace_frames,
            ErrorCode::insufficient_data,
            "stack has fewer frames than detect.min_trace_frames");

    RunReport report;
    report.config_echo = pipeline_config_to_json(config);
    report.n_frames = manifest.count;
    clock.add(report.timing, "setup");

    // Pass A: per frame, correct, reconstruct at the shared focus, threshold,
    // and keep only the mask and the complex crops around each component.
    // Blank frames reconstruct to a constant field whose robust deviation is
    // zero, so no pixel can clear the threshold; they take the shortcut to
    // an empty mask without paying for reconstruction. Frames the shade
    // corrector rejects are logged and treated the same way.
    const int urows =
        static_cast<int>(manifest.height) * config.optical.upsample_factor;
    const int ucols =
        static_cast<int>(manifest.width) * config.optical.upsample_factor;
    std::vector<FrameMask> masks;
    masks.reserve(manifest.count);
    std::vector<std::vector<pipedetail::StoredCrop>> crops_per_frame(
        manifest.count);
    std::vector<double> timestamps(manifest.count, 0.0);
    double z_shared = 0.0;
    bool focused = false;
    double read_s = 0, correct_s = 0, reconstruct_s = 0, detect_s = 0;

    for (int k = 0; k < manifest.count; ++k) {
        auto t0 = std::chrono::steady_clock::now();
        const auto frame_path =
            input_dir / frame_filename(k, manifest.format);
        require(std::filesystem::exists(frame_path), ErrorCode::io_error,
                "missing frame " + frame_path.string());
        RawFrame raw;
        raw.pixels = manifest.format == "png"
                         ? read_png16(frame_path)
                         : read_raw16(frame_path, manifest.height,
                                      manifest.width);
        require(raw.pixels.rows() == manifest.height &&
                    raw.pixels.cols() == manifest.width,
                ErrorCode::io_error,
                frame_path.string() + " does not match the manifest size");
        raw.timestamp_s = static_cast<double>(k) / manifest.frame_rate_hz;
        raw.layout = manifest.layout;
        raw.bit_depth = manifest.bit_depth;
        timestamps[k] = raw.timestamp_s;
        auto t1 = std::chrono::steady_clock::now();
        read_s += std::chrono::duration<double>(t1 - t0).count();

        CorrectedFrame corrected;
        bool usable = true;
        try {
            corrected = correct_frame(raw);
        } catch (const Error& e) {
            report.warnings.push_back("frame " + std::to_string(k) +
                                      " skipped: " + e.what());
            usable = false;
        }
        auto t2 = std::chrono::steady_clock::now();
        correct_s += std::chrono::duration<double>(t2 - t1).count();

        if (!usable || pipedetail::frame_is_blank(corrected.pixels)) {
            masks.push_back({MaskGrid(urows, ucols, false), k});
            continue;
        }

        if (!focused) {
            z_shared = autofocus(corrected, config.recon, config.optical);
            focused = true;
        }
        const RecoveredField rec =
            recover_frame(corrected, z_shared, config.recon, config.optical);
        auto t3 = std::chrono::steady_clock::now();
        reconstruct_s += std::chrono::duration<double>(t3 - t2).count();

        FrameMask fm = threshold_mask(rec, k, config.detect.sigma);
        const auto comps = detail::label_components(fm.mask);
        const int margin = 16 + pipedetail::kStoredCropSlack;
        for (const auto& comp : comps) {
            pipedetail::StoredCrop sc;
            sc.r0 = std::max(0, comp.r_min - margin);
            sc.c0 = std::max(0, comp.c_min - margin);
            const int r1 = std::min(urows - 1, comp.r_max + margin);
            const int c1 = std::min(ucols - 1, comp.c_max + margin);
            sc.data = grid_crop(rec.field.grid, sc.r0, sc.c0,
                                r1 - sc.r0 + 1, c1 - sc.c0 + 1);
            crops_per_frame[k].push_back(std::move(sc));
        }
        if (config.io.dump_debug)
            pipedetail::dump_debug_images(out_dir / "debug", k, rec,
                                          fm.mask);
        masks.push_back(std::move(fm));
        detect_s +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                          t3)
                .count();
    }
    report.timing.push_back({"read", read_s});
    report.timing.push_back({"correct", correct_s});
    report.timing.push_back({"reconstruct", reconstruct_s});
    report.timing.push_back({"threshold", detect_s});
    clock = pipedetail::StageClock();

    if (!focused) {
        // Nothing in the whole stack; still leave well-formed empty outputs
        // behind before reporting no content.
        write_particles_csv(out_dir / "particles.csv", {});
        write_traces_csv(out_dir / "traces.csv", {});
        report.sizes = size_distribution({}, config.stats.size_min_um,
                                         config.stats.size_max_um,
                                         config.stats.bins_per_decade);
        report.warnings.push_back("no usable frames in the stack");
        write_json_file(out_dir / "summary.json", summary_to_json(report));
        fail(ErrorCode::no_content, "every frame in the stack is blank");
    }

    // Pass B: link masks into traces and quantify each trace from the
    // stored crops.
    report.traces = extract_traces(masks, config.detect.min_overlap,
                                   config.detect.min_trace_frames,
                                   &timestamps,
                                   config.optical.recon_pitch_um());
    clock.add(report.timing, "link");

    std::vector<double> k_values;
    std::vector<double> diameters;
    for (const auto& trace : report.traces) {
        bool empty_union = true;
        for (const auto& tf : trace.frames)
            if (!tf.region.empty())
                empty_union = false;
        if (empty_union) {
            report.warnings.push_back("trace " + std::to_string(trace.id) +
                                      " skipped: empty region union");
            continue;
        }
        const CropStack stack = pipedetail::assemble_crop_stack(
            trace, crops_per_frame, urows, ucols, 16);
        try {
            ParticleResult res = analyze_crop_stack(
                stack, config.optical, config.detect.min_trace_frames);
            for (const auto& w : res.warnings)
                report.warnings.push_back(
                    "trace " + std::to_string(trace.id) + ": " + w);
            ParticleRow row;
            row.particle_id = trace.id;
            row.x_um = trace.centroid_x_um;
            row.y_um = trace.centroid_y_um;
            row.n_frames = res.fit.n_frames;
            row.theta0_rad = res.fit.theta0_rad;
            row.k_rad_per_s = res.fit.k_rad_per_s;
            row.r_squared = res.fit.r_squared;
            row.diameter_um = res.diameter_um;
            row.first_t_s = trace.frames.front().timestamp_s;
            row.last_t_s = trace.frames.back().timestamp_s;
            report.particles.push_back(row);
            k_values.push_back(row.k_rad_per_s);
            diameters.push_back(row.diameter_um);
        } catch (const Error& e) {
            report.warnings.push_back("trace " + std::to_string(trace.id) +
                                      " skipped: " + e.what());
        }
    }
    clock.add(report.timing, "quantify");

    if (k_values.size() >= 2) {
        report.volatility = fit_gaussian(k_values, config.stats.trim);
        report.volatility_ok = true;
    } else {
        report.warnings.push_back(
            "too few particles for a volatility summary");
    }
    report.sizes = size_distribution(diameters, config.stats.size_min_um,
                                     config.stats.size_max_um,
                                     config.stats.bins_per_decade);
    try {
        report.mode_diameter_um = fit_lognormal(report.sizes);
    } catch (const Error&) {
        report.warnings.push_back(
            "too few occupied size bins for a mode diameter");
    }
    clock.add(report.timing, "stats");

    write_particles_csv(out_dir / "particles.csv", report.particles);
    write_traces_csv(out_dir / "traces.csv", report.traces);
    write_json_file(out_dir / "summary.json", summary_to_json(report));
    if (report.volatility_ok)
        write_histogram_csv(out_dir / "histogram.csv",
                            report.volatility.histogram);
    else
        write_text_file(out_dir / "histogram.csv", "bin_lo,bin_hi,count\n");
    write_size_distribution_csv(out_dir / "size_distribution.csv",
                                report.sizes);
    clock.add(report.timing, "write");

    // Wall-clock timing goes to its own file so summary.json stays
    // byte-identical across reruns.
    report.timing.push_back(
        {"total", std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t_start)
                      .count()});
    json jt;
    jt["schema_version"] = kSchemaVersion;
    for (const auto& st : report.timing)
        jt["stages"].push_back({{"name", st.name}, {"seconds", st.seconds}});
    write_json_file(out_dir / "timing.json", jt);
    return report;
}

// ---------------------------------------------------------------------------
// report

inline json run_report(const std::filesystem::path& summary_a,
                       const std::filesystem::path& summary_b,
                       TTestMode mode) {
    const auto load_k = [](const std::filesystem::path& path,
                           const char* which) {
        const json j = parse_json_file(path);
        require(j.contains("particles") && j["particles"].is_array(),
                ErrorCode::schema_error,
                std::string(which) + " summary has no particles table");
        std::vector<double> ks;
        const auto& arr = j["particles"];
        for (size_t i = 0; i < arr.size(); ++i) {
            require(arr[i].is_object() && arr[i].contains("K_rad_per_s") &&
                        arr[i]["K_rad_per_s"].is_number(),
                    ErrorCode::schema_error,
                    std::string(which) + ".particles[" + std::to_string(i) +
                        "] lacks a numeric K_rad_per_s");
            ks.push_back(arr[i]["K_rad_per_s"].get<double>());
        }
        return ks;
    };
    const auto ka = load_k(summary_a, "a");
    const auto kb = load_k(summary_b, "b");
    if (mode == TTestMode::paired)
        require(ka.size() == kb.size(), ErrorCode::schema_error,
                "paired mode needs equal particle counts in both summaries");

    const TTestResult r = t_test(ka, kb, mode);
    const double mu_a = detail::sample_mean(ka);
    const double mu_b = detail::sample_mean(kb);
    json out;
    out["schema_version"] = kSchemaVersion;
    out["mode"] = mode == TTestMode::paired ? "paired" : "welch";
    out["n_a"] = ka.size();
    out["n_b"] = kb.size();
    out["mu_a"] = mu_a;
    out["mu_b"] = mu_b;
    out["delta_mu"] = mu_a - mu_b;
    out["t"] = r.t;
    out["p"] = r.p;
    out["df"] = r.df;
    out["significant"] = r.p < 0.05;
    return out;
}

} // namespace holovol
