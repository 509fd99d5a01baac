#include <catch2/catch_amalgamated.hpp>

#include <numbers>

#include "holovol/reconstruct.hpp"

using namespace holovol;

namespace {

OpticalConfig test_config() {
    OpticalConfig c;
    c.z_nominal_um = 750.0;
    return c;
}

ReconSettings small_settings() {
    ReconSettings s;
    s.patch_size = 256;
    return s;
}

// Noiseless single-droplet frame on an n x n mono sensor, shade-corrected.
CorrectedFrame droplet_frame(int n, double a_um, double theta_rad,
                             const OpticalConfig& cfg, double t_s = 0.0) {
    Scene s;
    s.fov_um = n * cfg.sensor_pitch_um;
    s.seed = 3;
    s.sensor.layout = SensorLayout::mono;
    s.sensor.shot_noise_scale = 0.0;
    s.sensor.bit_depth = 16;
    const double mid = s.fov_um / 2.0;
    s.droplets.push_back({mid, mid, a_um, theta_rad, 0.01});
    auto raw = synthesize_hologram(evolve_scene(s, 0.0), s, cfg, 1);
    raw.timestamp_s = t_s;
    return correct_frame(raw);
}

CorrectedFrame blank_frame(int n, double t_s = 0.0) {
    CorrectedFrame f;
    f.pixels = RealGrid(n, n, 1.0);
    f.timestamp_s = t_s;
    return f;
}

// Mean phase magnitude outside the droplet disk (with margin), a twin
// image strength probe.
double background_phase_rms(const ComplexField& field, double cx_um,
                            double cy_um, double a_um) {
    double sum = 0.0;
    int count = 0;
    for (int r = 0; r < field.grid.rows(); ++r)
        for (int c = 0; c < field.grid.cols(); ++c) {
            const double x = (c + 0.5) * field.pitch_um;
            const double y = (r + 0.5) * field.pitch_um;
            if (std::hypot(x - cx_um, y - cy_um) > 2.5 * a_um) {
                const double p = std::arg(field.grid(r, c));
                sum += p * p;
                ++count;
            }
        }
    return std::sqrt(sum / count);
}

} // namespace

TEST_CASE("backpropagation lands on the refined grid") {
    auto cfg = test_config();
    auto frame = droplet_frame(128, 5.0, 0.5, cfg);
    auto field = backpropagate(frame, 750.0, cfg);
    CHECK(field.grid.rows() == 256);
    CHECK(field.pitch_um == Catch::Approx(0.56));
    CHECK(field.z_um == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("backpropagation reveals the droplet phase bump") {
    // Peak phase 2.61 rad stays below pi, so no unwrapping is needed here.
    auto cfg = test_config();
    auto frame = droplet_frame(128, 5.0, 0.35, cfg);
    auto field = backpropagate(frame, cfg.z_nominal_um, cfg);

    const double mid_um = 128 * cfg.sensor_pitch_um / 2.0;
    const int center = static_cast<int>(mid_um / field.pitch_um);
    const double peak = std::arg(field.grid(center, center));
    const double planted = 2.0 * std::numbers::pi * cfg.delta_n *
                           cap_height(5.0, 0.35) / cfg.wavelength_um;
    // A single backpropagation splits the recorded modulation between the
    // object wave and its twin, so roughly half the planted phase is the
    // best it can show.
    CHECK(peak > 0.35 * planted);
    CHECK(peak < 1.5 * planted);
    CHECK(peak > 5.0 * background_phase_rms(field, mid_um, mid_um, 5.0));
}

TEST_CASE("focus metric peaks at the true distance") {
    auto cfg = test_config();
    auto frame = droplet_frame(128, 5.0, 0.5, cfg);
    const double at_focus = focus_metric(backpropagate(frame, 750.0, cfg));
    CHECK(at_focus > focus_metric(backpropagate(frame, 650.0, cfg)));
    CHECK(at_focus > focus_metric(backpropagate(frame, 850.0, cfg)));
}

TEST_CASE("focus metric ignores overall amplitude scale") {
    auto cfg = test_config();
    auto frame = droplet_frame(128, 5.0, 0.5, cfg);
    auto field = backpropagate(frame, 750.0, cfg);
    auto scaled = field;
    for (size_t i = 0; i < scaled.grid.size(); ++i)
        scaled.grid[i] *= 37.5;
    CHECK(focus_metric(scaled) ==
          Catch::Approx(focus_metric(field)).epsilon(1e-9));
}

TEST_CASE("autofocus recovers a planted distance") {
    auto cfg = test_config();
    cfg.z_nominal_um = 780.0;
    auto frame = droplet_frame(256, 5.0, 0.5, cfg);
    const double z = autofocus(frame, small_settings(), cfg);
    CHECK(std::abs(z - 780.0) <= 10.0);
}

TEST_CASE("autofocus refuses a blank frame") {
    try {
        autofocus(blank_frame(128), small_settings(), test_config());
        FAIL("expected no_content");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::no_content);
    }
}

TEST_CASE("autofocus with a single candidate returns it") {
    auto cfg = test_config();
    auto frame = droplet_frame(128, 5.0, 0.5, cfg);
    ReconSettings s = small_settings();
    s.z_min_um = 700.0;
    s.z_max_um = 700.0;
    CHECK(autofocus(frame, s, cfg) == 700.0);
}

TEST_CASE("phase retrieval residual never increases") {
    auto cfg = test_config();
    auto frame = droplet_frame(128, 5.0, 0.5, cfg);
    std::vector<double> log;
    auto rec = phase_recover_gs(frame, 750.0, small_settings(), cfg, &log);
    REQUIRE(log.size() >= 2);
    for (size_t i = 1; i < log.size(); ++i)
        REQUIRE(log[i] <= log[i - 1] + 1e-9);
    CHECK(rec.residual == Catch::Approx(log.back()));
    CHECK(rec.residual < log.front());
}

TEST_CASE("phase retrieval on a blank hologram converges immediately") {
    auto cfg = test_config();
    std::vector<double> log;
    auto rec = phase_recover_gs(blank_frame(128), 750.0, small_settings(),
                                cfg, &log);
    REQUIRE(log.size() == 1);
    CHECK(log[0] < 1e-9);
    for (size_t i = 0; i < rec.field.grid.size(); ++i)
        REQUIRE(std::abs(std::arg(rec.field.grid[i])) < 1e-9);
}

TEST_CASE("phase retrieval suppresses the twin image") {
    auto cfg = test_config();
    auto frame = droplet_frame(128, 5.0, 0.35, cfg);
    const double mid_um = 128 * cfg.sensor_pitch_um / 2.0;

    auto single = backpropagate(frame, 750.0, cfg);
    auto rec = phase_recover_gs(frame, 750.0, small_settings(), cfg);

    const double before = background_phase_rms(single, mid_um, mid_um, 5.0);
    const double after =
        background_phase_rms(rec.field, mid_um, mid_um, 5.0);
    CHECK(after < 0.5 * before);
}

TEST_CASE("phase retrieval keeps the droplet phase amplitude") {
    auto cfg = test_config();
    auto frame = droplet_frame(128, 4.0, 0.4, cfg);
    auto rec = phase_recover_gs(frame, 750.0, small_settings(), cfg);
    const double mid_um = 128 * cfg.sensor_pitch_um / 2.0;
    const int center = static_cast<int>(mid_um / rec.field.pitch_um);
    const double peak = std::arg(rec.field.grid(center, center));
    const double planted = 2.0 * std::numbers::pi * cfg.delta_n *
                           cap_height(4.0, 0.4) / cfg.wavelength_um;
    CHECK(peak == Catch::Approx(planted).epsilon(0.30));
}

TEST_CASE("tiled recovery stitches a frame larger than the patch") {
    auto cfg = test_config();
    auto frame = droplet_frame(192, 5.0, 0.35, cfg);
    ReconSettings s = small_settings();
    s.patch_size = 128;
    auto rec = recover_frame(frame, 750.0, s, cfg);
    REQUIRE(rec.field.grid.rows() == 384);
    REQUIRE(rec.field.grid.cols() == 384);

    // Background amplitude must stay near unity through the feathering.
    double border_amp = 0.0;
    int count = 0;
    for (int c = 0; c < 384; ++c) {
        border_amp += std::abs(rec.field.grid(2, c));
        border_amp += std::abs(rec.field.grid(381, c));
        count += 2;
    }
    CHECK(border_amp / count == Catch::Approx(1.0).epsilon(0.05));

    // And the droplet still sits in the middle with its phase bump.
    const int center = 192;
    CHECK(std::arg(rec.field.grid(center, center)) > 0.5);
}

TEST_CASE("stack reconstruction shares one focus and keeps order") {
    auto cfg = test_config();
    std::vector<CorrectedFrame> frames;
    frames.push_back(blank_frame(128, 0.0));
    frames.push_back(droplet_frame(128, 5.0, 0.5, cfg, 0.5));
    frames.push_back(droplet_frame(128, 5.0, 0.45, cfg, 1.0));
    auto recs = reconstruct_stack(frames, small_settings(), cfg);
    REQUIRE(recs.size() == 3);
    CHECK(recs[0].timestamp_s == 0.0);
    CHECK(recs[1].timestamp_s == 0.5);
    CHECK(recs[2].timestamp_s == 1.0);
    CHECK(recs[0].z_focus_um == recs[1].z_focus_um);
    CHECK(recs[1].z_focus_um == recs[2].z_focus_um);
    CHECK(std::abs(recs[1].z_focus_um - 750.0) <= 20.0);
}

TEST_CASE("an all blank stack is refused") {
    std::vector<CorrectedFrame> frames = {blank_frame(64), blank_frame(64)};
    try {
        reconstruct_stack(frames, small_settings(), test_config());
        FAIL("expected no_content");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::no_content);
    }
}

TEST_CASE("reconstruction settings are validated") {
    auto cfg = test_config();
    auto frame = blank_frame(64);
    ReconSettings s = small_settings();
    SECTION("inverted range") {
        s.z_min_um = 900.0;
        s.z_max_um = 600.0;
        CHECK_THROWS_AS(autofocus(frame, s, cfg), Error);
    }
    SECTION("patch size not a power of two") {
        s.patch_size = 300;
        CHECK_THROWS_AS(autofocus(frame, s, cfg), Error);
    }
    SECTION("negative distance") {
        CHECK_THROWS_AS(phase_recover_gs(frame, -5.0, s, cfg), Error);
    }
}
