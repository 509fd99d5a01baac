#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "holovol/optics.hpp"

namespace holovol {

// ---------------------------------------------------------------------------
// Spherical cap geometry.
//
// A sessile droplet with contact radius a and contact angle theta (below
// 90 degrees) is a spherical cap. All relations below follow from the two
// defining lengths: apex height h and the sphere radius R through h and a.
// ---------------------------------------------------------------------------

inline double cap_height(double a_um, double theta_rad) {
    return a_um * std::tan(theta_rad / 2.0);
}

inline double cap_sphere_radius(double a_um, double h_um) {
    return (a_um * a_um + h_um * h_um) / (2.0 * h_um);
}

inline double cap_volume(double a_um, double h_um) {
    return std::numbers::pi * h_um / 6.0 * (3.0 * a_um * a_um + h_um * h_um);
}

// Cap thickness at in-plane distance r from the center, zero outside the
// contact line.
inline double cap_thickness(double a_um, double theta_rad, double r_um) {
    if (r_um >= a_um)
        return 0.0;
    const double h = cap_height(a_um, theta_rad);
    const double R = cap_sphere_radius(a_um, h);
    return std::sqrt(R * R - r_um * r_um) - (R - h);
}

// One droplet frozen at a moment in time.
struct DropletCap {
    int id = 0;
    double x_um = 0.0;
    double y_um = 0.0;
    double a_um = 0.0;       // contact line radius
    double theta_rad = 0.0;  // current contact angle
};

// One droplet's full history: constant-contact-radius evaporation with a
// linearly decaying contact angle theta(t) = theta0 - K t.
struct DropletSpec {
    double x_um = 0.0;
    double y_um = 0.0;
    double a_um = 0.0;
    double theta0_rad = 0.0;
    double k_rad_per_s = 0.0;
};

enum class SensorLayout { mono, bayer };

inline std::string layout_name(SensorLayout l) {
    return l == SensorLayout::mono ? "mono" : "bayer";
}

inline SensorLayout layout_from_name(const std::string& s) {
    if (s == "mono")
        return SensorLayout::mono;
    if (s == "bayer")
        return SensorLayout::bayer;
    fail(ErrorCode::schema_error, "unknown sensor layout '" + s + "'");
}

// Imperfections of the recording side: per-channel gain (2x2 mosaic
// position, row-major), a smooth shade field as a bivariate polynomial in
// coordinates normalized to [-1, 1] across the frame, photon shot noise
// and quantization.
struct SensorModel {
    SensorLayout layout = SensorLayout::bayer;
    double channel_gains[4] = {1.0, 1.0, 1.0, 1.0};
    std::vector<double> shade_poly_coeffs = {1.0};  // 1, x, y, x^2, xy, y^2, ...
    double shot_noise_scale = 0.0;                  // 0 disables noise
    int bit_depth = 12;

    void validate() const {
        for (double g : channel_gains)
            require(g > 0 && std::isfinite(g), ErrorCode::config_error,
                    "channel gains must be positive");
        require(!shade_poly_coeffs.empty(), ErrorCode::config_error,
                "shade polynomial needs at least the constant term");
        // Coefficients are ordered by total degree; the count must complete
        // a triangle (1, 3, 6, 10, ...).
        size_t n = shade_poly_coeffs.size();
        size_t tri = 0, k = 1;
        while (tri < n)
            tri += k++;
        require(tri == n, ErrorCode::config_error,
                "shade polynomial coefficient count must be triangular");
        require(shot_noise_scale >= 0 && std::isfinite(shot_noise_scale),
                ErrorCode::config_error, "shot noise scale must be >= 0");
        require(bit_depth >= 8 && bit_depth <= 16, ErrorCode::config_error,
                "bit depth must be in [8, 16]");
    }

    double shade_at(double xn, double yn) const {
        double v = 0.0;
        size_t i = 0;
        for (int deg = 0; i < shade_poly_coeffs.size(); ++deg)
            for (int py = 0; py <= deg && i < shade_poly_coeffs.size(); ++py) {
                const int px = deg - py;
                v += shade_poly_coeffs[i++] *
                     std::pow(xn, px) * std::pow(yn, py);
            }
        return v;
    }
};

// Scene description: a square field of view with droplets on it and the
// sensor looking at it.
struct Scene {
    double fov_um = 0.0;
    std::uint64_t seed = 0;
    std::vector<DropletSpec> droplets;
    SensorModel sensor;

    void validate() const {
        require(fov_um > 0 && std::isfinite(fov_um), ErrorCode::config_error,
                "field of view must be positive");
        sensor.validate();
        for (size_t i = 0; i < droplets.size(); ++i) {
            const auto& d = droplets[i];
            require(d.a_um > 0 && std::isfinite(d.a_um),
                    ErrorCode::config_error, "droplet radius must be positive");
            require(d.theta0_rad > 0 && d.theta0_rad < std::numbers::pi / 2,
                    ErrorCode::config_error,
                    "initial contact angle must lie in (0, pi/2)");
            require(d.k_rad_per_s > 0 && std::isfinite(d.k_rad_per_s),
                    ErrorCode::config_error, "decay rate must be positive");
            require(d.x_um - d.a_um >= 0 && d.x_um + d.a_um <= fov_um &&
                        d.y_um - d.a_um >= 0 && d.y_um + d.a_um <= fov_um,
                    ErrorCode::config_error,
                    "droplet " + std::to_string(i) +
                        " sticks out of the field of view");
        }
        // Caps may not overlap; contact lines are impenetrable.
        for (size_t i = 0; i < droplets.size(); ++i)
            for (size_t j = i + 1; j < droplets.size(); ++j) {
                const double dx = droplets[i].x_um - droplets[j].x_um;
                const double dy = droplets[i].y_um - droplets[j].y_um;
                const double rr = droplets[i].a_um + droplets[j].a_um;
                require(dx * dx + dy * dy >= rr * rr, ErrorCode::config_error,
                        "droplets " + std::to_string(i) + " and " +
                            std::to_string(j) + " overlap");
            }
    }
};

// Contact angle below which a droplet counts as evaporated and disappears
// from the scene.
inline constexpr double kThetaMinRad = 0.01;

// Scene state at time t: angles decayed, finished droplets removed. Ids are
// stable (index into Scene::droplets) so ground truth stays linkable.
inline std::vector<DropletCap> evolve_scene(const Scene& scene, double t_s,
                                            double theta_min_rad = kThetaMinRad) {
    scene.validate();
    require(t_s >= 0 && std::isfinite(t_s), ErrorCode::invalid_input,
            "scene time must be >= 0");
    std::vector<DropletCap> caps;
    caps.reserve(scene.droplets.size());
    for (size_t i = 0; i < scene.droplets.size(); ++i) {
        const auto& d = scene.droplets[i];
        const double theta = d.theta0_rad - d.k_rad_per_s * t_s;
        if (theta > theta_min_rad)
            caps.push_back({static_cast<int>(i), d.x_um, d.y_um, d.a_um, theta});
    }
    return caps;
}

// Sampling grid for the simulated object plane. Pixel (r, c) is centered at
// ((c + 0.5) * pitch, (r + 0.5) * pitch) in scene coordinates.
struct SimGrid {
    int rows = 0;
    int cols = 0;
    double pitch_um = 0.0;
};

// Optical thickness map of a set of caps, as phase at the given wavelength.
// Throws wrap_limit when any cap is tall enough to push the phase through a
// full turn, because a single wrapped measurement can no longer tell such a
// droplet from a much flatter one.
inline RealGrid render_phase_map(const std::vector<DropletCap>& caps,
                                 const SimGrid& grid,
                                 const OpticalConfig& config) {
    config.validate();
    require(grid.rows >= 2 && grid.cols >= 2 && grid.pitch_um > 0,
            ErrorCode::invalid_input, "bad simulation grid");
    const double h_wrap = config.wavelength_um / config.delta_n;
    const double phase_per_um =
        2.0 * std::numbers::pi * config.delta_n / config.wavelength_um;

    RealGrid phase(grid.rows, grid.cols, 0.0);
    for (const auto& cap : caps) {
        require(cap.a_um > 0 && cap.theta_rad > 0 &&
                    cap.theta_rad < std::numbers::pi / 2,
                ErrorCode::invalid_input, "bad cap geometry");
        const double h = cap_height(cap.a_um, cap.theta_rad);
        if (h >= h_wrap)
            fail(ErrorCode::wrap_limit,
                 "droplet " + std::to_string(cap.id) + " apex height " +
                     std::to_string(h) + " um reaches the phase wrap limit");
        const double R = cap_sphere_radius(cap.a_um, h);
        const int r0 = std::max(0, static_cast<int>(
                                       std::floor((cap.y_um - cap.a_um) /
                                                  grid.pitch_um)) - 1);
        const int r1 = std::min(grid.rows - 1,
                                static_cast<int>(std::ceil(
                                    (cap.y_um + cap.a_um) / grid.pitch_um)) + 1);
        const int c0 = std::max(0, static_cast<int>(
                                       std::floor((cap.x_um - cap.a_um) /
                                                  grid.pitch_um)) - 1);
        const int c1 = std::min(grid.cols - 1,
                                static_cast<int>(std::ceil(
                                    (cap.x_um + cap.a_um) / grid.pitch_um)) + 1);
        const double a2 = cap.a_um * cap.a_um;
        for (int r = r0; r <= r1; ++r) {
            const double dy = (r + 0.5) * grid.pitch_um - cap.y_um;
            for (int c = c0; c <= c1; ++c) {
                const double dx = (c + 0.5) * grid.pitch_um - cap.x_um;
                const double rr = dx * dx + dy * dy;
                if (rr < a2) {
                    const double t = std::sqrt(R * R - rr) - (R - h);
                    phase(r, c) += phase_per_um * t;
                }
            }
        }
    }
    return phase;
}

// Unit-amplitude object field exp(i phase): the caps only delay the wave,
// they absorb nothing.
inline ComplexField render_object_field(const std::vector<DropletCap>& caps,
                                        const SimGrid& grid,
                                        const OpticalConfig& config) {
    RealGrid phase = render_phase_map(caps, grid, config);
    ComplexField field;
    field.grid = ComplexGrid(grid.rows, grid.cols);
    for (size_t i = 0; i < phase.size(); ++i)
        field.grid[i] = std::complex<double>(std::cos(phase[i]),
                                             std::sin(phase[i]));
    field.pitch_um = grid.pitch_um;
    field.z_um = 0.0;
    return field;
}

// A frame as the camera would hand it over: quantized intensity counts.
struct RawFrame {
    RealGrid pixels;
    double timestamp_s = 0.0;
    SensorLayout layout = SensorLayout::mono;
    int bit_depth = 12;
};

// Intensity corresponding to digital full scale. Unit background sits at a
// quarter of full scale, leaving headroom for constructive fringes (the
// coherent worst case is |1 + 1|^2 = 4).
inline constexpr double kFullScaleIntensity = 4.0;

namespace detail {

// splitmix64 step, used to derive independent per-frame seeds from the
// scene seed without correlations between neighboring frames.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d847caf9fd2e69ULL;
    return z ^ (z >> 31);
}

} // namespace detail

// Renders one hologram frame. The object field is sampled at half the
// sensor pitch, propagated to the sensor over the padded path (the scene is
// not periodic), then intensity is 2x2 box binned to the sensor grid and
// pushed through the sensor model: shade and channel gains, optional shot
// noise, quantization to bit_depth counts.
inline RawFrame synthesize_hologram(const std::vector<DropletCap>& caps,
                                    const Scene& scene,
                                    const OpticalConfig& config,
                                    std::uint64_t seed) {
    scene.validate();
    config.validate();
    const int n_sensor = static_cast<int>(
        std::llround(scene.fov_um / config.sensor_pitch_um));
    require(n_sensor >= 4, ErrorCode::invalid_input,
            "field of view smaller than 4 sensor pixels");
    require(scene.sensor.layout == SensorLayout::mono || n_sensor % 2 == 0,
            ErrorCode::invalid_input,
            "bayer layout needs an even sensor dimension");

    SimGrid grid{2 * n_sensor, 2 * n_sensor, config.sensor_pitch_um / 2.0};
    ComplexField object = render_object_field(caps, grid, config);
    ComplexField at_sensor = propagate_angular_spectrum(
        object, config.z_nominal_um, config, config.boundary_pad);

    // 2x2 box binning of |u|^2 emulates the sensor pixel aperture.
    RealGrid intensity(n_sensor, n_sensor);
    for (int r = 0; r < n_sensor; ++r)
        for (int c = 0; c < n_sensor; ++c) {
            double s = std::norm(at_sensor.grid(2 * r, 2 * c)) +
                       std::norm(at_sensor.grid(2 * r, 2 * c + 1)) +
                       std::norm(at_sensor.grid(2 * r + 1, 2 * c)) +
                       std::norm(at_sensor.grid(2 * r + 1, 2 * c + 1));
            intensity(r, c) = 0.25 * s;
        }

    const auto& sensor = scene.sensor;
    for (int r = 0; r < n_sensor; ++r) {
        const double yn = 2.0 * (r + 0.5) / n_sensor - 1.0;
        for (int c = 0; c < n_sensor; ++c) {
            const double xn = 2.0 * (c + 0.5) / n_sensor - 1.0;
            double shade = sensor.shade_at(xn, yn);
            require(shade > 0, ErrorCode::config_error,
                    "shade polynomial must stay positive over the frame");
            double gain = 1.0;
            if (sensor.layout == SensorLayout::bayer)
                gain = sensor.channel_gains[(r % 2) * 2 + (c % 2)];
            intensity(r, c) *= shade * gain;
        }
    }

    if (sensor.shot_noise_scale > 0) {
        std::mt19937_64 rng(seed);
        for (size_t i = 0; i < intensity.size(); ++i) {
            const double mean = intensity[i] * sensor.shot_noise_scale;
            std::poisson_distribution<long long> poisson(mean);
            intensity[i] = static_cast<double>(poisson(rng)) /
                           sensor.shot_noise_scale;
        }
    }

    RawFrame frame;
    frame.pixels = RealGrid(n_sensor, n_sensor);
    frame.layout = sensor.layout;
    frame.bit_depth = sensor.bit_depth;
    const double dn_max = static_cast<double>((1u << sensor.bit_depth) - 1);
    for (size_t i = 0; i < intensity.size(); ++i) {
        double dn = std::round(intensity[i] / kFullScaleIntensity * dn_max);
        frame.pixels[i] = std::clamp(dn, 0.0, dn_max);
    }
    return frame;
}

// Renders a clip of n_frames frames at the configured frame rate, advancing
// the scene between exposures. Per-frame noise seeds are derived from the
// scene seed, so the same scene always produces the same clip.
inline std::vector<RawFrame> simulate_sequence(const Scene& scene,
                                               const OpticalConfig& config,
                                               int n_frames) {
    require(n_frames > 0, ErrorCode::invalid_input,
            "need at least one frame");
    std::vector<RawFrame> frames;
    frames.reserve(n_frames);
    for (int k = 0; k < n_frames; ++k) {
        const double t = k / config.frame_rate_hz;
        auto caps = evolve_scene(scene, t);
        RawFrame f = synthesize_hologram(caps, scene, config,
                                         detail::mix_seed(scene.seed, k));
        f.timestamp_s = t;
        frames.push_back(std::move(f));
    }
    return frames;
}

} // namespace holovol
