#pragma once

#include <numbers>
#include <queue>
#include <utility>

#include "holovol/detect.hpp"

namespace holovol {

// Geometry of one droplet in one frame.
struct DropletGeometry {
    double volume_um3 = 0.0;
    double height_um = 0.0;
    double theta_rad = 0.0;
    double timestamp_s = 0.0;
    int frame_index = 0;
};

// Linear contact-angle decay fitted over a trace.
struct VolatilityFit {
    int particle_id = -1;
    double theta0_rad = 0.0;
    double k_rad_per_s = 0.0;
    double r_squared = 0.0;
    int n_frames = 0;
};

// Unwraps a principal-value phase map by region growing from a background
// anchor: the border pixel with the smallest phase magnitude. Recovered
// fields are normalized to zero background phase, so that anchor sits on
// the true zero and droplet interiors (which can exceed pi before the
// wrap limit) unwind through spatial continuity.
inline void unwrap_phase(RealGrid& phase) {
    const int rows = phase.rows(), cols = phase.cols();
    require(rows >= 1 && cols >= 1, ErrorCode::invalid_input,
            "empty phase map");
    int seed = 0;
    double seed_mag = std::numeric_limits<double>::max();
    const auto consider = [&](int r, int c) {
        const int idx = r * cols + c;
        const double m = std::abs(phase[idx]);
        if (m < seed_mag) {
            seed_mag = m;
            seed = idx;
        }
    };
    for (int c = 0; c < cols; ++c) {
        consider(0, c);
        consider(rows - 1, c);
    }
    for (int r = 0; r < rows; ++r) {
        consider(r, 0);
        consider(r, cols - 1);
    }

    const double two_pi = 2.0 * std::numbers::pi;
    std::vector<bool> done(phase.size(), false);
    std::queue<int> frontier;
    done[seed] = true;
    frontier.push(seed);
    while (!frontier.empty()) {
        const int cur = frontier.front();
        frontier.pop();
        const int r = cur / cols, c = cur % cols;
        const double ref = phase[cur];
        const int neighbors[4][2] = {{r - 1, c}, {r, c - 1}, {r, c + 1},
                                     {r + 1, c}};
        for (const auto& n : neighbors) {
            if (n[0] < 0 || n[0] >= rows || n[1] < 0 || n[1] >= cols)
                continue;
            const int idx = n[0] * cols + n[1];
            if (done[idx])
                continue;
            phase[idx] += two_pi * std::round((ref - phase[idx]) / two_pi);
            done[idx] = true;
            frontier.push(idx);
        }
    }
}

// Principal-value phase of a complex crop, unwrapped.
inline RealGrid phase_map(const ComplexGrid& crop) {
    require(!crop.empty(), ErrorCode::invalid_input, "empty crop");
    RealGrid phase(crop.rows(), crop.cols());
    for (size_t i = 0; i < crop.size(); ++i)
        phase[i] = std::arg(crop[i]);
    unwrap_phase(phase);
    return phase;
}

// Droplet volume from the phase integral over the detected region: each
// radian of phase is lambda/(2 pi delta_n) of material thickness. Negative
// samples are reconstruction residue and are clamped out; that biases V
// up slightly, far less than twin-image residue would bias it down.
inline double particle_volume(const RealGrid& phase,
                              const std::vector<int>& region,
                              const OpticalConfig& config) {
    config.validate();
    require(!region.empty(), ErrorCode::invalid_input,
            "empty region has no volume");
    double sum = 0.0;
    for (int idx : region) {
        require(idx >= 0 && idx < static_cast<int>(phase.size()),
                ErrorCode::invalid_input, "region index out of the crop");
        sum += std::max(0.0, phase[idx]);
    }
    const double pitch = config.recon_pitch_um();
    return config.wavelength_um / (2.0 * std::numbers::pi * config.delta_n) *
           sum * pitch * pitch;
}

namespace detail {

// Second-largest of each 3x3 neighborhood, a 90th-percentile smooth. A
// lone hot pixel is the largest value of every window it touches, so it
// never reaches the output, while a smooth extremum is read at most one
// pixel off its peak. A median here would cost ~2% of apex height on a
// curved cap; the high-rank filter keeps that loss negligible.
inline RealGrid percentile90_3x3(const RealGrid& in) {
    const int rows = in.rows(), cols = in.cols();
    RealGrid out(rows, cols);
    double window[9];
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            int k = 0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc)
                    window[k++] = in(std::clamp(r + dr, 0, rows - 1),
                                     std::clamp(c + dc, 0, cols - 1));
            std::nth_element(window, window + 7, window + 9);
            out(r, c) = window[7];
        }
    return out;
}

} // namespace detail

// Apex height from the peak phase inside the region. The raw maximum of a
// noisy map is extreme-value biased and a single hot pixel would poison
// it, so the max is taken over the 90th-percentile-smoothed map instead.
inline double particle_height(const RealGrid& phase,
                              const std::vector<int>& region,
                              const OpticalConfig& config) {
    config.validate();
    require(!region.empty(), ErrorCode::invalid_input,
            "empty region has no height");
    RealGrid smooth = detail::percentile90_3x3(phase);
    double peak = -std::numeric_limits<double>::max();
    for (int idx : region) {
        require(idx >= 0 && idx < static_cast<int>(smooth.size()),
                ErrorCode::invalid_input, "region index out of the crop");
        peak = std::max(peak, smooth[idx]);
    }
    return config.wavelength_um / (2.0 * std::numbers::pi * config.delta_n) *
           std::max(0.0, peak);
}

// Contact angle of the spherical cap with this volume and apex height.
// Inverts the cap volume relation; an argument escaping [-1, 1] by more
// than 1e-9 means the measured pair cannot be a cap at all.
inline double contact_angle(double volume_um3, double height_um) {
    require(volume_um3 > 0 && std::isfinite(volume_um3),
            ErrorCode::invalid_input, "volume must be positive");
    require(height_um > 0 && std::isfinite(height_um),
            ErrorCode::invalid_input, "height must be positive");
    const double denom =
        3.0 * volume_um3 / (std::numbers::pi * height_um) +
        height_um * height_um;
    const double arg = 1.0 - 3.0 * height_um * height_um / denom;
    require(arg >= -1.0 - 1e-9 && arg <= 1.0 + 1e-9,
            ErrorCode::geometry_inconsistent,
            "volume " + std::to_string(volume_um3) + " um^3 and height " +
                std::to_string(height_um) +
                " um do not describe a spherical cap");
    return std::acos(std::clamp(arg, -1.0, 1.0));
}

// Equivalent-area contact diameter of a detected region.
inline double particle_diameter(size_t area_px, const OpticalConfig& config) {
    config.validate();
    require(area_px > 0, ErrorCode::invalid_input,
            "empty region has no diameter");
    const double pitch = config.recon_pitch_um();
    const double area = static_cast<double>(area_px) * pitch * pitch;
    return 2.0 * std::sqrt(area / std::numbers::pi);
}

// Ordinary least squares of theta on t; the decay rate is the negated
// slope. r^2 is 0 by convention for a zero-variance series so the field
// stays total.
inline VolatilityFit fit_decay_rate(
    const std::vector<std::pair<double, double>>& series,
    int min_points = 5) {
    require(static_cast<int>(series.size()) >= min_points,
            ErrorCode::insufficient_data,
            "decay fit needs at least " + std::to_string(min_points) +
                " samples, got " + std::to_string(series.size()));
    for (size_t i = 1; i < series.size(); ++i)
        require(series[i].first > series[i - 1].first,
                ErrorCode::invalid_input,
                "timestamps must be strictly increasing");

    const double n = static_cast<double>(series.size());
    double t_mean = 0.0, y_mean = 0.0;
    for (const auto& [t, y] : series) {
        t_mean += t;
        y_mean += y;
    }
    t_mean /= n;
    y_mean /= n;

    double stt = 0.0, sty = 0.0, syy = 0.0;
    for (const auto& [t, y] : series) {
        stt += (t - t_mean) * (t - t_mean);
        sty += (t - t_mean) * (y - y_mean);
        syy += (y - y_mean) * (y - y_mean);
    }
    require(stt > 0, ErrorCode::invalid_input,
            "all timestamps equal, slope undefined");

    const double slope = sty / stt;
    VolatilityFit fit;
    fit.theta0_rad = y_mean - slope * t_mean;
    fit.k_rad_per_s = -slope;
    fit.n_frames = static_cast<int>(series.size());
    if (syy > 0) {
        double ss_res = 0.0;
        for (const auto& [t, y] : series) {
            const double pred = fit.theta0_rad - fit.k_rad_per_s * t;
            ss_res += (y - pred) * (y - pred);
        }
        fit.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
    }
    return fit;
}

// Everything the pipeline wants to know about one particle.
struct ParticleResult {
    int trace_id = -1;
    std::vector<DropletGeometry> geometry;
    VolatilityFit fit;
    double diameter_um = 0.0;
    std::vector<std::string> warnings;
};

// Runs the full geometry chain over one crop stack: per frame the phase
// map, volume, height and contact angle; over the trace the decay fit and
// the first-frame contact diameter. Frames whose geometry is unusable
// (for example the cap inversion fails on a noise-dominated last gasp of
// an evaporating droplet) are skipped with a warning; if fewer than
// min_trace_frames survive the whole particle is insufficient data.
inline ParticleResult analyze_crop_stack(const CropStack& stack,
                                         const OpticalConfig& config,
                                         int min_trace_frames = 5) {
    config.validate();
    require(!stack.crops.empty(), ErrorCode::invalid_input,
            "empty crop stack");
    require(stack.crops.size() == stack.regions.size() &&
                stack.crops.size() == stack.timestamps.size() &&
                stack.crops.size() == stack.frame_indices.size(),
            ErrorCode::invalid_input, "crop stack arrays disagree in length");

    ParticleResult result;
    result.trace_id = stack.trace_id;
    for (size_t i = 0; i < stack.crops.size(); ++i) {
        try {
            RealGrid phase = phase_map(stack.crops[i]);
            DropletGeometry g;
            g.volume_um3 = particle_volume(phase, stack.regions[i], config);
            g.height_um = particle_height(phase, stack.regions[i], config);
            g.theta_rad = contact_angle(g.volume_um3, g.height_um);
            g.timestamp_s = stack.timestamps[i];
            g.frame_index = stack.frame_indices[i];
            result.geometry.push_back(g);
        } catch (const Error& e) {
            result.warnings.push_back(
                "frame " + std::to_string(stack.frame_indices[i]) + ": " +
                e.what());
        }
    }
    require(static_cast<int>(result.geometry.size()) >= min_trace_frames,
            ErrorCode::insufficient_data,
            "only " + std::to_string(result.geometry.size()) +
                " usable frames in trace " + std::to_string(stack.trace_id));

    std::vector<std::pair<double, double>> series;
    series.reserve(result.geometry.size());
    for (const auto& g : result.geometry)
        series.emplace_back(g.timestamp_s, g.theta_rad);
    result.fit = fit_decay_rate(series, min_trace_frames);
    result.fit.particle_id = stack.trace_id;
    result.diameter_um =
        particle_diameter(stack.regions[0].size(), config);
    return result;
}

} // namespace holovol
