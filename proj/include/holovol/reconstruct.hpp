#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <vector>

#include "holovol/parallel.hpp"
#include "holovol/preprocess.hpp"

namespace holovol {

// Knobs of the numerical reconstruction. Distances are sensor-to-object.
struct ReconSettings {
    double z_min_um = 550.0;
    double z_max_um = 950.0;
    double z_step_um = 10.0;   // coarse focus sweep step
    int gs_iterations = 50;    // iteration cap for phase retrieval
    double gs_tolerance = 1e-4;  // stop when the residual change drops below
    int patch_size = 512;      // processing tile edge, sensor pixels
    // Deviation threshold for the support mask. At three robust deviations
    // the twin-image halo of the single-shot reconstruction joins the
    // support, where the object constraint never touches it; the surviving
    // ripple inflates measured volumes by ~6%. Six keeps the halo outside
    // the support without clipping the droplet skirt.
    double support_threshold_sigma = 6.0;

    void validate() const {
        require(z_min_um > 0 && z_max_um >= z_min_um, ErrorCode::invalid_input,
                "focus search range must be positive and ordered");
        require(z_step_um > 0 && std::isfinite(z_step_um),
                ErrorCode::invalid_input, "focus step must be positive");
        require(gs_iterations >= 1, ErrorCode::invalid_input,
                "need at least one retrieval iteration");
        require(gs_tolerance >= 0 && std::isfinite(gs_tolerance),
                ErrorCode::invalid_input, "tolerance must be >= 0");
        require(patch_size >= 32 && (patch_size & (patch_size - 1)) == 0,
                ErrorCode::invalid_input,
                "patch size must be a power of two, at least 32");
        require(support_threshold_sigma > 0 && std::isfinite(support_threshold_sigma),
                ErrorCode::invalid_input, "support sigma must be positive");
    }
};

// Object-plane field recovered from one frame.
struct RecoveredField {
    ComplexField field;      // complex amplitude at the object plane
    double z_focus_um = 0.0; // distance the frame was reconstructed at
    double residual = 0.0;   // final sensor-plane amplitude mismatch
    double timestamp_s = 0.0;
};

namespace detail {

inline void check_hologram(const CorrectedFrame& frame) {
    require(frame.pixels.rows() >= 2 && frame.pixels.cols() >= 2,
            ErrorCode::invalid_input, "hologram needs at least 2x2 pixels");
    require(grid_all_finite(frame.pixels), ErrorCode::invalid_input,
            "hologram contains non-finite values");
    for (size_t i = 0; i < frame.pixels.size(); ++i)
        require(frame.pixels[i] >= 0, ErrorCode::invalid_input,
                "hologram intensity must be non-negative");
}

inline ComplexGrid amplitude_grid(const RealGrid& intensity) {
    ComplexGrid amp(intensity.rows(), intensity.cols());
    for (size_t i = 0; i < intensity.size(); ++i)
        amp[i] = std::complex<double>(std::sqrt(intensity[i]), 0.0);
    return amp;
}

// Rotates the global phase so the background sits at zero. Free-space
// propagation leaves every sample multiplied by exp(-i 2 pi z / lambda),
// an arbitrary offset that would otherwise leak into every phase map.
// Droplets are sparse, so the plain complex mean is dominated by
// background and is a stable reference.
inline void zero_background_phase(ComplexField& field) {
    std::complex<double> mean(0.0, 0.0);
    for (size_t i = 0; i < field.grid.size(); ++i)
        mean += field.grid[i];
    const double mag = std::abs(mean);
    if (mag == 0.0)
        return;
    const std::complex<double> rot = std::conj(mean) / mag;
    for (size_t i = 0; i < field.grid.size(); ++i)
        field.grid[i] *= rot;
}

} // namespace detail

// Single-shot reconstruction: take the square root of the corrected
// intensity as the field amplitude, refine the grid, and propagate back to
// the object plane. The twin image and the intensity-intensity term remain;
// iterative retrieval below removes them.
inline ComplexField backpropagate(const CorrectedFrame& frame, double z_um,
                                  const OpticalConfig& config) {
    detail::check_hologram(frame);
    config.validate();
    require(z_um > 0 && std::isfinite(z_um), ErrorCode::invalid_input,
            "reconstruction distance must be positive");

    ComplexField sensor;
    sensor.grid = detail::amplitude_grid(frame.pixels);
    sensor.pitch_um = config.sensor_pitch_um;
    sensor.z_um = z_um;
    ComplexField fine = upsample_pad(sensor, config.upsample_factor);
    ComplexField out = propagate_angular_spectrum(fine, -z_um, config,
                                                  config.boundary_pad);
    detail::zero_background_phase(out);
    return out;
}

// Sharpness of a candidate reconstruction: spread over mean of the Sobel
// gradient magnitude of the amplitude (the square-rooted Tamura
// coefficient). In-focus droplets have crisp edges, defocused rings smear
// the gradient out, and the ratio form makes the score invariant to
// overall amplitude scaling.
inline double focus_metric(const ComplexField& field) {
    validate_field(field);
    const int rows = field.grid.rows();
    const int cols = field.grid.cols();
    RealGrid amp(rows, cols);
    for (size_t i = 0; i < field.grid.size(); ++i)
        amp[i] = std::abs(field.grid[i]);

    double sum = 0.0, sum2 = 0.0;
    const auto at = [&](int r, int c) {
        return amp(std::clamp(r, 0, rows - 1), std::clamp(c, 0, cols - 1));
    };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) +
                               at(r + 1, c + 1)) -
                              (at(r - 1, c - 1) + 2.0 * at(r, c - 1) +
                               at(r + 1, c - 1));
            const double gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) +
                               at(r + 1, c + 1)) -
                              (at(r - 1, c - 1) + 2.0 * at(r - 1, c) +
                               at(r - 1, c + 1));
            const double g = std::hypot(gx, gy);
            sum += g;
            sum2 += g * g;
        }
    const double n = static_cast<double>(amp.size());
    const double mean = sum / n;
    if (mean <= 0)
        return 0.0;
    const double var = std::max(0.0, sum2 / n - mean * mean);
    return std::sqrt(std::sqrt(var) / mean);
}

namespace detail {

// Transfer function for backpropagation by z over the unpadded grid.
inline ComplexGrid backprop_transfer(int rows, int cols, double pitch_um,
                                     double wavelength_um, double z_um) {
    ComplexGrid h(rows, cols, std::complex<double>(1.0, 0.0));
    apply_transfer(h, pitch_um, wavelength_um, -z_um);
    return h;
}

// Picks the patch-sized window with the strongest intensity variance, the
// place most worth focusing on. Returns {r0, c0, size}.
struct FocusWindow {
    int r0 = 0, c0 = 0, size = 0;
};

inline FocusWindow pick_focus_window(const RealGrid& pixels, int patch) {
    const int rows = pixels.rows();
    const int cols = pixels.cols();
    const int size = std::min({patch, rows, cols});

    FocusWindow best;
    best.size = size;
    double best_var = -1.0;
    const int step = std::max(1, size / 2);
    std::vector<int> rstarts, cstarts;
    for (int r = 0; r + size < rows; r += step)
        rstarts.push_back(r);
    rstarts.push_back(rows - size);
    for (int c = 0; c + size < cols; c += step)
        cstarts.push_back(c);
    cstarts.push_back(cols - size);

    for (int r0 : rstarts)
        for (int c0 : cstarts) {
            double s = 0.0, s2 = 0.0;
            for (int r = r0; r < r0 + size; ++r)
                for (int c = c0; c < c0 + size; ++c) {
                    const double v = pixels(r, c);
                    s += v;
                    s2 += v * v;
                }
            const double n = static_cast<double>(size) * size;
            const double var = s2 / n - (s / n) * (s / n);
            if (var > best_var + 1e-15 * std::max(1.0, best_var)) {
                best_var = var;
                best.r0 = r0;
                best.c0 = c0;
            }
        }
    return best;
}

// Iterations of the consistency probe behind autofocus. Ten is enough to
// separate a matching distance (residual keeps falling) from a mismatched
// one (residual stalls high) without making the sweep expensive.
inline constexpr int kFocusProbeIterations = 10;

} // namespace detail

inline RecoveredField phase_recover_gs(const CorrectedFrame& frame,
                                       double z_um,
                                       const ReconSettings& settings,
                                       const OpticalConfig& config,
                                       std::vector<double>* residual_log);

// Finds the sensor-to-object distance by sweeping the configured range and
// scoring each candidate by how well a short error-reduction run explains
// the measured window, then tightening the best coarse cell with a
// golden-section search.
//
// Amplitude sharpness cannot place the focus of a transparent droplet: the
// in-focus cap is nearly invisible in amplitude, and the twin image skews
// any contrast peak tens of microns off. Constraint consistency has no
// such bias; the retrieval residual dips sharply where the assumed
// distance matches the hologram, because only there can the support
// constraint and the measured amplitudes agree.
inline double autofocus(const CorrectedFrame& frame,
                        const ReconSettings& settings,
                        const OpticalConfig& config) {
    detail::check_hologram(frame);
    settings.validate();
    config.validate();

    // Focus only needs the strongest fringe bundle; a compact window keeps
    // the per-candidate retrieval cheap.
    const int max_window = std::min(settings.patch_size, 256);
    auto win = detail::pick_focus_window(frame.pixels, max_window);
    CorrectedFrame window;
    window.pixels =
        grid_crop(frame.pixels, win.r0, win.c0, win.size, win.size);
    window.timestamp_s = frame.timestamp_s;

    ReconSettings probe = settings;
    probe.gs_iterations = detail::kFocusProbeIterations;
    probe.gs_tolerance = 0.0;

    std::map<double, double> cache;
    const auto misfit = [&](double z) {
        auto it = cache.find(z);
        if (it != cache.end())
            return it->second;
        const double r =
            phase_recover_gs(window, z, probe, config, nullptr).residual;
        cache.emplace(z, r);
        return r;
    };

    std::vector<double> zs;
    for (double z = settings.z_min_um; z <= settings.z_max_um + 1e-9;
         z += settings.z_step_um)
        zs.push_back(std::min(z, settings.z_max_um));
    require(!zs.empty(), ErrorCode::invalid_input, "empty focus range");

    double best_z = zs.front();
    double best_r = std::numeric_limits<double>::max(), worst_r = 0.0;
    for (double z : zs) {
        const double r = misfit(z);
        worst_r = std::max(worst_r, r);
        if (r < best_r) {
            best_r = r;
            best_z = z;
        }
    }
    if (zs.size() == 1)
        return zs.front();

    require(worst_r - best_r > 1e-12 * std::max(1.0, worst_r),
            ErrorCode::no_content,
            "focus misfit is flat across the search range, nothing to focus on");

    // Golden-section refinement inside the winning coarse cell.
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = std::max(settings.z_min_um, best_z - settings.z_step_um);
    double hi = std::min(settings.z_max_um, best_z + settings.z_step_um);
    double x1 = hi - gr * (hi - lo);
    double x2 = lo + gr * (hi - lo);
    double f1 = misfit(x1), f2 = misfit(x2);
    while (hi - lo > 0.5) {
        if (f1 > f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = misfit(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = misfit(x1);
        }
    }
    return 0.5 * (lo + hi);
}

// Iterative twin-image suppression, alternating between what was measured
// (sensor amplitude) and what is known (outside droplets the object plane
// is clear substrate, inside it only delays light).
//
// The loop propagates on the unpadded sensor grid, where the transform is
// exactly unitary and both constraints are metric projections onto their
// sets; the sensor set is reached by amplitude replacement and the object
// set (unity outside a fixed support, amplitude clamped to one inside) is
// convex. That combination makes the residual provably non-increasing, so
// a growing residual can only mean a broken invariant and throws.
//
// The support is frozen from the initial single-shot reconstruction:
// samples whose amplitude or phase deviates from the robust background
// estimate by more than support_threshold_sigma robust deviations. Re-deriving it
// each iteration would change the constraint set mid-descent and void the
// monotonicity argument.
//
// Returns the field backpropagated to the object plane on the refined
// grid. The optional residual_log receives one entry per iteration.
inline RecoveredField phase_recover_gs(const CorrectedFrame& frame,
                                       double z_um,
                                       const ReconSettings& settings,
                                       const OpticalConfig& config,
                                       std::vector<double>* residual_log =
                                           nullptr) {
    detail::check_hologram(frame);
    settings.validate();
    config.validate();
    require(z_um > 0 && std::isfinite(z_um), ErrorCode::invalid_input,
            "reconstruction distance must be positive");

    const int rows = frame.pixels.rows();
    const int cols = frame.pixels.cols();
    const size_t n = frame.pixels.size();

    RealGrid meas_amp(rows, cols);
    double meas_rms = 0.0;
    for (size_t i = 0; i < n; ++i) {
        meas_amp[i] = std::sqrt(frame.pixels[i]);
        meas_rms += meas_amp[i] * meas_amp[i];
    }
    meas_rms = std::sqrt(meas_rms / static_cast<double>(n));

    const ComplexGrid h_back = detail::backprop_transfer(
        rows, cols, config.sensor_pitch_um, config.wavelength_um, z_um);

    ComplexGrid u_sensor(rows, cols), u_object(rows, cols), spec(rows, cols);
    for (size_t i = 0; i < n; ++i)
        u_sensor[i] = std::complex<double>(meas_amp[i], 0.0);

    const auto to_object = [&](const ComplexGrid& from, ComplexGrid& to) {
        fft2_into(from, spec);
        for (size_t i = 0; i < n; ++i)
            spec[i] *= h_back[i];
        ifft2_into(spec, to);
    };
    const auto to_sensor = [&](const ComplexGrid& from, ComplexGrid& to) {
        fft2_into(from, spec);
        for (size_t i = 0; i < n; ++i)
            spec[i] *= std::conj(h_back[i]);
        ifft2_into(spec, to);
    };

    // Fixed support from the single-shot reconstruction.
    to_object(u_sensor, u_object);
    MaskGrid support(rows, cols, false);
    {
        std::vector<double> amp(n), ph(n);
        std::complex<double> mean(0, 0);
        for (size_t i = 0; i < n; ++i)
            mean += u_object[i];
        mean /= static_cast<double>(n);
        const std::complex<double> derotate =
            std::abs(mean) > 0 ? std::conj(mean) / std::abs(mean)
                               : std::complex<double>(1.0, 0.0);
        for (size_t i = 0; i < n; ++i) {
            amp[i] = std::abs(u_object[i]);
            ph[i] = std::arg(u_object[i] * derotate);
        }
        const auto median_of = [](std::vector<double> v) {
            const size_t mid = v.size() / 2;
            std::nth_element(v.begin(), v.begin() + mid, v.end());
            return v[mid];
        };
        const double med_a = median_of(amp);
        const double med_p = median_of(ph);
        std::vector<double> dev_a(n), dev_p(n);
        const double two_pi = 2.0 * std::numbers::pi;
        const auto wrap_pi = [&](double d) {
            d = std::fmod(d + std::numbers::pi, two_pi);
            if (d < 0)
                d += two_pi;
            return d - std::numbers::pi;
        };
        for (size_t i = 0; i < n; ++i) {
            dev_a[i] = std::abs(amp[i] - med_a);
            dev_p[i] = std::abs(wrap_pi(ph[i] - med_p));
        }
        const double mad_to_sigma = 1.4826;
        const double sig_a = mad_to_sigma * median_of(dev_a);
        const double sig_p = mad_to_sigma * median_of(dev_p);
        const double eps_a = 1e-12 * std::max(1.0, std::abs(med_a));
        const double eps_p = 1e-12;
        for (size_t i = 0; i < n; ++i) {
            bool s = false;
            if (sig_a > eps_a && dev_a[i] > settings.support_threshold_sigma * sig_a)
                s = true;
            if (sig_p > eps_p && dev_p[i] > settings.support_threshold_sigma * sig_p)
                s = true;
            support[i] = s;
        }
    }

    double residual = std::numeric_limits<double>::infinity();
    ComplexGrid u_back(rows, cols);
    for (int it = 0; it < settings.gs_iterations; ++it) {
        to_object(u_sensor, u_object);
        for (size_t i = 0; i < n; ++i) {
            if (!support[i]) {
                u_object[i] = std::complex<double>(1.0, 0.0);
            } else {
                const double a = std::abs(u_object[i]);
                if (a > 1.0)
                    u_object[i] /= a;
            }
        }
        to_sensor(u_object, u_back);

        double err = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double d = std::abs(u_back[i]) - meas_amp[i];
            err += d * d;
        }
        const double res =
            meas_rms > 0
                ? std::sqrt(err / static_cast<double>(n)) / meas_rms
                : 0.0;
        if (residual_log)
            residual_log->push_back(res);
        require(res <= residual + 1e-9, ErrorCode::contract_violation,
                "retrieval residual increased from " +
                    std::to_string(residual) + " to " + std::to_string(res));
        const bool done = res < 1e-15 ||
                          std::abs(residual - res) < settings.gs_tolerance;
        residual = res;

        for (size_t i = 0; i < n; ++i) {
            const double a = std::abs(u_back[i]);
            u_sensor[i] = a > 0 ? u_back[i] * (meas_amp[i] / a)
                                : std::complex<double>(meas_amp[i], 0.0);
        }
        if (done)
            break;
    }

    ComplexField sensor_field;
    sensor_field.grid = std::move(u_sensor);
    sensor_field.pitch_um = config.sensor_pitch_um;
    sensor_field.z_um = z_um;
    ComplexField fine = upsample_pad(sensor_field, config.upsample_factor);

    RecoveredField out;
    out.field =
        propagate_angular_spectrum(fine, -z_um, config, config.boundary_pad);
    detail::zero_background_phase(out.field);
    out.z_focus_um = z_um;
    out.residual = residual;
    out.timestamp_s = frame.timestamp_s;
    return out;
}

// Full-frame reconstruction. Frames up to patch_size go through phase
// retrieval whole; larger ones are cut into patch-sized tiles with a 32
// pixel overlap, recovered independently and feathered together (linear
// ramps over the overlap, normalized by the total weight).
inline RecoveredField recover_frame(const CorrectedFrame& frame, double z_um,
                                    const ReconSettings& settings,
                                    const OpticalConfig& config) {
    detail::check_hologram(frame);
    settings.validate();
    const int rows = frame.pixels.rows();
    const int cols = frame.pixels.cols();
    const int patch = settings.patch_size;
    if (rows <= patch && cols <= patch)
        return phase_recover_gs(frame, z_um, settings, config);

    constexpr int kOverlap = 32;
    const auto tile_starts = [&](int extent) {
        std::vector<int> starts;
        if (extent <= patch) {
            starts.push_back(0);
            return starts;
        }
        const int k = std::max(
            2, static_cast<int>(std::ceil(
                   static_cast<double>(extent - kOverlap) / (patch - kOverlap))));
        for (int i = 0; i < k; ++i)
            starts.push_back(static_cast<int>(std::llround(
                static_cast<double>(i) * (extent - patch) / (k - 1))));
        return starts;
    };
    const auto rstarts = tile_starts(rows);
    const auto cstarts = tile_starts(cols);

    const int u = config.upsample_factor;
    const int orows = rows * u, ocols = cols * u;
    ComplexGrid accum(orows, ocols, std::complex<double>(0.0, 0.0));
    RealGrid weight(orows, ocols, 0.0);

    // Per-axis feather ramp across one upsampled tile.
    std::vector<double> ramp(patch * u);
    for (int j = 0; j < patch * u; ++j)
        ramp[j] = std::min({static_cast<double>(j + 1),
                            static_cast<double>(patch * u - j),
                            static_cast<double>(kOverlap * u)});

    struct TileJob {
        int r0, c0;
    };
    std::vector<TileJob> jobs;
    for (int r0 : rstarts)
        for (int c0 : cstarts)
            jobs.push_back({r0, c0});

    std::vector<RecoveredField> tiles(jobs.size());
    parallel_for(static_cast<int>(jobs.size()), [&](int j) {
        CorrectedFrame sub;
        sub.pixels = grid_crop(frame.pixels, jobs[j].r0, jobs[j].c0,
                               std::min(patch, rows), std::min(patch, cols));
        sub.timestamp_s = frame.timestamp_s;
        tiles[j] = phase_recover_gs(sub, z_um, settings, config);
    });

    double residual_sum = 0.0;
    for (size_t j = 0; j < jobs.size(); ++j) {
        const auto& tile = tiles[j].field.grid;
        const int R0 = jobs[j].r0 * u, C0 = jobs[j].c0 * u;
        for (int r = 0; r < tile.rows(); ++r)
            for (int c = 0; c < tile.cols(); ++c) {
                const double w = ramp[r] * ramp[c];
                accum(R0 + r, C0 + c) += w * tile(r, c);
                weight(R0 + r, C0 + c) += w;
            }
        residual_sum += tiles[j].residual;
    }

    RecoveredField out;
    out.field.grid = ComplexGrid(orows, ocols);
    for (size_t i = 0; i < accum.size(); ++i)
        out.field.grid[i] = accum[i] / weight[i];
    out.field.pitch_um = config.recon_pitch_um();
    out.field.z_um = 0.0;
    out.z_focus_um = z_um;
    out.residual = residual_sum / static_cast<double>(jobs.size());
    out.timestamp_s = frame.timestamp_s;
    return out;
}

// Reconstructs a whole clip at a common distance found once on the first
// frame that actually contains structure. Blank frames (no fringes at all)
// cannot be focused; a clip of nothing but blanks is an error.
inline std::vector<RecoveredField> reconstruct_stack(
    const std::vector<CorrectedFrame>& frames, const ReconSettings& settings,
    const OpticalConfig& config) {
    require(!frames.empty(), ErrorCode::invalid_input,
            "need at least one frame");

    const auto is_blank = [](const CorrectedFrame& f) {
        double s = 0.0, s2 = 0.0;
        for (size_t i = 0; i < f.pixels.size(); ++i) {
            s += f.pixels[i];
            s2 += f.pixels[i] * f.pixels[i];
        }
        const double n = static_cast<double>(f.pixels.size());
        const double var = std::max(0.0, s2 / n - (s / n) * (s / n));
        return std::sqrt(var) < 1e-9;
    };

    int first_live = -1;
    for (size_t i = 0; i < frames.size(); ++i)
        if (!is_blank(frames[i])) {
            first_live = static_cast<int>(i);
            break;
        }
    require(first_live >= 0, ErrorCode::no_content,
            "every frame in the stack is blank");

    const double z = autofocus(frames[first_live], settings, config);

    std::vector<RecoveredField> out(frames.size());
    // recover_frame already parallelizes over tiles for large frames; for
    // patch-sized frames the frames themselves are the parallel axis.
    if (frames[0].pixels.rows() > settings.patch_size ||
        frames[0].pixels.cols() > settings.patch_size) {
        for (size_t i = 0; i < frames.size(); ++i)
            out[i] = recover_frame(frames[i], z, settings, config);
    } else {
        parallel_for(static_cast<int>(frames.size()), [&](int i) {
            out[i] = recover_frame(frames[i], z, settings, config);
        });
    }
    return out;
}

} // namespace holovol
