#pragma once

#include <cmath>
#include <complex>
#include <numbers>

#include "holovol/fft.hpp"
#include "holovol/grid.hpp"

namespace holovol {

// Imaging geometry and sampling for the lensless in-line setup. One config
// object travels through the whole pipeline; everything is in micrometers,
// seconds and radians.
struct OpticalConfig {
    double wavelength_um = 0.850;   // illumination wavelength in the medium
    double sensor_pitch_um = 1.12;  // raw sensor pixel pitch
    double delta_n = 0.4;           // refractive index step droplet vs air
    double z_nominal_um = 750.0;    // nominal sensor-to-substrate distance
    double frame_rate_hz = 2.0;
    int upsample_factor = 2;        // reconstruction grid refinement

    // Band-limit padding used when the simulator and the backpropagation
    // step leave the periodic model: the field is embedded in a larger
    // mean-filled frame so wrap-around ghosts land outside the crop.
    // 1.0 disables padding and keeps propagation exactly unitary.
    double boundary_pad = 2.0;

    double recon_pitch_um() const {
        return sensor_pitch_um / static_cast<double>(upsample_factor);
    }

    void validate() const {
        require(wavelength_um > 0 && std::isfinite(wavelength_um),
                ErrorCode::invalid_input, "wavelength must be positive");
        require(sensor_pitch_um > 0 && std::isfinite(sensor_pitch_um),
                ErrorCode::invalid_input, "sensor pitch must be positive");
        require(delta_n > 0 && std::isfinite(delta_n),
                ErrorCode::invalid_input, "refractive index step must be positive");
        require(z_nominal_um > 0 && std::isfinite(z_nominal_um),
                ErrorCode::invalid_input, "nominal distance must be positive");
        require(frame_rate_hz > 0 && std::isfinite(frame_rate_hz),
                ErrorCode::invalid_input, "frame rate must be positive");
        require(upsample_factor >= 1, ErrorCode::invalid_input,
                "upsample factor must be >= 1");
        require(boundary_pad >= 1.0 && std::isfinite(boundary_pad),
                ErrorCode::invalid_input, "boundary pad must be >= 1");
    }
};

// A sampled scalar field in one transverse plane. z_um records which plane
// the samples live in, measured along the optical axis from the object
// (substrate) plane towards the sensor.
struct ComplexField {
    ComplexGrid grid;
    double pitch_um = 1.0;
    double z_um = 0.0;
};

inline void validate_field(const ComplexField& f) {
    require(f.grid.rows() >= 2 && f.grid.cols() >= 2, ErrorCode::invalid_input,
            "field needs at least 2x2 samples");
    require(f.pitch_um > 0 && std::isfinite(f.pitch_um),
            ErrorCode::invalid_input, "field pitch must be positive");
    require(grid_all_finite(f.grid), ErrorCode::invalid_input,
            "field contains non-finite samples");
}

// Total energy under the discrete sampling: sum |u|^2 times the cell area.
inline double field_energy(const ComplexField& f) {
    validate_field(f);
    double s = 0.0;
    for (size_t i = 0; i < f.grid.size(); ++i)
        s += std::norm(f.grid[i]);
    return s * f.pitch_um * f.pitch_um;
}

namespace detail {

// Squared spatial frequencies (cycles/um)^2 for each DFT bin, DC at 0.
inline std::vector<double> freq_sq(int n, double pitch_um) {
    std::vector<double> f2(n);
    const double df = 1.0 / (static_cast<double>(n) * pitch_um);
    for (int k = 0; k < n; ++k) {
        const int s = (k <= n / 2) ? k : k - n;
        const double f = s * df;
        f2[k] = f * f;
    }
    return f2;
}

// Applies the angular spectrum transfer function for distance dz in place
// on an unshifted spectrum. Evanescent components are removed: they decay
// over fractions of a wavelength and only amplify noise if kept.
inline void apply_transfer(ComplexGrid& spectrum, double pitch_um,
                           double wavelength_um, double dz_um) {
    const int rows = spectrum.rows();
    const int cols = spectrum.cols();
    const auto fy2 = freq_sq(rows, pitch_um);
    const auto fx2 = freq_sq(cols, pitch_um);
    const double inv_l2 = 1.0 / (wavelength_um * wavelength_um);
    const double two_pi = 2.0 * std::numbers::pi;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double rad = inv_l2 - fy2[r] - fx2[c];
            if (rad < 0.0) {
                spectrum(r, c) = 0.0;
            } else {
                const double phase = two_pi * dz_um * std::sqrt(rad);
                spectrum(r, c) *= std::complex<double>(std::cos(phase),
                                                       std::sin(phase));
            }
        }
    }
}

} // namespace detail

// Free-space propagation over dz_um (positive moves towards the sensor).
//
// With pad_factor == 1 this is the plain spectral method on the periodic
// grid: exactly energy-preserving on the propagating band and exactly
// inverted by the opposite distance. pad_factor > 1 embeds the field in a
// mean-filled frame (rounded up to an FFT-friendly size) before the
// transform and crops afterwards, trading strict unitarity for suppressed
// wrap-around; the simulator and the hologram backpropagation use that
// mode, all iterative phase retrieval stays on the unpadded path.
inline ComplexField propagate_angular_spectrum(const ComplexField& input,
                                               double dz_um,
                                               const OpticalConfig& config,
                                               double pad_factor = 1.0) {
    validate_field(input);
    config.validate();
    require(std::isfinite(dz_um), ErrorCode::invalid_input,
            "propagation distance must be finite");
    require(pad_factor >= 1.0 && std::isfinite(pad_factor),
            ErrorCode::invalid_input, "pad factor must be >= 1");

    // Zero distance is the identity. Going through the spectral path would
    // still strip evanescent content, which is not what "no propagation"
    // should do.
    if (dz_um == 0.0)
        return input;

    ComplexField out;
    out.pitch_um = input.pitch_um;
    out.z_um = input.z_um + dz_um;

    const int rows = input.grid.rows();
    const int cols = input.grid.cols();

    if (pad_factor == 1.0) {
        ComplexGrid spectrum = fft2(input.grid);
        detail::apply_transfer(spectrum, input.pitch_um, config.wavelength_um,
                               dz_um);
        out.grid = ifft2(spectrum);
        return out;
    }

    const int prows = good_fft_size(
        static_cast<int>(std::ceil(rows * pad_factor)));
    const int pcols = good_fft_size(
        static_cast<int>(std::ceil(cols * pad_factor)));
    const int r0 = (prows - rows) / 2;
    const int c0 = (pcols - cols) / 2;

    std::complex<double> mean(0.0, 0.0);
    for (size_t i = 0; i < input.grid.size(); ++i)
        mean += input.grid[i];
    mean /= static_cast<double>(input.grid.size());

    ComplexGrid padded(prows, pcols, mean);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            padded(r0 + r, c0 + c) = input.grid(r, c);

    ComplexGrid spectrum = fft2(padded);
    detail::apply_transfer(spectrum, input.pitch_um, config.wavelength_um,
                           dz_um);
    ComplexGrid prop = ifft2(spectrum);
    out.grid = grid_crop(prop, r0, c0, rows, cols);
    return out;
}

// Refines the sampling grid by an integer factor through spectral zero
// padding. The input spectrum is copied into the enlarged spectrum at the
// same signed frequencies (Nyquist content keeps its positive-frequency
// slot), everything new stays zero, and the inverse transform is scaled by
// factor^2 to undo the convention's 1/N. Values at the original sample
// positions and the total energy are both preserved exactly; new samples
// are the trigonometric interpolant.
inline ComplexField upsample_pad(const ComplexField& input, int factor) {
    validate_field(input);
    require(factor >= 1, ErrorCode::invalid_input,
            "upsample factor must be >= 1");
    if (factor == 1)
        return input;

    const int rows = input.grid.rows();
    const int cols = input.grid.cols();
    const int orows = rows * factor;
    const int ocols = cols * factor;

    ComplexGrid spectrum = fft2(input.grid);
    ComplexGrid big(orows, ocols, std::complex<double>(0.0, 0.0));
    for (int r = 0; r < rows; ++r) {
        const int sr = (r <= rows / 2) ? r : r - rows;
        const int tr = (sr + orows) % orows;
        for (int c = 0; c < cols; ++c) {
            const int sc = (c <= cols / 2) ? c : c - cols;
            const int tc = (sc + ocols) % ocols;
            big(tr, tc) = spectrum(r, c);
        }
    }

    ComplexField out;
    out.grid = ifft2(big);
    const double gain = static_cast<double>(factor) * factor;
    for (size_t i = 0; i < out.grid.size(); ++i)
        out.grid[i] *= gain;
    out.pitch_um = input.pitch_um / factor;
    out.z_um = input.z_um;
    return out;
}

} // namespace holovol
