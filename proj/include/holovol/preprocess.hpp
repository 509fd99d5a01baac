#pragma once

#include "holovol/simulate.hpp"
#include "holovol/wavelet.hpp"

namespace holovol {

// A frame after shade correction: intensity relative to the local
// background, dimensionless and close to 1 away from droplets. This is the
// natural normalization for in-line holography, where the reference beam is
// the background itself.
struct CorrectedFrame {
    RealGrid pixels;
    double timestamp_s = 0.0;
};

inline constexpr int kShadeLevels = 6;

// Multiplicative background of one sensor channel: the coarse-scale
// lowpass projection, floored at a small positive value so the later
// division cannot blow up on dead regions.
inline RealGrid estimate_shade(const RealGrid& channel,
                               int levels = kShadeLevels) {
    require(grid_all_finite(channel), ErrorCode::degenerate_frame,
            "channel contains non-finite values");
    const double mean = grid_mean(channel);
    require(mean > 0, ErrorCode::degenerate_frame,
            "channel mean must be positive to carry a shade estimate");
    RealGrid shade = wavelet::lowpass_projection(channel, levels);
    const double floor = 1e-6 * mean;
    for (size_t i = 0; i < shade.size(); ++i)
        shade[i] = std::max(shade[i], floor);
    return shade;
}

namespace detail {

inline RealGrid extract_channel(const RealGrid& img, int r0, int c0) {
    RealGrid out(img.rows() / 2, img.cols() / 2);
    for (int r = 0; r < out.rows(); ++r)
        for (int c = 0; c < out.cols(); ++c)
            out(r, c) = img(2 * r + r0, 2 * c + c0);
    return out;
}

} // namespace detail

// Removes shading and mosaic gain structure from a raw frame by dividing
// each channel by its own smooth background. A mosaic sensor is split into
// its four sub-channels first so the channel gains cancel along with the
// vignetting; a mono sensor is corrected whole.
inline CorrectedFrame correct_frame(const RawFrame& frame,
                                    int levels = kShadeLevels) {
    require(grid_all_finite(frame.pixels), ErrorCode::degenerate_frame,
            "frame contains non-finite values");
    for (size_t i = 0; i < frame.pixels.size(); ++i)
        require(frame.pixels[i] >= 0, ErrorCode::degenerate_frame,
                "frame contains negative intensity");

    CorrectedFrame out;
    out.timestamp_s = frame.timestamp_s;

    if (frame.layout == SensorLayout::mono) {
        RealGrid shade = estimate_shade(frame.pixels, levels);
        out.pixels = RealGrid(frame.pixels.rows(), frame.pixels.cols());
        for (size_t i = 0; i < out.pixels.size(); ++i)
            out.pixels[i] = frame.pixels[i] / shade[i];
    } else {
        require(frame.pixels.rows() % 2 == 0 && frame.pixels.cols() % 2 == 0,
                ErrorCode::invalid_input,
                "mosaic frames need even dimensions");
        out.pixels = RealGrid(frame.pixels.rows(), frame.pixels.cols());
        for (int r0 = 0; r0 < 2; ++r0)
            for (int c0 = 0; c0 < 2; ++c0) {
                RealGrid ch = detail::extract_channel(frame.pixels, r0, c0);
                RealGrid shade = estimate_shade(ch, levels);
                for (int r = 0; r < ch.rows(); ++r)
                    for (int c = 0; c < ch.cols(); ++c)
                        out.pixels(2 * r + r0, 2 * c + c0) =
                            ch(r, c) / shade(r, c);
            }
    }

    const double mean = grid_mean(out.pixels);
    require(mean > 0.9 && mean < 1.1, ErrorCode::degenerate_frame,
            "shade correction failed to normalize the frame (mean " +
                std::to_string(mean) + ")");
    return out;
}

} // namespace holovol
