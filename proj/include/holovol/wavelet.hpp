#pragma once

#include <array>
#include <vector>

#include "holovol/grid.hpp"

namespace holovol::wavelet {

// Least-asymmetric orthogonal 10-tap scaling filter (reconstruction
// lowpass). Near-symmetric filters matter here: the lowpass projection is
// used as a background estimate and a skewed filter would displace it
// relative to the fringes it should ignore.
inline constexpr std::array<double, 10> kRecLo = {
    0.027333068345077982,  0.029519490925774643, -0.039134249302383094,
    0.1993975339773936,    0.7234076904024206,    0.6339789634582119,
    0.01660210576452232,  -0.17532808990845047,  -0.021101834024758855,
    0.019538882735286728,
};

inline constexpr int kTaps = static_cast<int>(kRecLo.size());

namespace detail {

inline std::array<double, 10> make_dec_lo() {
    std::array<double, 10> h{};
    for (int i = 0; i < kTaps; ++i)
        h[i] = kRecLo[kTaps - 1 - i];
    return h;
}

inline std::array<double, 10> make_dec_hi() {
    // Alternating flip of the lowpass: the standard quadrature mirror.
    std::array<double, 10> g{};
    for (int i = 0; i < kTaps; ++i)
        g[i] = (i % 2 == 0 ? 1.0 : -1.0) * kRecLo[i];
    return g;
}

inline const std::array<double, 10> kDecLo = make_dec_lo();
inline const std::array<double, 10> kDecHi = make_dec_hi();

} // namespace detail

// One level of the periodic orthogonal transform on an even-length signal.
// a[k] = sum_m h[m] x[(2k+m) mod L], likewise d with the highpass.
inline void dwt1_periodic(const std::vector<double>& x,
                          std::vector<double>& approx,
                          std::vector<double>& detail_out) {
    const int L = static_cast<int>(x.size());
    require(L >= 2 && L % 2 == 0, ErrorCode::invalid_input,
            "periodic transform needs an even length");
    const int half = L / 2;
    approx.assign(half, 0.0);
    detail_out.assign(half, 0.0);
    for (int k = 0; k < half; ++k) {
        double a = 0.0, d = 0.0;
        for (int m = 0; m < kTaps; ++m) {
            const double v = x[(2 * k + m) % L];
            a += detail::kDecLo[m] * v;
            d += detail::kDecHi[m] * v;
        }
        approx[k] = a;
        detail_out[k] = d;
    }
}

// Exact inverse of dwt1_periodic (the analysis operator is orthogonal, so
// synthesis is its adjoint).
inline std::vector<double> idwt1_periodic(const std::vector<double>& approx,
                                          const std::vector<double>& detail_in) {
    require(approx.size() == detail_in.size() && !approx.empty(),
            ErrorCode::invalid_input, "band size mismatch");
    const int half = static_cast<int>(approx.size());
    const int L = 2 * half;
    std::vector<double> x(L, 0.0);
    for (int k = 0; k < half; ++k)
        for (int m = 0; m < kTaps; ++m) {
            const int i = (2 * k + m) % L;
            x[i] += detail::kDecLo[m] * approx[k] +
                    detail::kDecHi[m] * detail_in[k];
        }
    return x;
}

namespace detail {

// Lowpass-only analysis and its adjoint, applied along rows of a grid.
// Columns are handled by transposing the roles in the caller.
inline RealGrid rows_analyze_lo(const RealGrid& in) {
    const int L = in.cols();
    const int half = L / 2;
    RealGrid out(in.rows(), half, 0.0);
    for (int r = 0; r < in.rows(); ++r)
        for (int k = 0; k < half; ++k) {
            double a = 0.0;
            for (int m = 0; m < kTaps; ++m)
                a += kDecLo[m] * in(r, (2 * k + m) % L);
            out(r, k) = a;
        }
    return out;
}

inline RealGrid rows_synthesize_lo(const RealGrid& in) {
    const int half = in.cols();
    const int L = 2 * half;
    RealGrid out(in.rows(), L, 0.0);
    for (int r = 0; r < in.rows(); ++r)
        for (int k = 0; k < half; ++k) {
            const double a = in(r, k);
            for (int m = 0; m < kTaps; ++m)
                out(r, (2 * k + m) % L) += kDecLo[m] * a;
        }
    return out;
}

inline RealGrid cols_analyze_lo(const RealGrid& in) {
    const int L = in.rows();
    const int half = L / 2;
    RealGrid out(half, in.cols(), 0.0);
    for (int k = 0; k < half; ++k)
        for (int m = 0; m < kTaps; ++m) {
            const double w = kDecLo[m];
            const int src = (2 * k + m) % L;
            for (int c = 0; c < in.cols(); ++c)
                out(k, c) += w * in(src, c);
        }
    return out;
}

inline RealGrid cols_synthesize_lo(const RealGrid& in) {
    const int half = in.rows();
    const int L = 2 * half;
    RealGrid out(L, in.cols(), 0.0);
    for (int k = 0; k < half; ++k)
        for (int m = 0; m < kTaps; ++m) {
            const double w = kDecLo[m];
            const int dst = (2 * k + m) % L;
            for (int c = 0; c < in.cols(); ++c)
                out(dst, c) += w * in(k, c);
        }
    return out;
}

// Extends a length-n axis to length target (>= n) by half-point mirror
// reflection, then doubles it symmetrically so the result is periodic and
// smooth across the wrap.
inline int padded_length(int n, int levels) {
    const int step = 1 << (levels - 1);
    return ((n + step - 1) / step) * step;
}

inline RealGrid symmetric_double(const RealGrid& img, int levels) {
    const int pr = padded_length(img.rows(), levels);
    const int pc = padded_length(img.cols(), levels);
    require(pr - img.rows() < img.rows() + 1 && pc - img.cols() < img.cols() + 1,
            ErrorCode::invalid_input, "image too small to extend");
    RealGrid ext(2 * pr, 2 * pc, 0.0);
    for (int r = 0; r < 2 * pr; ++r) {
        int sr = r < pr ? r : 2 * pr - 1 - r;        // unfold the doubling
        if (sr >= img.rows())
            sr = 2 * img.rows() - 1 - sr;            // unfold the padding
        for (int c = 0; c < 2 * pc; ++c) {
            int sc = c < pc ? c : 2 * pc - 1 - c;
            if (sc >= img.cols())
                sc = 2 * img.cols() - 1 - sc;
            ext(r, c) = img(sr, sc);
        }
    }
    return ext;
}

} // namespace detail

// Orthogonal projection of an image onto the coarse approximation space
// `levels` scales down: analyze lowpass-only, then run the adjoint back up
// with all detail implicitly zero. Boundary handling is mirror extension
// (made periodic by symmetric doubling), so edges are not dragged towards
// zero. The result is smooth at scale 2^levels pixels.
inline RealGrid lowpass_projection(const RealGrid& img, int levels) {
    require(levels >= 1, ErrorCode::invalid_input, "levels must be >= 1");
    require(img.rows() >= (1 << levels) && img.cols() >= (1 << levels),
            ErrorCode::invalid_input,
            "image too small for the requested decomposition depth");

    RealGrid work = detail::symmetric_double(img, levels);
    for (int lev = 0; lev < levels; ++lev) {
        work = detail::rows_analyze_lo(work);
        work = detail::cols_analyze_lo(work);
    }
    for (int lev = 0; lev < levels; ++lev) {
        work = detail::cols_synthesize_lo(work);
        work = detail::rows_synthesize_lo(work);
    }
    return grid_crop(work, 0, 0, img.rows(), img.cols());
}

} // namespace holovol::wavelet
