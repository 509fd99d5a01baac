#pragma once

// Population statistics over per-particle results: Gaussian summary of the
// decay-rate distribution, log-spaced size distribution with a fitted mode
// diameter, and two-sample significance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "holovol/errors.hpp"

namespace holovol {

struct Histogram {
    std::vector<double> edges;          // counts.size() + 1, strictly increasing
    std::vector<std::int64_t> counts;
};

struct VolatilitySummary {
    double mu_k = 0.0;                  // rad/s
    double sigma_k = 0.0;               // rad/s, population std of kept samples
    int n = 0;                          // samples kept after trimming
    double trim = 0.0;                  // fraction removed from each tail
    Histogram histogram;                // over the kept samples
};

struct SizeDistribution {
    std::vector<double> edges_um;       // log-spaced bin edges
    std::vector<std::int64_t> counts;   // raw per-bin counts
    std::vector<double> dn_dlogdp;      // counts / log10 bin width
    double log_bin_width = 0.0;         // log10 units
    std::int64_t overflow = 0;          // diameters outside the range
    double mode_diameter_um = 0.0;      // callers fill via fit_lognormal
};

enum class TTestMode { paired, welch };

struct TTestResult {
    double t = 0.0;
    double p = 1.0;                     // two-sided
    double df = 0.0;
};

namespace detail {

inline void require_finite_samples(const std::vector<double>& xs,
                                   const char* what) {
    for (double x : xs)
        require(std::isfinite(x), ErrorCode::invalid_input,
                std::string(what) + " contains a non-finite value");
}

// Order statistic with linear interpolation between neighbors, on sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
    const auto lo = static_cast<size_t>(pos);
    if (lo + 1 >= sorted.size())
        return sorted.back();
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

// Freedman-Diaconis width, falling back to Sturges when the IQR collapses.
// All-equal data degenerates to a single narrow bin around the value.
inline Histogram histogram_fd(const std::vector<double>& sorted) {
    Histogram h;
    const auto n = sorted.size();
    const double lo = sorted.front(), hi = sorted.back();
    if (lo == hi) {
        const double half = std::max(std::abs(lo) * 1e-9, 1e-12);
        h.edges = {lo - half, lo + half};
        h.counts = {static_cast<std::int64_t>(n)};
        return h;
    }
    double width = 2.0 *
                   (quantile_sorted(sorted, 0.75) -
                    quantile_sorted(sorted, 0.25)) /
                   std::cbrt(static_cast<double>(n));
    if (!(width > 0.0))
        width = (hi - lo) /
                std::ceil(1.0 + std::log2(static_cast<double>(n)));
    auto bins = static_cast<std::int64_t>(
        std::ceil((hi - lo) / width - 1e-12));
    bins = std::clamp<std::int64_t>(bins, 1, 100000);
    width = (hi - lo) / static_cast<double>(bins);

    h.edges.resize(bins + 1);
    for (std::int64_t i = 0; i <= bins; ++i)
        h.edges[i] = lo + width * static_cast<double>(i);
    h.edges.back() = hi;
    h.counts.assign(bins, 0);
    for (double x : sorted) {
        auto idx = static_cast<std::int64_t>((x - lo) / width);
        ++h.counts[std::clamp<std::int64_t>(idx, 0, bins - 1)];
    }
    return h;
}

} // namespace detail

// Trim a symmetric fraction from each tail of the sorted samples, then take
// the maximum-likelihood Gaussian fit of what remains: sample mean and
// population standard deviation. Trimming guards the summary against the
// heavy-tailed outliers that misfit traces produce.
inline VolatilitySummary fit_gaussian(std::vector<double> samples,
                                      double outlier_trim = 0.01) {
    require(outlier_trim >= 0.0 && outlier_trim < 0.5,
            ErrorCode::invalid_input, "trim fraction must be in [0, 0.5)");
    detail::require_finite_samples(samples, "samples");
    require(samples.size() >= 2, ErrorCode::insufficient_data,
            "need at least two samples for a Gaussian fit");

    std::sort(samples.begin(), samples.end());
    const auto cut = static_cast<size_t>(
        outlier_trim * static_cast<double>(samples.size()));
    std::vector<double> kept(samples.begin() + cut, samples.end() - cut);
    require(kept.size() >= 2, ErrorCode::insufficient_data,
            "trimming leaves fewer than two samples");

    double mean = 0.0;
    for (double x : kept)
        mean += x;
    mean /= static_cast<double>(kept.size());
    double var = 0.0;
    for (double x : kept)
        var += (x - mean) * (x - mean);
    var /= static_cast<double>(kept.size());

    VolatilitySummary out;
    out.mu_k = mean;
    out.sigma_k = std::sqrt(var);
    out.n = static_cast<int>(kept.size());
    out.trim = outlier_trim;
    out.histogram = detail::histogram_fd(kept);
    return out;
}

// Log-spaced histogram of particle diameters normalized to a count density
// per decade (dN/dlogDp). Bins have exact width 1/bins_per_decade in log10
// units starting at the range minimum; the top bin may extend past the range
// maximum but only in-range diameters are counted in bins, the rest land in
// the overflow record.
inline SizeDistribution size_distribution(
    const std::vector<double>& diameters_um, double range_lo_um = 0.5,
    double range_hi_um = 19.8, int bins_per_decade = 16) {
    require(range_lo_um > 0.0 && range_hi_um > range_lo_um &&
                bins_per_decade >= 1,
            ErrorCode::invalid_input, "bad size distribution range");
    for (double d : diameters_um)
        require(std::isfinite(d) && d > 0.0, ErrorCode::invalid_input,
                "diameters must be positive");

    SizeDistribution out;
    const double width = 1.0 / static_cast<double>(bins_per_decade);
    const double log_lo = std::log10(range_lo_um);
    const double span = std::log10(range_hi_um) - log_lo;
    const auto bins =
        static_cast<std::int64_t>(std::ceil(span / width - 1e-12));
    out.log_bin_width = width;
    out.edges_um.resize(bins + 1);
    for (std::int64_t i = 0; i <= bins; ++i)
        out.edges_um[i] =
            std::pow(10.0, log_lo + width * static_cast<double>(i));
    out.edges_um.front() = range_lo_um;
    out.counts.assign(bins, 0);

    for (double d : diameters_um) {
        if (d < range_lo_um || d > range_hi_um) {
            ++out.overflow;
            continue;
        }
        auto idx =
            static_cast<std::int64_t>((std::log10(d) - log_lo) / width);
        ++out.counts[std::clamp<std::int64_t>(idx, 0, bins - 1)];
    }
    out.dn_dlogdp.resize(bins);
    for (std::int64_t i = 0; i < bins; ++i)
        out.dn_dlogdp[i] = static_cast<double>(out.counts[i]) / width;
    return out;
}

namespace detail {

// Least-squares Gaussian in log10 coordinates. Initialized by a parabola fit
// to the log of the positive bins, refined by damped Gauss-Newton on
// (amplitude, center, width) against all bins.
struct LogGaussian {
    double amplitude, center, width;
};

inline bool solve3(double m[3][3], double v[3], double out[3]) {
    int perm[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int best = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(m[perm[r]][col]) > std::abs(m[perm[best]][col]))
                best = r;
        std::swap(perm[col], perm[best]);
        const double piv = m[perm[col]][col];
        if (std::abs(piv) < 1e-300)
            return false;
        for (int r = col + 1; r < 3; ++r) {
            const double f = m[perm[r]][col] / piv;
            for (int c = col; c < 3; ++c)
                m[perm[r]][c] -= f * m[perm[col]][c];
            v[perm[r]] -= f * v[perm[col]];
        }
    }
    for (int col = 2; col >= 0; --col) {
        double s = v[perm[col]];
        for (int c = col + 1; c < 3; ++c)
            s -= m[perm[col]][c] * out[c];
        out[col] = s / m[perm[col]][col];
    }
    return std::isfinite(out[0]) && std::isfinite(out[1]) &&
           std::isfinite(out[2]);
}

inline double log_gaussian_sse(const LogGaussian& g,
                               const std::vector<double>& xs,
                               const std::vector<double>& ys) {
    double sse = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const double z = (xs[i] - g.center) / g.width;
        const double r = g.amplitude * std::exp(-0.5 * z * z) - ys[i];
        sse += r * r;
    }
    return sse;
}

inline LogGaussian fit_log_gaussian(const std::vector<double>& xs,
                                    const std::vector<double>& ys) {
    // Parabola a + b x + c x^2 through (x, ln y) over positive bins.
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, t0 = 0, t1 = 0, t2 = 0;
    double peak_y = 0.0, peak_x = xs.front();
    for (size_t i = 0; i < xs.size(); ++i) {
        if (ys[i] <= 0.0)
            continue;
        const double x = xs[i], ly = std::log(ys[i]);
        s0 += 1;
        s1 += x;
        s2 += x * x;
        s3 += x * x * x;
        s4 += x * x * x * x;
        t0 += ly;
        t1 += x * ly;
        t2 += x * x * ly;
        if (ys[i] > peak_y) {
            peak_y = ys[i];
            peak_x = x;
        }
    }
    double m[3][3] = {{s0, s1, s2}, {s1, s2, s3}, {s2, s3, s4}};
    double v[3] = {t0, t1, t2};
    double abc[3];
    LogGaussian g;
    if (solve3(m, v, abc) && abc[2] < -1e-12) {
        g.center = -abc[1] / (2.0 * abc[2]);
        g.width = std::sqrt(-1.0 / (2.0 * abc[2]));
        g.amplitude =
            std::exp(abc[0] - abc[1] * abc[1] / (4.0 * abc[2]));
    } else {
        // Concave-up or singular log fit; fall back to moment estimates.
        double wsum = 0, mean = 0;
        for (size_t i = 0; i < xs.size(); ++i) {
            wsum += ys[i];
            mean += ys[i] * xs[i];
        }
        mean /= wsum;
        double var = 0;
        for (size_t i = 0; i < xs.size(); ++i)
            var += ys[i] * (xs[i] - mean) * (xs[i] - mean);
        var /= wsum;
        g.center = mean;
        g.width = std::max(std::sqrt(var), 1e-6);
        g.amplitude = peak_y > 0.0 ? peak_y : 1.0;
        g.center = peak_y > 0.0 ? g.center : peak_x;
    }

    double sse = log_gaussian_sse(g, xs, ys);
    for (int iter = 0; iter < 100; ++iter) {
        double jtj[3][3] = {{0}}, jtr[3] = {0};
        for (size_t i = 0; i < xs.size(); ++i) {
            const double z = (xs[i] - g.center) / g.width;
            const double e = std::exp(-0.5 * z * z);
            const double r = g.amplitude * e - ys[i];
            const double j[3] = {e, g.amplitude * e * z / g.width,
                                 g.amplitude * e * z * z / g.width};
            for (int p = 0; p < 3; ++p) {
                jtr[p] += j[p] * r;
                for (int q = 0; q < 3; ++q)
                    jtj[p][q] += j[p] * j[q];
            }
        }
        double step[3];
        double rhs[3] = {-jtr[0], -jtr[1], -jtr[2]};
        if (!solve3(jtj, rhs, step))
            break;
        double scale = 1.0;
        bool accepted = false;
        for (int back = 0; back < 25; ++back) {
            LogGaussian cand{g.amplitude + scale * step[0],
                             g.center + scale * step[1],
                             g.width + scale * step[2]};
            if (std::abs(cand.width) > 1e-9) {
                const double cand_sse = log_gaussian_sse(cand, xs, ys);
                if (cand_sse <= sse) {
                    const bool done = sse - cand_sse <= 1e-14 * (sse + 1e-300);
                    g = cand;
                    sse = cand_sse;
                    accepted = !done;
                    break;
                }
            }
            scale *= 0.5;
        }
        if (!accepted)
            break;
    }
    return g;
}

} // namespace detail

// Peak of dN/dlogDp from a least-squares Gaussian fit in log diameter
// coordinates. For a log-normal number distribution this peak sits at the
// median diameter.
inline double fit_lognormal(const SizeDistribution& dist) {
    require(dist.edges_um.size() == dist.dn_dlogdp.size() + 1 &&
                !dist.dn_dlogdp.empty(),
            ErrorCode::invalid_input, "malformed size distribution");
    int positive = 0;
    for (double y : dist.dn_dlogdp)
        positive += y > 0.0 ? 1 : 0;
    require(positive >= 3, ErrorCode::insufficient_data,
            "need at least three non-empty bins to fit a mode");

    std::vector<double> xs(dist.dn_dlogdp.size());
    for (size_t i = 0; i < xs.size(); ++i)
        xs[i] = 0.5 * (std::log10(dist.edges_um[i]) +
                       std::log10(dist.edges_um[i + 1]));
    auto g = detail::fit_log_gaussian(xs, dist.dn_dlogdp);
    require(std::isfinite(g.center), ErrorCode::insufficient_data,
            "mode fit did not converge");
    return std::pow(10.0, g.center);
}

namespace detail {

// Continued fraction for the regularized incomplete beta, modified Lentz.
inline double beta_cf(double a, double b, double x) {
    constexpr double tiny = 1e-300, eps = 1e-16;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny)
        d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps)
            break;
    }
    return h;
}

inline double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0)
        return 0.0;
    if (x >= 1.0)
        return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                            std::lgamma(b) + a * std::log(x) +
                            b * std::log1p(-x);
    // Use whichever tail the continued fraction converges fast on.
    if (x < (a + 1.0) / (a + b + 2.0))
        return std::exp(ln_front) * beta_cf(a, b, x) / a;
    return 1.0 - std::exp(ln_front) * beta_cf(b, a, 1.0 - x) / b;
}

inline double t_two_sided_p(double t, double df) {
    const double x = df / (df + t * t);
    return std::clamp(reg_inc_beta(0.5 * df, 0.5, x), 0.0, 1.0);
}

inline double sample_mean(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs)
        s += x;
    return s / static_cast<double>(xs.size());
}

inline double sample_var(const std::vector<double>& xs, double mean) {
    double s = 0.0;
    for (double x : xs)
        s += (x - mean) * (x - mean);
    return s / (static_cast<double>(xs.size()) - 1.0);
}

} // namespace detail

// Two-sided t test. Paired mode tests the per-index differences; Welch mode
// compares independent samples without assuming equal variances.
inline TTestResult t_test(const std::vector<double>& a,
                          const std::vector<double>& b, TTestMode mode) {
    detail::require_finite_samples(a, "first sample");
    detail::require_finite_samples(b, "second sample");
    TTestResult out;
    if (mode == TTestMode::paired) {
        require(a.size() == b.size(), ErrorCode::invalid_input,
                "paired test needs equal sample counts");
        require(a.size() >= 2, ErrorCode::invalid_input,
                "paired test needs at least two pairs");
        std::vector<double> d(a.size());
        for (size_t i = 0; i < a.size(); ++i)
            d[i] = a[i] - b[i];
        const double md = detail::sample_mean(d);
        const double vd = detail::sample_var(d, md);
        require(vd > 0.0, ErrorCode::degenerate_test,
                "differences have zero variance");
        const auto n = static_cast<double>(d.size());
        out.t = md / std::sqrt(vd / n);
        out.df = n - 1.0;
    } else {
        require(a.size() >= 2 && b.size() >= 2, ErrorCode::invalid_input,
                "welch test needs at least two samples per group");
        const double ma = detail::sample_mean(a);
        const double mb = detail::sample_mean(b);
        const double va = detail::sample_var(a, ma);
        const double vb = detail::sample_var(b, mb);
        const auto na = static_cast<double>(a.size());
        const auto nb = static_cast<double>(b.size());
        const double se2 = va / na + vb / nb;
        require(se2 > 0.0, ErrorCode::degenerate_test,
                "both groups have zero variance");
        out.t = (ma - mb) / std::sqrt(se2);
        out.df = se2 * se2 /
                 ((va / na) * (va / na) / (na - 1.0) +
                  (vb / nb) * (vb / nb) / (nb - 1.0));
    }
    out.p = detail::t_two_sided_p(out.t, out.df);
    return out;
}

} // namespace holovol
