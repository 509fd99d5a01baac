#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <random>

#include "holovol/preprocess.hpp"

using namespace holovol;

namespace {

double rel_rms(const RealGrid& a, const RealGrid& b) {
    REQUIRE(a.size() == b.size());
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

RealGrid random_grid(int n, unsigned seed, double lo = 0.5, double hi = 1.5) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    RealGrid g(n, n);
    for (size_t i = 0; i < g.size(); ++i)
        g[i] = dist(rng);
    return g;
}

} // namespace

TEST_CASE("one level of the periodic transform reconstructs exactly") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int L : {16, 64, 254}) {
        std::vector<double> x(L);
        for (auto& v : x)
            v = dist(rng);
        std::vector<double> a, d;
        wavelet::dwt1_periodic(x, a, d);
        REQUIRE(a.size() == x.size() / 2);
        auto back = wavelet::idwt1_periodic(a, d);
        for (int i = 0; i < L; ++i)
            REQUIRE(back[i] == Catch::Approx(x[i]).margin(1e-10));
    }
}

TEST_CASE("the analysis filters are orthonormal") {
    // Energy must survive one analysis step; that is Parseval for the
    // filter bank and fails loudly if a coefficient is mistyped.
    std::mt19937 rng(12);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> x(128);
    for (auto& v : x)
        v = dist(rng);
    std::vector<double> a, d;
    wavelet::dwt1_periodic(x, a, d);
    double ex = 0.0, ead = 0.0;
    for (double v : x)
        ex += v * v;
    for (size_t i = 0; i < a.size(); ++i)
        ead += a[i] * a[i] + d[i] * d[i];
    CHECK(ead == Catch::Approx(ex).epsilon(1e-12));
}

TEST_CASE("lowpass projection is nearly idempotent") {
    // The periodic core is an exact orthogonal projection; the crop and
    // re-extension at the boundary perturb a second application slightly
    // (the filter is only near-symmetric), so the tolerance is loose.
    auto img = random_grid(96, 21);
    auto once = wavelet::lowpass_projection(img, 4);
    auto twice = wavelet::lowpass_projection(once, 4);
    CHECK(rel_rms(twice, once) < 2e-3);
}

TEST_CASE("lowpass projection preserves constants") {
    RealGrid img(64, 64, 3.75);
    auto smooth = wavelet::lowpass_projection(img, 6);
    for (size_t i = 0; i < smooth.size(); ++i)
        REQUIRE(smooth[i] == Catch::Approx(3.75).epsilon(1e-9));
}

TEST_CASE("lowpass projection handles non power of two sizes") {
    auto img = random_grid(100, 31);
    auto smooth = wavelet::lowpass_projection(img, 4);
    REQUIRE(smooth.rows() == 100);
    REQUIRE(smooth.cols() == 100);
    CHECK(grid_mean(smooth) == Catch::Approx(grid_mean(img)).epsilon(0.02));
}

TEST_CASE("shade estimate recovers a smooth polynomial under fringes") {
    const int n = 256;
    RealGrid truth(n, n), img(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double x = 2.0 * c / n - 1.0;
            const double y = 2.0 * r / n - 1.0;
            const double shade = 1.0 + 0.3 * x - 0.2 * y + 0.15 * x * y -
                                 0.1 * y * y;
            const double fringe =
                1.0 + 0.05 * std::sin(2.0 * std::numbers::pi * (r + c) / 8.0);
            truth(r, c) = shade;
            img(r, c) = shade * fringe;
        }
    auto est = estimate_shade(img, 6);
    CHECK(rel_rms(est, truth) < 0.02);
}

TEST_CASE("checkerboard structure is strongly suppressed") {
    const int n = 128;
    RealGrid img(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            img(r, c) = 1.0 + 0.2 * ((r + c) % 2 == 0 ? 1.0 : -1.0);
    auto est = estimate_shade(img, 6);
    double worst = 0.0;
    for (size_t i = 0; i < est.size(); ++i)
        worst = std::max(worst, std::abs(est[i] - 1.0));
    CHECK(worst < 0.2 / 20.0);
}

TEST_CASE("correcting a constant mono frame yields ones") {
    RawFrame f;
    f.pixels = RealGrid(64, 64, 1234.0);
    f.layout = SensorLayout::mono;
    auto out = correct_frame(f);
    for (size_t i = 0; i < out.pixels.size(); ++i)
        REQUIRE(out.pixels[i] == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("correction balances mosaic channel gains") {
    const int n = 128;
    const double gains[4] = {0.9, 1.0, 1.1, 1.2};
    RawFrame f;
    f.layout = SensorLayout::bayer;
    f.pixels = RealGrid(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double x = 2.0 * c / n - 1.0;
            const double shade = 1.0 - 0.3 * x * x;
            f.pixels(r, c) = 1000.0 * shade * gains[(r % 2) * 2 + (c % 2)];
        }
    auto out = correct_frame(f);

    double means[4] = {0, 0, 0, 0};
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            means[(r % 2) * 2 + (c % 2)] += out.pixels(r, c);
    for (double& m : means)
        m /= n * n / 4.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(std::abs(means[i] - means[j]) < 0.01);
}

TEST_CASE("correction is invariant under exposure scaling") {
    auto img = random_grid(64, 5, 800.0, 1200.0);
    RawFrame f1, f2;
    f1.pixels = img;
    f1.layout = SensorLayout::mono;
    f2.pixels = img;
    for (size_t i = 0; i < f2.pixels.size(); ++i)
        f2.pixels[i] *= 7.5;
    f2.layout = SensorLayout::mono;
    auto o1 = correct_frame(f1);
    auto o2 = correct_frame(f2);
    CHECK(rel_rms(o2.pixels, o1.pixels) < 1e-12);
}

TEST_CASE("correction preserves fringes while removing shade") {
    const int n = 256;
    RawFrame f;
    f.layout = SensorLayout::mono;
    f.pixels = RealGrid(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const double x = 2.0 * c / n - 1.0;
            const double shade = 1.0 + 0.4 * x;
            const double fringe =
                1.0 + 0.1 * std::cos(2.0 * std::numbers::pi * c / 10.0);
            f.pixels(r, c) = 2000.0 * shade * fringe;
        }
    auto out = correct_frame(f);
    RealGrid expect(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            expect(r, c) =
                1.0 + 0.1 * std::cos(2.0 * std::numbers::pi * c / 10.0);
    CHECK(rel_rms(out.pixels, expect) < 0.02);
}

TEST_CASE("degenerate frames are rejected with the right codes") {
    SECTION("negative pixels") {
        RawFrame f;
        f.pixels = RealGrid(64, 64, 100.0);
        f.pixels(3, 4) = -5.0;
        f.layout = SensorLayout::mono;
        try {
            correct_frame(f);
            FAIL("expected degenerate_frame");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::degenerate_frame);
        }
    }
    SECTION("all zero frame") {
        RawFrame f;
        f.pixels = RealGrid(64, 64, 0.0);
        f.layout = SensorLayout::mono;
        CHECK_THROWS_AS(correct_frame(f), Error);
    }
    SECTION("image smaller than the decomposition depth") {
        RealGrid tiny(16, 16, 1.0);
        CHECK_THROWS_AS(estimate_shade(tiny, 6), Error);
    }
    SECTION("odd mosaic dimensions") {
        RawFrame f;
        f.pixels = RealGrid(65, 65, 100.0);
        f.layout = SensorLayout::bayer;
        try {
            correct_frame(f);
            FAIL("expected invalid_input");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::invalid_input);
        }
    }
}
